//! Hand-transcribed case list for multiplicities 1 to 5.
//!
//! Each case names the equality classes of `(i_1, ..., i_k)` (1-based
//! positions, singletons omitted) in the order the nested permutation sums
//! are written. Labels keep the customary numbering, so `(III).1` for `k = 3`
//! is `i_1 = i_2 != i_3`.
//!
//! [`enumerated_case_mse`] evaluates these formulas directly. It shares only
//! the coefficient table and kernel norm with the permutation engine in the
//! parent module and exists to cross-check it.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::coeffs::{kernel_norm_core, sqrt_product, CoeffTable, Interval, MultiIndex};
use crate::error::{Error, Result};
use crate::expansion::IndexPattern;
use crate::polycore::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CaseEntry {
    pub k: usize,
    pub label: &'static str,
    /// Equality classes with at least two members, 1-based, in summation order.
    pub groups: &'static [&'static [usize]],
}

macro_rules! case {
    ($k:expr, $label:expr, [$([$($pos:expr),+]),*]) => {
        CaseEntry { k: $k, label: $label, groups: &[$(&[$($pos),+]),*] }
    };
}

pub const CASES: &[CaseEntry] = &[
    case!(1, "(I)", []),
    // k = 2
    case!(2, "(I)", []),
    case!(2, "(II)", [[1, 2]]),
    // k = 3
    case!(3, "(I)", []),
    case!(3, "(II)", [[1, 2, 3]]),
    case!(3, "(III).1", [[1, 2]]),
    case!(3, "(III).2", [[2, 3]]),
    case!(3, "(III).3", [[1, 3]]),
    // k = 4
    case!(4, "(I)", []),
    case!(4, "(II)", [[1, 2, 3, 4]]),
    case!(4, "(III).1", [[1, 2]]),
    case!(4, "(III).2", [[1, 3]]),
    case!(4, "(III).3", [[1, 4]]),
    case!(4, "(III).4", [[2, 3]]),
    case!(4, "(III).5", [[2, 4]]),
    case!(4, "(III).6", [[3, 4]]),
    case!(4, "(IV).1", [[1, 2, 3]]),
    case!(4, "(IV).2", [[2, 3, 4]]),
    case!(4, "(IV).3", [[1, 2, 4]]),
    case!(4, "(IV).4", [[1, 3, 4]]),
    case!(4, "(V).1", [[1, 2], [3, 4]]),
    case!(4, "(V).2", [[1, 3], [2, 4]]),
    case!(4, "(V).3", [[1, 4], [2, 3]]),
    // k = 5
    case!(5, "(I)", []),
    case!(5, "(II)", [[1, 2, 3, 4, 5]]),
    case!(5, "(III).1", [[1, 2]]),
    case!(5, "(III).2", [[1, 3]]),
    case!(5, "(III).3", [[1, 4]]),
    case!(5, "(III).4", [[1, 5]]),
    case!(5, "(III).5", [[2, 3]]),
    case!(5, "(III).6", [[2, 4]]),
    case!(5, "(III).7", [[2, 5]]),
    case!(5, "(III).8", [[3, 4]]),
    case!(5, "(III).9", [[3, 5]]),
    case!(5, "(III).10", [[4, 5]]),
    case!(5, "(IV).1", [[1, 2, 3]]),
    case!(5, "(IV).2", [[1, 2, 4]]),
    case!(5, "(IV).3", [[1, 2, 5]]),
    case!(5, "(IV).4", [[2, 3, 4]]),
    case!(5, "(IV).5", [[2, 3, 5]]),
    case!(5, "(IV).6", [[2, 4, 5]]),
    case!(5, "(IV).7", [[3, 4, 5]]),
    case!(5, "(IV).8", [[1, 3, 5]]),
    case!(5, "(IV).9", [[1, 3, 4]]),
    case!(5, "(IV).10", [[1, 4, 5]]),
    case!(5, "(V).1", [[1, 2, 3, 4]]),
    case!(5, "(V).2", [[1, 2, 3, 5]]),
    case!(5, "(V).3", [[1, 2, 4, 5]]),
    case!(5, "(V).4", [[1, 3, 4, 5]]),
    case!(5, "(V).5", [[2, 3, 4, 5]]),
    case!(5, "(VI).1", [[1, 2], [3, 4]]),
    case!(5, "(VI).2", [[1, 3], [2, 4]]),
    case!(5, "(VI).3", [[1, 4], [2, 3]]),
    case!(5, "(VI).4", [[1, 2], [3, 5]]),
    case!(5, "(VI).5", [[1, 5], [2, 3]]),
    case!(5, "(VI).6", [[2, 5], [1, 3]]),
    case!(5, "(VI).7", [[2, 5], [1, 4]]),
    case!(5, "(VI).8", [[1, 2], [4, 5]]),
    case!(5, "(VI).9", [[2, 4], [1, 5]]),
    case!(5, "(VI).10", [[1, 4], [3, 5]]),
    case!(5, "(VI).11", [[1, 3], [4, 5]]),
    case!(5, "(VI).12", [[1, 5], [3, 4]]),
    case!(5, "(VI).13", [[2, 3], [4, 5]]),
    case!(5, "(VI).14", [[2, 4], [3, 5]]),
    case!(5, "(VI).15", [[2, 5], [3, 4]]),
    case!(5, "(VII).1", [[4, 5], [1, 2, 3]]),
    case!(5, "(VII).2", [[3, 5], [1, 2, 4]]),
    case!(5, "(VII).3", [[3, 4], [1, 2, 5]]),
    case!(5, "(VII).4", [[1, 5], [2, 3, 4]]),
    case!(5, "(VII).5", [[1, 4], [2, 3, 5]]),
    case!(5, "(VII).6", [[1, 3], [2, 4, 5]]),
    case!(5, "(VII).7", [[1, 2], [3, 4, 5]]),
    case!(5, "(VII).8", [[2, 4], [1, 3, 5]]),
    case!(5, "(VII).9", [[2, 5], [1, 3, 4]]),
    case!(5, "(VII).10", [[2, 3], [1, 4, 5]]),
];

pub fn cases_for(k: usize) -> impl Iterator<Item = &'static CaseEntry> {
    CASES.iter().filter(move |c| c.k == k)
}

impl CaseEntry {
    /// True when the pattern's label equalities are exactly this case's classes.
    pub fn matches(&self, labels: &[u32]) -> bool {
        if labels.len() != self.k || labels.contains(&0) {
            return false;
        }
        let class_of = |pos: usize| self.groups.iter().position(|g| g.contains(&(pos + 1)));
        for a in 0..self.k {
            for b in a + 1..self.k {
                let same_class = match (class_of(a), class_of(b)) {
                    (Some(x), Some(y)) => x == y,
                    _ => false,
                };
                if (labels[a] == labels[b]) != same_class {
                    return false;
                }
            }
        }
        true
    }

    /// Condition in words, e.g. `i1=i2, i3=i4 (others distinct)`.
    pub fn condition(&self) -> String {
        if self.groups.is_empty() {
            return if self.k == 1 {
                "single component".into()
            } else {
                "pairwise distinct".into()
            };
        }
        let mut groups: Vec<Vec<usize>> = self
            .groups
            .iter()
            .map(|g| {
                let mut g = g.to_vec();
                g.sort_unstable();
                g
            })
            .collect();
        groups.sort();
        let parts: Vec<String> = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|p| format!("i{p}"))
                    .collect::<Vec<_>>()
                    .join("=")
            })
            .collect();
        let covered: usize = groups.iter().map(Vec::len).sum();
        match (covered == self.k, groups.len()) {
            (true, 1) => parts.join(", "),
            (true, _) => format!("{} (classes distinct)", parts.join(", ")),
            (false, _) => format!("{} (others distinct)", parts.join(", ")),
        }
    }

    /// Size of the permutation group, `∏ |class|!`.
    pub fn group_order(&self) -> usize {
        self.groups
            .iter()
            .map(|g| (1..=g.len()).product::<usize>())
            .product()
    }
}

/// The transcribed case for an all-Wiener pattern with `k <= 5`.
pub fn find_case(pattern: &IndexPattern) -> Option<&'static CaseEntry> {
    cases_for(pattern.k()).find(|c| c.matches(pattern.labels()))
}

/// Mean-square error from the transcribed formula of the matching case.
///
/// Returns the exact value as a rational (for rational interval lengths) and the case.
pub fn enumerated_case_mse(
    pattern: &IndexPattern,
    p: usize,
    table: &CoeffTable,
    interval: &Interval,
) -> Result<(Rational, &'static CaseEntry)> {
    if pattern.labels().contains(&0) {
        return Err(Error::TimeComponent {
            pattern: pattern.to_string(),
        });
    }
    let case = find_case(pattern).ok_or_else(|| Error::UnmatchedCase(pattern.to_string()))?;
    if table.k() != pattern.k() || table.p() < p {
        return Err(Error::Precondition(format!(
            "table (k={}, p={}) does not cover k={}, p={p}",
            table.k(),
            table.p(),
            pattern.k()
        )));
    }
    // c(subscript) is C with the customary outermost-first subscript.
    let c = |sub: &[usize]| -> Rational {
        let j = MultiIndex::from_subscript(sub);
        table.core(j.entries()).expect("within table").clone()
    };
    let mut sum = Rational::zero();
    let range = 0..=p;
    match (case.k, case.label) {
        (1, _) => {
            for j1 in range {
                sum += weighted(&[j1], c(&[j1]) * c(&[j1]));
            }
        }
        (2, "(I)") => {
            for j1 in range.clone() {
                for j2 in range.clone() {
                    sum += weighted(&[j1, j2], c(&[j2, j1]) * c(&[j2, j1]));
                }
            }
        }
        (2, "(II)") => {
            for j1 in range.clone() {
                for j2 in range.clone() {
                    let a = c(&[j2, j1]);
                    sum += weighted(&[j1, j2], &a * &a + &a * c(&[j1, j2]));
                }
            }
        }
        (3, label) => {
            for j1 in range.clone() {
                for j2 in range.clone() {
                    for j3 in range.clone() {
                        let base = c(&[j3, j2, j1]);
                        let extra = match label {
                            "(I)" => Rational::zero(),
                            "(II)" => {
                                c(&[j3, j1, j2])
                                    + c(&[j2, j3, j1])
                                    + c(&[j2, j1, j3])
                                    + c(&[j1, j2, j3])
                                    + c(&[j1, j3, j2])
                            }
                            "(III).1" => c(&[j3, j1, j2]),
                            "(III).2" => c(&[j2, j3, j1]),
                            "(III).3" => c(&[j1, j2, j3]),
                            other => unreachable!("no k=3 case {other}"),
                        };
                        sum += weighted(&[j1, j2, j3], &base * (&base + extra));
                    }
                }
            }
        }
        _ => {
            // Nested Σ over permutations of each listed group of modes.
            let k = case.k;
            let total = (p + 1).pow(k as u32);
            for idx in 0..total {
                let mut j = vec![0usize; k];
                let mut rem = idx;
                for slot in j.iter_mut().rev() {
                    *slot = rem % (p + 1);
                    rem /= p + 1;
                }
                let base = table.core(&j)?.clone();
                if base.is_zero() {
                    continue;
                }
                let mut inner = Rational::zero();
                nested_group_sum(case.groups, &j, &mut |permuted| {
                    inner += table.core(permuted).expect("within table");
                });
                sum += weighted(&j, base * inner);
            }
        }
    }
    let w = table.weights();
    let n = w.coeff_half_power();
    let two = w.coeff_two_power();
    let captured = sum / Rational::from_integer(BigInt::one() << (2 * two) as usize);
    let core = kernel_norm_core(w) - captured;
    let len_pow = num_traits::pow(interval.length(), n as usize);
    Ok((core * len_pow, case))
}

fn weighted(j: &[usize], value: Rational) -> Rational {
    value * BigInt::from(sqrt_product(j))
}

/// Calls `f` on every tuple obtained by permuting the values at each group's
/// positions, groups nested in the listed order.
fn nested_group_sum(groups: &[&[usize]], j: &[usize], f: &mut dyn FnMut(&[usize])) {
    let Some((first, rest)) = groups.split_first() else {
        f(j);
        return;
    };
    let positions: Vec<usize> = first.iter().map(|p| p - 1).collect();
    let mut values: Vec<usize> = positions.iter().map(|&p| j[p]).collect();
    heap_permute(values.len(), &mut values, &mut |perm| {
        let mut next = j.to_vec();
        for (&pos, &v) in positions.iter().zip(perm) {
            next[pos] = v;
        }
        nested_group_sum(rest, &next, f);
    });
}

/// Heap's algorithm: visits all `n!` orderings (repeats included when values coincide).
fn heap_permute(n: usize, values: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if n <= 1 {
        f(values);
        return;
    }
    for i in 0..n - 1 {
        heap_permute(n - 1, values, f);
        if n.is_multiple_of(2) {
            values.swap(i, n - 1);
        } else {
            values.swap(0, n - 1);
        }
    }
    heap_permute(n - 1, values, f);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_counts() {
        let counts: Vec<usize> = (1..=5).map(|k| cases_for(k).count()).collect();
        assert_eq!(counts, vec![1, 2, 5, 15, 52]);
    }

    #[test]
    fn every_case_is_a_distinct_partition() {
        for k in 1..=5 {
            let cases: Vec<_> = cases_for(k).collect();
            for (a, ca) in cases.iter().enumerate() {
                for cb in &cases[a + 1..] {
                    let mut ga: Vec<Vec<usize>> = ca
                        .groups
                        .iter()
                        .map(|g| {
                            let mut v = g.to_vec();
                            v.sort();
                            v
                        })
                        .collect();
                    let mut gb: Vec<Vec<usize>> = cb
                        .groups
                        .iter()
                        .map(|g| {
                            let mut v = g.to_vec();
                            v.sort();
                            v
                        })
                        .collect();
                    ga.sort();
                    gb.sort();
                    assert_ne!(ga, gb, "{} and {} coincide", ca.label, cb.label);
                }
            }
        }
    }

    #[test]
    fn matching_by_labels() {
        let p = IndexPattern::new(vec![7, 3, 7, 3, 9]).unwrap();
        assert_eq!(find_case(&p).unwrap().label, "(VI).2");
        let p = IndexPattern::new(vec![1, 1, 2]).unwrap();
        assert_eq!(find_case(&p).unwrap().label, "(III).1");
        assert!(find_case(&IndexPattern::new(vec![0, 1]).unwrap()).is_none());
        assert!(find_case(&IndexPattern::new(vec![1; 6]).unwrap()).is_none());
    }

    #[test]
    fn heap_visits_all_orderings() {
        let mut seen = Vec::new();
        heap_permute(3, &mut vec![1, 2, 3], &mut |p| seen.push(p.to_vec()));
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn conditions_read_naturally() {
        let c = cases_for(4).find(|c| c.label == "(V).3").unwrap();
        assert_eq!(c.condition(), "i1=i4, i2=i3 (classes distinct)");
        assert_eq!(c.group_order(), 4);
        let c = cases_for(3).find(|c| c.label == "(II)").unwrap();
        assert_eq!(c.condition(), "i1=i2=i3");
    }
}
