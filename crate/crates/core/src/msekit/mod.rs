//! Exact mean-square error of the truncated expansion and its factorial bound.
//!
//! For Wiener components only, with the same truncation `p` at every level,
//!
//! ```text
//! E_k^p = I_k - Σ_{j ∈ {0..p}^k} C_j Σ_{σ ∈ G} C_{j∘σ}
//! ```
//!
//! where `G` permutes positions inside each class of equal labels. Every
//! product `C_j C_{j∘σ}` has the same irrational factors squared, so the
//! whole expression is an exact rational multiple of `(T-t)^{k+2Σq}`.

pub mod cases;

pub use cases::{cases_for, enumerated_case_mse, find_case, CaseEntry, CASES};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::coeffs::{
    captured_energy_core, coefficient_table, kernel_norm_core, sqrt_product, CoeffTable, DegreeCap,
    Interval, WeightSpec,
};
use crate::error::{Error, Result};
use crate::expansion::{block_permutations, IndexPattern, CERTIFIED_MULTIPLICITY};
use crate::polycore::{rational_to_f64, Rational};

/// Position permutations that keep every label in place.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationGroup {
    /// Classes of equal labels, 0-based positions.
    pub blocks: Vec<Vec<usize>>,
    /// `σ[l]` is the source position for `l`.
    pub elements: Vec<Vec<usize>>,
}

impl PermutationGroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }
}

pub fn allowed_permutations(pattern: &IndexPattern) -> Result<PermutationGroup> {
    if pattern.has_time_component() {
        return Err(Error::TimeComponent {
            pattern: pattern.to_string(),
        });
    }
    let blocks = pattern.blocks();
    let elements = block_permutations(&blocks, pattern.k());
    Ok(PermutationGroup { blocks, elements })
}

#[derive(Clone, Debug)]
pub struct MseReport {
    pub pattern: IndexPattern,
    pub p: usize,
    pub weights: WeightSpec,
    pub length: Rational,
    /// `E_k^p` exactly.
    pub exact: Rational,
    /// `E_k^p / (T-t)^{k+2Σq}`, independent of the interval.
    pub exact_core: Rational,
    pub exact_f64: f64,
    /// `k! (I_k - Σ C^2)` with the same truncation at every level.
    pub bound: Rational,
    pub bound_f64: f64,
    pub kernel_norm: Rational,
    pub kernel_norm_f64: f64,
    /// Label of the enumerated case, e.g. `(III).2`, when `k <= 5`.
    pub case_id: Option<&'static str>,
    /// False for `k > 5`, where the construction is unchecked.
    pub certified: bool,
}

fn length_power(interval: &Interval, w: &WeightSpec) -> Rational {
    num_traits::pow(interval.length(), w.coeff_half_power() as usize)
}

/// `Σ_j ∏(2j+1) core_j Σ_σ core_{j∘σ} / 2^{2b}` over `j ∈ {0..p}^k`.
///
/// Cores are brought to a common denominator so the double sum runs on integers.
pub fn permutation_sum_core(
    pattern: &IndexPattern,
    p: usize,
    table: &CoeffTable,
) -> Result<Rational> {
    let group = allowed_permutations(pattern)?;
    let table = checked_table(pattern, p, table)?;
    let denom = table
        .cores()
        .iter()
        .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let ints: Vec<BigInt> = table
        .cores()
        .iter()
        .map(|c| c.numer() * (&denom / c.denom()))
        .collect();
    let k = pattern.k();
    let total: BigInt = (0..ints.len())
        .into_par_iter()
        .filter(|&idx| !ints[idx].is_zero())
        .map(|idx| {
            let j = table.multi_index(idx);
            let j = j.entries();
            let mut inner = BigInt::zero();
            let mut permuted = vec![0usize; k];
            for sigma in &group.elements {
                for (slot, &src) in permuted.iter_mut().zip(sigma) {
                    *slot = j[src];
                }
                let pidx = table
                    .index_of(&permuted)
                    .expect("permutation stays in range");
                inner += &ints[pidx];
            }
            &ints[idx] * inner * BigInt::from(sqrt_product(j))
        })
        .reduce(BigInt::zero, |a, b| a + b);
    let two = table.weights().coeff_two_power();
    let scale = &denom * &denom * (BigInt::one() << (2 * two) as usize);
    Ok(Rational::new(total, scale))
}

fn checked_table(pattern: &IndexPattern, p: usize, table: &CoeffTable) -> Result<CoeffTable> {
    if table.k() != pattern.k() {
        return Err(Error::LengthMismatch {
            expected: pattern.k(),
            got: table.k(),
        });
    }
    if table.p() == p {
        Ok(table.clone())
    } else {
        table.truncate(p)
    }
}

/// Exact mean-square error, computing the coefficient table.
pub fn exact_mse(
    pattern: &IndexPattern,
    p: usize,
    w: &WeightSpec,
    interval: &Interval,
    cap: &DegreeCap,
) -> Result<MseReport> {
    if pattern.k() != w.k() {
        return Err(Error::LengthMismatch {
            expected: pattern.k(),
            got: w.k(),
        });
    }
    allowed_permutations(pattern)?;
    let table = coefficient_table(w, p, cap)?;
    exact_mse_with_table(pattern, p, &table, interval)
}

/// Exact mean-square error from a table of order `>= p`.
pub fn exact_mse_with_table(
    pattern: &IndexPattern,
    p: usize,
    table: &CoeffTable,
    interval: &Interval,
) -> Result<MseReport> {
    let w = table.weights().clone();
    let norm_core = kernel_norm_core(&w);
    let captured = permutation_sum_core(pattern, p, table)?;
    let exact_core = &norm_core - captured;
    let bound_core = bound_core(table, &vec![p; pattern.k()], &norm_core)?;
    let len_pow = length_power(interval, &w);
    let exact = &exact_core * &len_pow;
    let bound = bound_core * &len_pow;
    let kernel_norm = norm_core * &len_pow;
    Ok(MseReport {
        pattern: pattern.clone(),
        p,
        length: interval.length(),
        exact_f64: rational_to_f64(&exact),
        bound_f64: rational_to_f64(&bound),
        kernel_norm_f64: rational_to_f64(&kernel_norm),
        exact,
        exact_core,
        bound,
        kernel_norm,
        case_id: find_case(pattern).map(|c| c.label),
        certified: pattern.k() <= CERTIFIED_MULTIPLICITY,
        weights: w,
    })
}

fn bound_core(table: &CoeffTable, bounds: &[usize], norm_core: &Rational) -> Result<Rational> {
    let k = table.k();
    let factorial: BigInt = (1..=k).map(BigInt::from).product();
    let residual = norm_core - captured_energy_core(table, bounds)?;
    Ok(residual * factorial)
}

/// Upper bound `k! (I_k - Σ_{j_l <= p_l} C_j^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MseBound {
    pub exact: Rational,
    pub value: f64,
    pub truncations: Vec<usize>,
}

/// Bound with per-level truncations, computing the table.
///
/// Patterns containing the time component need `T - t < 1`, and at least one
/// Wiener component must be present.
pub fn mse_bound(
    pattern: &IndexPattern,
    truncations: &[usize],
    w: &WeightSpec,
    interval: &Interval,
    cap: &DegreeCap,
) -> Result<MseBound> {
    check_bound_preconditions(pattern, truncations, interval)?;
    if w.k() != pattern.k() {
        return Err(Error::LengthMismatch {
            expected: pattern.k(),
            got: w.k(),
        });
    }
    let p_max = truncations.iter().copied().max().unwrap_or(0);
    let table = coefficient_table(w, p_max, cap)?;
    mse_bound_with_table(pattern, truncations, &table, interval)
}

pub fn mse_bound_with_table(
    pattern: &IndexPattern,
    truncations: &[usize],
    table: &CoeffTable,
    interval: &Interval,
) -> Result<MseBound> {
    check_bound_preconditions(pattern, truncations, interval)?;
    let norm_core = kernel_norm_core(table.weights());
    let core = bound_core(table, truncations, &norm_core)?;
    let exact = core * length_power(interval, table.weights());
    Ok(MseBound {
        value: rational_to_f64(&exact),
        exact,
        truncations: truncations.to_vec(),
    })
}

/// Checks the bound's requirements without touching coefficients.
pub fn check_bound_preconditions(
    pattern: &IndexPattern,
    truncations: &[usize],
    interval: &Interval,
) -> Result<()> {
    if truncations.len() != pattern.k() {
        return Err(Error::LengthMismatch {
            expected: pattern.k(),
            got: truncations.len(),
        });
    }
    if pattern.labels().iter().all(|&l| l == 0) {
        return Err(Error::Precondition(
            "the bound needs at least one Wiener component (a nonzero label)".into(),
        ));
    }
    if pattern.has_time_component() && interval.length() >= Rational::one() {
        return Err(Error::Precondition(format!(
            "patterns with a time component require T - t < 1 for the k! bound (got {})",
            interval.length()
        )));
    }
    Ok(())
}

/// True if `a <= b` for exact values; convenience for dominance checks.
pub fn dominated(a: &Rational, b: &Rational) -> bool {
    !(a - b).is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polycore::{int, rat};

    fn pat(labels: &[u32]) -> IndexPattern {
        IndexPattern::new(labels.to_vec()).unwrap()
    }

    fn unit_interval() -> Interval {
        Interval::with_length(int(1)).unwrap()
    }

    #[test]
    fn group_examples() {
        assert_eq!(allowed_permutations(&pat(&[1, 2, 3])).unwrap().order(), 1);
        let g = allowed_permutations(&pat(&[1, 1, 2])).unwrap();
        assert_eq!(g.elements, vec![vec![0, 1, 2], vec![1, 0, 2]]);
        assert_eq!(
            allowed_permutations(&pat(&[4, 4, 4, 2, 2]))
                .unwrap()
                .order(),
            12
        );
        assert!(matches!(
            allowed_permutations(&pat(&[0, 1])),
            Err(Error::TimeComponent { .. })
        ));
    }

    #[test]
    fn double_integral_distinct_components() {
        let w = WeightSpec::unit(2).unwrap();
        for p in 0..6 {
            let r = exact_mse(
                &pat(&[1, 2]),
                p,
                &w,
                &unit_interval(),
                &DegreeCap::default(),
            )
            .unwrap();
            assert_eq!(r.exact, rat(1, 4 * (2 * p as i64 + 1)), "p={p}");
            assert_eq!(r.case_id, Some("(I)"));
            assert_eq!(r.bound, &r.exact * int(2));
        }
    }

    #[test]
    fn double_integral_same_component_is_exact() {
        let w = WeightSpec::unit(2).unwrap();
        for p in 0..5 {
            let r = exact_mse(
                &pat(&[3, 3]),
                p,
                &w,
                &unit_interval(),
                &DegreeCap::default(),
            )
            .unwrap();
            assert!(r.exact.is_zero());
            assert_eq!(r.case_id, Some("(II)"));
        }
    }

    #[test]
    fn triple_distinct_p0() {
        let len = rat(3, 2);
        let interval = Interval::with_length(len.clone()).unwrap();
        let r = exact_mse(
            &pat(&[1, 2, 3]),
            0,
            &WeightSpec::unit(3).unwrap(),
            &interval,
            &DegreeCap::default(),
        )
        .unwrap();
        let cube = &len * &len * &len;
        assert_eq!(r.exact, cube.clone() * rat(5, 36));
        assert_eq!(r.kernel_norm, cube / int(6));
    }

    #[test]
    fn time_component_rejected_for_exact_mse() {
        let err = exact_mse(
            &pat(&[0, 1]),
            1,
            &WeightSpec::unit(2).unwrap(),
            &unit_interval(),
            &DegreeCap::default(),
        );
        assert!(matches!(err, Err(Error::TimeComponent { .. })));
    }

    #[test]
    fn bound_preconditions() {
        let w = WeightSpec::unit(2).unwrap();
        let two = Interval::with_length(int(2)).unwrap();
        let half = Interval::with_length(rat(1, 2)).unwrap();
        let cap = DegreeCap::default();
        assert!(matches!(
            mse_bound(&pat(&[0, 1]), &[1, 1], &w, &two, &cap),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            mse_bound(&pat(&[0, 0]), &[1, 1], &w, &half, &cap),
            Err(Error::Precondition(_))
        ));
        assert!(mse_bound(&pat(&[0, 1]), &[1, 2], &w, &half, &cap).is_ok());
        assert!(mse_bound(&pat(&[1, 2]), &[1], &w, &half, &cap).is_err());
    }

    #[test]
    fn single_integral_bound_equals_mse() {
        let w = WeightSpec::new(vec![2]).unwrap();
        let interval = Interval::with_length(rat(7, 3)).unwrap();
        for p in 0..4 {
            let r = exact_mse(&pat(&[1]), p, &w, &interval, &DegreeCap::default()).unwrap();
            assert_eq!(r.bound, r.exact);
            let b = mse_bound(&pat(&[1]), &[p], &w, &interval, &DegreeCap::default()).unwrap();
            assert_eq!(b.exact, r.exact);
        }
    }

    #[test]
    fn per_level_truncations() {
        let w = WeightSpec::unit(2).unwrap();
        let cap = DegreeCap::default();
        let interval = unit_interval();
        let b11 = mse_bound(&pat(&[1, 2]), &[1, 1], &w, &interval, &cap).unwrap();
        let b12 = mse_bound(&pat(&[1, 2]), &[1, 2], &w, &interval, &cap).unwrap();
        let b22 = mse_bound(&pat(&[1, 2]), &[2, 2], &w, &interval, &cap).unwrap();
        assert!(b12.exact <= b11.exact);
        assert!(b22.exact <= b12.exact);
    }
}
