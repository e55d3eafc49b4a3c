//! Truncated expansion of an iterated Itô integral.
//!
//! For a coincidence pattern `(i_1, ..., i_k)` the truncated approximation is
//!
//! ```text
//! J^p = Σ_{j ∈ {0..p}^k} C_j Σ_M (-1)^{|M|} ∏_{(a,b) ∈ M} 1{j_a = j_b} ∏_{l free in M} ζ_{j_l}^{(i_l)}
//! ```
//!
//! where `M` runs over the partial matchings of positions whose labels agree
//! and are nonzero (the empty matching included). Label `0` stands for the
//! time component `w_τ = τ`; it never pairs and its `ζ` is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coeffs::{sqrt_product, CoeffTable, CoeffValue, Interval};
use crate::error::{Error, Result};
use crate::polycore::{rational_to_f64, Rational};

/// Multiplicities up to this value have been checked term by term against the
/// published expansions; larger ones are produced by the same rule but are
/// not independently certified.
pub const CERTIFIED_MULTIPLICITY: usize = 5;

/// Component labels `(i_1, ..., i_k)`; `0` is time, `>= 1` a Wiener component.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndexPattern {
    labels: Vec<u32>,
}

impl IndexPattern {
    pub fn new(labels: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Multiplicity(0));
        }
        Ok(IndexPattern { labels })
    }

    /// Comma separated labels, e.g. `1,1,2`.
    pub fn parse(s: &str) -> Result<Self> {
        let labels = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Parse(s.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels)
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Positions (0-based) grouped by equal nonzero label, ordered by first occurrence.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<u32> = Vec::new();
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (pos, &label) in self.labels.iter().enumerate() {
            if label == 0 {
                continue;
            }
            if !groups.contains_key(&label) {
                order.push(label);
            }
            groups.entry(label).or_default().push(pos);
        }
        order
            .into_iter()
            .map(|l| groups.remove(&l).unwrap_or_default())
            .collect()
    }

    pub fn zero_positions(&self) -> Vec<usize> {
        (0..self.k()).filter(|&l| self.labels[l] == 0).collect()
    }

    pub fn has_time_component(&self) -> bool {
        self.labels.contains(&0)
    }

    /// Distinct labels in increasing order (including `0` if present).
    pub fn distinct_labels(&self) -> Vec<u32> {
        self.labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The pattern with labels renumbered by first occurrence (`0` kept as `0`).
    pub fn canonical(&self) -> IndexPattern {
        let mut map = BTreeMap::new();
        let mut next = 1;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    return 0;
                }
                *map.entry(l).or_insert_with(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        IndexPattern { labels }
    }
}

impl fmt::Display for IndexPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.labels.iter().map(u32::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Every permutation of positions that only moves positions within one block.
///
/// Each permutation `σ` is a vector with `σ[l]` the source position for `l`;
/// applied to a mode tuple it gives `(j_{σ[0]}, ..., j_{σ[k-1]})`.
pub fn block_permutations(blocks: &[Vec<usize>], k: usize) -> Vec<Vec<usize>> {
    let mut perms = vec![(0..k).collect::<Vec<usize>>()];
    for block in blocks {
        let arrangements = permutations_of(block);
        perms = perms
            .iter()
            .flat_map(|base| {
                arrangements.iter().map(move |arr| {
                    let mut sigma = base.clone();
                    for (&pos, &src) in block.iter().zip(arr) {
                        sigma[pos] = src;
                    }
                    sigma
                })
            })
            .collect();
    }
    perms
}

fn permutations_of(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations_of(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// One signed correction term: a set of disjoint equal-label pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MatchingTerm {
    /// 0-based position pairs `(a, b)` with `a < b`, sorted.
    pub pairs: Vec<(usize, usize)>,
    /// Unmatched positions, sorted.
    pub free: Vec<usize>,
}

impl MatchingTerm {
    /// `(-1)^{|pairs|}`.
    pub fn sign(&self) -> i32 {
        if self.pairs.len().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }
}

/// All partial matchings inside the equal-nonzero-label blocks, empty matching first,
/// then by number of pairs and lexicographically.
pub fn enumerate_matchings(pattern: &IndexPattern) -> Vec<MatchingTerm> {
    let per_block: Vec<Vec<Vec<(usize, usize)>>> = pattern
        .blocks()
        .iter()
        .map(|b| partial_matchings(b))
        .collect();
    let mut combined: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for options in &per_block {
        combined = combined
            .iter()
            .flat_map(|base| {
                options.iter().map(move |m| {
                    let mut v = base.clone();
                    v.extend_from_slice(m);
                    v
                })
            })
            .collect();
    }
    let mut terms: Vec<MatchingTerm> = combined
        .into_iter()
        .map(|mut pairs| {
            pairs.sort_unstable();
            let matched: BTreeSet<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
            let free = (0..pattern.k()).filter(|l| !matched.contains(l)).collect();
            MatchingTerm { pairs, free }
        })
        .collect();
    terms.sort_by(|a, b| (a.pairs.len(), &a.pairs).cmp(&(b.pairs.len(), &b.pairs)));
    terms
}

fn partial_matchings(positions: &[usize]) -> Vec<Vec<(usize, usize)>> {
    let Some((&first, rest)) = positions.split_first() else {
        return vec![Vec::new()];
    };
    // `first` stays unmatched
    let mut out = partial_matchings(rest);
    // or pairs with one of the later positions
    for (i, &partner) in rest.iter().enumerate() {
        let mut remaining = rest.to_vec();
        remaining.remove(i);
        for mut m in partial_matchings(&remaining) {
            m.push((first, partner));
            out.push(m);
        }
    }
    out
}

/// `ζ_j^{(i)}` for every label in a pattern and `j = 0..=p`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDraw {
    labels: Vec<u32>,
    rows: Vec<Vec<f64>>,
}

impl GaussianDraw {
    /// `rows[r]` holds `ζ_0..ζ_p` for `labels[r]`; labels must be distinct.
    pub fn new(labels: Vec<u32>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != rows.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                got: rows.len(),
            });
        }
        if labels.iter().collect::<BTreeSet<_>>().len() != labels.len() {
            return Err(Error::Precondition("draw labels must be distinct".into()));
        }
        Ok(GaussianDraw { labels, rows })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, label: u32) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map(|r| self.rows[r].as_slice())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn covers(&self, pattern: &IndexPattern, p: usize) -> Result<()> {
        for label in pattern.distinct_labels() {
            match self.row(label) {
                Some(row) if row.len() > p => {}
                _ => {
                    return Err(Error::Precondition(format!(
                        "draw lacks ζ_0..ζ_{p} for label {label}"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// The deterministic row for the time component: `sqrt(T-t)` at `j = 0`, zero elsewhere.
pub fn time_row(p: usize, interval: &Interval) -> Vec<f64> {
    let mut row = vec![0.0; p + 1];
    row[0] = interval.length_f64().sqrt();
    row
}

/// Reproducible standard normal draw; the stream depends only on `seed`.
pub fn sample_draw(
    pattern: &IndexPattern,
    p: usize,
    seed: u64,
    interval: &Interval,
) -> GaussianDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = pattern.distinct_labels();
    let rows = labels
        .iter()
        .map(|&label| {
            if label == 0 {
                time_row(p, interval)
            } else {
                (0..=p).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
        })
        .collect();
    GaussianDraw { labels, rows }
}

/// One symmetrized term: an orbit representative and the summed coefficient of its orbit.
#[derive(Clone, Debug)]
pub struct OrbitTerm {
    pub rep: Vec<usize>,
    /// Exact sum of the cores over the orbit.
    pub core_sum: Rational,
    pub coeff: f64,
}

/// Expansion with coefficients folded over block permutations.
///
/// The bracket multiplying `C_j` is invariant under permutations inside a block,
/// so `Σ_j C_j H_j = Σ_orbits (Σ_{j ∈ orbit} C_j) H_rep`. Orbit sums are exact,
/// which lets cancelling coefficients vanish before any rounding.
#[derive(Clone, Debug)]
pub struct CompiledExpansion {
    pattern: IndexPattern,
    p: usize,
    matchings: Vec<MatchingTerm>,
    terms: Vec<OrbitTerm>,
}

impl CompiledExpansion {
    pub fn new(
        pattern: &IndexPattern,
        p: usize,
        table: &CoeffTable,
        interval: &Interval,
    ) -> Result<Self> {
        if table.k() != pattern.k() {
            return Err(Error::LengthMismatch {
                expected: pattern.k(),
                got: table.k(),
            });
        }
        if table.p() < p {
            let mut missing = vec![0; pattern.k()];
            missing[0] = p;
            return Err(Error::MissingEntry(missing));
        }
        let k = pattern.k();
        let blocks = pattern.blocks();
        let perms = block_permutations(&blocks, k);
        let w = table.weights();
        let scale = CoeffValue::scale_f64(
            w.coeff_half_power(),
            w.coeff_two_power(),
            interval.length_f64(),
        );
        let mut terms = Vec::new();
        let total = (p + 1).pow(k as u32);
        for idx in 0..total {
            let rep = digits(idx, p + 1, k);
            let canonical = blocks
                .iter()
                .all(|b| b.windows(2).all(|w| rep[w[0]] <= rep[w[1]]));
            if !canonical {
                continue;
            }
            let orbit: BTreeSet<Vec<usize>> = perms
                .iter()
                .map(|sigma| sigma.iter().map(|&s| rep[s]).collect())
                .collect();
            let mut core_sum = Rational::zero();
            for j in &orbit {
                core_sum += table.core(j)?;
            }
            if core_sum.is_zero() {
                continue;
            }
            let coeff = rational_to_f64(&core_sum) * (sqrt_product(&rep) as f64).sqrt() * scale;
            terms.push(OrbitTerm {
                rep,
                core_sum,
                coeff,
            });
        }
        Ok(CompiledExpansion {
            pattern: pattern.clone(),
            p,
            matchings: enumerate_matchings(pattern),
            terms,
        })
    }

    pub fn pattern(&self) -> &IndexPattern {
        &self.pattern
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn matchings(&self) -> &[MatchingTerm] {
        &self.matchings
    }

    pub fn terms(&self) -> &[OrbitTerm] {
        &self.terms
    }

    /// Value of the bracket `Π ζ - S` at modes `j`.
    pub fn bracket(&self, j: &[usize], zeta: &[&[f64]]) -> f64 {
        let mut h = 0.0;
        for m in &self.matchings {
            if m.pairs.iter().any(|&(a, b)| j[a] != j[b]) {
                continue;
            }
            let prod = m.free.iter().fold(1.0, |acc, &l| acc * zeta[l][j[l]]);
            h += f64::from(m.sign()) * prod;
        }
        h
    }

    pub fn eval(&self, draw: &GaussianDraw) -> Result<f64> {
        draw.covers(&self.pattern, self.p)?;
        let zeta: Vec<&[f64]> = self
            .pattern
            .labels()
            .iter()
            .map(|&l| draw.row(l).expect("covered"))
            .collect();
        Ok(self.eval_rows(&zeta))
    }

    /// Evaluates with per-position rows `zeta[l] = ζ^{(i_l)}`; no coverage check.
    pub(crate) fn eval_rows(&self, zeta: &[&[f64]]) -> f64 {
        self.terms
            .iter()
            .fold(0.0, |acc, t| acc + t.coeff * self.bracket(&t.rep, zeta))
    }
}

fn digits(mut idx: usize, base: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    for slot in out.iter_mut().rev() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

/// One realization of `J^p` for the given draw.
pub fn realize(
    pattern: &IndexPattern,
    p: usize,
    table: &CoeffTable,
    draw: &GaussianDraw,
    interval: &Interval,
) -> Result<f64> {
    CompiledExpansion::new(pattern, p, table, interval)?.eval(draw)
}

/// Number of partial matchings of a block of size `m`: `Σ_r C(m, 2r) (2r-1)!!`.
pub fn matching_count(m: usize) -> u64 {
    let mut total = BigInt::zero();
    for r in 0..=m / 2 {
        let mut binom = BigInt::from(1u32);
        for i in 0..2 * r {
            binom = binom * BigInt::from(m - i) / BigInt::from(i + 1);
        }
        let double_fact: BigInt = (1..2 * r).step_by(2).map(BigInt::from).product();
        total += binom * double_fact;
    }
    total.try_into().unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{coefficient_table, DegreeCap, WeightSpec};
    use crate::polycore::{int, rat};

    fn pat(labels: &[u32]) -> IndexPattern {
        IndexPattern::new(labels.to_vec()).unwrap()
    }

    #[test]
    fn blocks_and_zeros() {
        let p = pat(&[2, 0, 1, 2, 1, 3]);
        assert_eq!(p.blocks(), vec![vec![0, 3], vec![2, 4], vec![5]]);
        assert_eq!(p.zero_positions(), vec![1]);
        assert_eq!(p.canonical().labels(), &[1, 0, 2, 1, 2, 3]);
        assert_eq!(IndexPattern::parse("1, 1,2").unwrap(), pat(&[1, 1, 2]));
        assert!(IndexPattern::parse("1,x").is_err());
        assert!(IndexPattern::new(vec![]).is_err());
    }

    #[test]
    fn matching_counts() {
        assert_eq!(enumerate_matchings(&pat(&[1, 2])).len(), 1);
        let four = enumerate_matchings(&pat(&[1, 1, 1, 1]));
        assert_eq!(four.len(), 10);
        let by_size = |n| four.iter().filter(|t| t.pairs.len() == n).count();
        assert_eq!((by_size(0), by_size(1), by_size(2)), (1, 6, 3));
        assert!(four
            .iter()
            .all(|t| t.sign() == if t.pairs.len() == 1 { -1 } else { 1 }));
        assert_eq!(enumerate_matchings(&pat(&[1; 5])).len(), 26);
        assert_eq!(enumerate_matchings(&pat(&[0, 0, 1])).len(), 1);
        for m in 0..=7 {
            assert_eq!(
                enumerate_matchings(&pat(&vec![4; m.max(1)])).len() as u64,
                matching_count(m.max(1))
            );
        }
        assert_eq!(matching_count(6), 76);
    }

    #[test]
    fn block_permutation_group_sizes() {
        assert_eq!(block_permutations(&pat(&[1, 2, 3]).blocks(), 3).len(), 1);
        assert_eq!(block_permutations(&pat(&[1, 1, 2]).blocks(), 3).len(), 2);
        assert_eq!(
            block_permutations(&pat(&[1, 1, 1, 2, 2]).blocks(), 5).len(),
            12
        );
        let perms = block_permutations(&pat(&[1, 2, 1]).blocks(), 3);
        assert!(perms.contains(&vec![2, 1, 0]));
    }

    #[test]
    fn draws_are_reproducible() {
        let interval = Interval::with_length(int(4)).unwrap();
        let p = pat(&[0, 1, 2]);
        let a = sample_draw(&p, 3, 99, &interval);
        assert_eq!(a, sample_draw(&p, 3, 99, &interval));
        assert_ne!(a, sample_draw(&p, 3, 100, &interval));
        assert_eq!(a.row(0).unwrap(), &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(a.labels(), &[0, 1, 2]);
    }

    #[test]
    fn first_order_realization() {
        let interval = Interval::with_length(rat(9, 4)).unwrap();
        let table =
            coefficient_table(&WeightSpec::unit(1).unwrap(), 0, &DegreeCap::default()).unwrap();
        let draw = GaussianDraw::new(vec![3], vec![vec![0.8]]).unwrap();
        let v = realize(&pat(&[3]), 0, &table, &draw, &interval).unwrap();
        assert!((v - 1.5 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn missing_rows_and_entries_are_errors() {
        let interval = Interval::with_length(int(1)).unwrap();
        let table =
            coefficient_table(&WeightSpec::unit(2).unwrap(), 1, &DegreeCap::default()).unwrap();
        let draw = GaussianDraw::new(vec![1], vec![vec![0.1, 0.2]]).unwrap();
        assert!(realize(&pat(&[1, 2]), 1, &table, &draw, &interval).is_err());
        assert!(matches!(
            realize(&pat(&[1, 1]), 2, &table, &draw, &interval),
            Err(Error::MissingEntry(_))
        ));
    }

    #[test]
    fn repeated_double_integral_collapses() {
        let interval = Interval::with_length(rat(3, 2)).unwrap();
        let table =
            coefficient_table(&WeightSpec::unit(2).unwrap(), 6, &DegreeCap::default()).unwrap();
        let compiled = CompiledExpansion::new(&pat(&[5, 5]), 6, &table, &interval).unwrap();
        assert_eq!(compiled.terms().len(), 1);
        assert_eq!(compiled.terms()[0].rep, vec![0, 0]);
        assert_eq!(compiled.terms()[0].core_sum, int(2));
    }
}
