//! Fourier–Legendre coefficients of the simplex kernel.
//!
//! The kernel of an iterated integral with weights `ψ_l(s) = (s - t)^{q_l}` is
//! `K(t_1..t_k) = ∏ ψ_l(t_l)` on `t_1 < ... < t_k` and zero elsewhere. Its
//! coefficients against the orthonormal basis
//! `φ_j(s) = sqrt((2j+1)/(T-t)) P_j(2(s-t)/(T-t) - 1)` factor as
//!
//! ```text
//! C_j = core(j) * ∏ sqrt(2 j_l + 1) * (T-t)^{a/2} * 2^{-b},
//!     a = k + 2 Σq,  b = k + Σq,
//! core(j) = ∫_{-1}^{1} (x_k+1)^{q_k} P_{j_k}(x_k) ... ∫_{-1}^{x_2} (x_1+1)^{q_1} P_{j_1}(x_1) dx_1 ... dx_k
//! ```
//!
//! so the rational cores are interval-free and one table serves every interval.
//!
//! Index convention: a [`MultiIndex`] is `(j_1, ..., j_k)` in integration
//! order, `j_1` belonging to the innermost integral. The customary subscript
//! `C_{j_k ... j_1}` lists the same modes outermost first;
//! [`MultiIndex::from_subscript`] is the only place that translates between
//! the two.

mod cache;

pub use cache::{read_table, table_document, write_table, CoeffCache, CACHE_SCHEMA_VERSION};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::polycore::{
    int, legendre_table, legendre_values, parse_rational, rational_to_f64, Poly, Rational,
};

/// Largest multiplicity for which coefficients may be requested.
pub const MAX_COEFF_MULTIPLICITY: usize = 8;

/// Bumped whenever the meaning of [`DegreeCap`] or the core layout changes;
/// part of the cache key.
pub const DEGREE_CAP_VERSION: u32 = 1;

/// Upper limits on mode numbers and weight exponents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DegreeCap {
    pub max_mode: usize,
    pub max_exponent: u32,
}

impl Default for DegreeCap {
    fn default() -> Self {
        DegreeCap {
            max_mode: 30,
            max_exponent: 5,
        }
    }
}

impl DegreeCap {
    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode > self.max_mode {
            return Err(Error::ModeCap {
                mode,
                cap: self.max_mode,
            });
        }
        Ok(())
    }

    pub fn check_weights(&self, w: &WeightSpec) -> Result<()> {
        match w.exponents().iter().find(|&&q| q > self.max_exponent) {
            Some(&q) => Err(Error::ExponentCap {
                exponent: q,
                cap: self.max_exponent,
            }),
            None => Ok(()),
        }
    }
}

/// Integration interval `[t, T]`, endpoints stored exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interval {
    start: Rational,
    end: Rational,
}

impl Interval {
    pub fn new(start: Rational, end: Rational) -> Result<Self> {
        if end <= start {
            return Err(Error::Interval(format!(
                "end {end} must exceed start {start}"
            )));
        }
        Ok(Interval { start, end })
    }

    /// `[0, length]`.
    pub fn with_length(length: Rational) -> Result<Self> {
        Self::new(Rational::zero(), length)
    }

    /// Parses a decimal or fractional length such as `0.25` or `1/3`.
    pub fn parse_length(s: &str) -> Result<Self> {
        Self::with_length(parse_rational(s)?)
    }

    pub fn start(&self) -> &Rational {
        &self.start
    }

    pub fn end(&self) -> &Rational {
        &self.end
    }

    pub fn length(&self) -> Rational {
        &self.end - &self.start
    }

    pub fn length_f64(&self) -> f64 {
        rational_to_f64(&self.length())
    }

    pub fn start_f64(&self) -> f64 {
        rational_to_f64(&self.start)
    }
}

/// Monomial weights `ψ_l(s) = (s - t)^{q_l}`, `l = 1..k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WeightSpec {
    exponents: Vec<u32>,
}

impl WeightSpec {
    pub fn new(exponents: Vec<u32>) -> Result<Self> {
        if exponents.is_empty() || exponents.len() > MAX_COEFF_MULTIPLICITY {
            return Err(Error::Multiplicity(exponents.len()));
        }
        Ok(WeightSpec { exponents })
    }

    /// All weights identically one.
    pub fn unit(k: usize) -> Result<Self> {
        Self::new(vec![0; k])
    }

    pub fn k(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn exponent_sum(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Power `a` in the interval factor `(T-t)^{a/2}` of every coefficient.
    pub fn coeff_half_power(&self) -> u32 {
        self.k() as u32 + 2 * self.exponent_sum()
    }

    /// Power `b` in the dyadic factor `2^{-b}` of every coefficient.
    pub fn coeff_two_power(&self) -> u32 {
        self.k() as u32 + self.exponent_sum()
    }
}

/// Mode tuple `(j_1, ..., j_k)` in integration order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex(entries)
    }

    /// From the subscript order `C_{j_k ... j_1}` (outermost first).
    pub fn from_subscript(subscript: &[usize]) -> Self {
        MultiIndex(subscript.iter().rev().copied().collect())
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    /// `∏ (2 j_l + 1)`.
    pub fn sqrt_product(&self) -> u64 {
        sqrt_product(&self.0)
    }
}

pub(crate) fn sqrt_product(j: &[usize]) -> u64 {
    j.iter().map(|&m| 2 * m as u64 + 1).product()
}

/// Exact value split as `core * ∏ sqrt(f) * (T-t)^{half_power/2} * 2^{-two_power}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoeffValue {
    pub core: Rational,
    pub sqrt_factors: Vec<u64>,
    pub half_power: u32,
    pub two_power: u32,
}

impl CoeffValue {
    /// `(T-t)^{half_power/2} * 2^{-two_power}` in floating point.
    pub fn scale_f64(half_power: u32, two_power: u32, length: f64) -> f64 {
        let mut s = length.powi((half_power / 2) as i32);
        if half_power % 2 == 1 {
            s *= length.sqrt();
        }
        s * 0.5f64.powi(two_power as i32)
    }

    pub fn to_f64(&self, length: f64) -> f64 {
        let radicand: u64 = self.sqrt_factors.iter().product();
        rational_to_f64(&self.core)
            * (radicand as f64).sqrt()
            * Self::scale_f64(self.half_power, self.two_power, length)
    }

    /// Exact value when no square roots remain (even half power, square radicand).
    pub fn to_exact(&self, length: &Rational) -> Option<Rational> {
        if self.half_power % 2 == 1 {
            return None;
        }
        let radicand: u64 = self.sqrt_factors.iter().product();
        let root = (radicand as f64).sqrt().round() as u64;
        if root * root != radicand {
            return None;
        }
        let len_pow = num_traits::pow(length.clone(), (self.half_power / 2) as usize);
        Some(
            &self.core * int(root as i64) * len_pow
                / Rational::from_integer(BigInt::one() << self.two_power as usize),
        )
    }
}

/// An orthonormal Legendre basis function on an interval.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisFunction {
    pub mode: usize,
    start: f64,
    length: f64,
}

pub fn basis_phi(mode: usize, interval: &Interval) -> BasisFunction {
    BasisFunction {
        mode,
        start: interval.start_f64(),
        length: interval.length_f64(),
    }
}

impl BasisFunction {
    /// `φ_j(s)`; zero outside the interval.
    pub fn eval(&self, s: f64) -> f64 {
        let x = 2.0 * (s - self.start) / self.length - 1.0;
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        let p = legendre_values(self.mode, x)[self.mode];
        ((2 * self.mode + 1) as f64 / self.length).sqrt() * p
    }
}

/// Values `φ_0(s), ..., φ_p(s)`.
pub fn basis_values(p: usize, interval: &Interval, s: f64) -> Vec<f64> {
    let length = interval.length_f64();
    let x = 2.0 * (s - interval.start_f64()) / length - 1.0;
    legendre_values(p, x)
        .into_iter()
        .enumerate()
        .map(|(j, v)| ((2 * j + 1) as f64 / length).sqrt() * v)
        .collect()
}

/// Single coefficient `C_j`. Prefer [`coefficient_table`] for many entries.
pub fn fourier_coefficient(j: &MultiIndex, w: &WeightSpec, cap: &DegreeCap) -> Result<CoeffValue> {
    if j.k() != w.k() {
        return Err(Error::LengthMismatch {
            expected: w.k(),
            got: j.k(),
        });
    }
    cap.check_weights(w)?;
    for &m in j.entries() {
        cap.check_mode(m)?;
    }
    let p = j.entries().iter().copied().max().unwrap_or(0);
    let legendre = legendre_table(p);
    let mut inner: Option<Poly> = None;
    let lower = int(-1);
    for (l, (&m, &q)) in j.entries().iter().zip(w.exponents()).enumerate() {
        let mut integrand = &Poly::shifted_power(q) * &legendre[m];
        if let Some(prev) = &inner {
            integrand = &integrand * prev;
        }
        if l + 1 == j.k() {
            let core = integrand.definite_integral(&lower, &int(1));
            return Ok(CoeffValue {
                core,
                sqrt_factors: j.entries().iter().map(|&m| 2 * m as u64 + 1).collect(),
                half_power: w.coeff_half_power(),
                two_power: w.coeff_two_power(),
            });
        }
        inner = Some(integrand.antiderivative_from(&lower));
    }
    unreachable!("weight spec has k >= 1")
}

/// `I_k = ∫ K^2` over the hypercube, i.e. the simplex integral of `∏ ψ_l^2`.
///
/// Returned as `core * (T-t)^{half_power/2} * 2^{-two_power}` with no square roots.
pub fn kernel_norm(w: &WeightSpec) -> CoeffValue {
    let lower = int(-1);
    let mut f = Poly::one();
    for &q in w.exponents() {
        f = (&Poly::shifted_power(2 * q) * &f).antiderivative_from(&lower);
    }
    let n = w.k() as u32 + 2 * w.exponent_sum();
    CoeffValue {
        core: f.eval(&int(1)),
        sqrt_factors: Vec::new(),
        half_power: 2 * n,
        two_power: n,
    }
}

/// All `(p+1)^k` coefficient cores for one weight spec, lexicographic in `(j_1, ..., j_k)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoeffTable {
    weights: WeightSpec,
    p: usize,
    cores: Vec<Rational>,
}

impl CoeffTable {
    pub(crate) fn from_parts(weights: WeightSpec, p: usize, cores: Vec<Rational>) -> Result<Self> {
        let expected = (p + 1).pow(weights.k() as u32);
        if cores.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: cores.len(),
            });
        }
        Ok(CoeffTable { weights, p, cores })
    }

    pub fn weights(&self) -> &WeightSpec {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.k()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn cores(&self) -> &[Rational] {
        &self.cores
    }

    /// Position of `j` in lexicographic order, `None` if out of range.
    pub fn index_of(&self, j: &[usize]) -> Option<usize> {
        if j.len() != self.k() {
            return None;
        }
        let base = self.p + 1;
        j.iter()
            .try_fold(0usize, |acc, &m| (m < base).then_some(acc * base + m))
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn multi_index(&self, mut index: usize) -> MultiIndex {
        let base = self.p + 1;
        let mut out = vec![0; self.k()];
        for slot in out.iter_mut().rev() {
            *slot = index % base;
            index /= base;
        }
        MultiIndex(out)
    }

    pub fn core(&self, j: &[usize]) -> Result<&Rational> {
        self.index_of(j)
            .map(|i| &self.cores[i])
            .ok_or_else(|| Error::MissingEntry(j.to_vec()))
    }

    pub fn value(&self, j: &[usize]) -> Result<CoeffValue> {
        Ok(CoeffValue {
            core: self.core(j)?.clone(),
            sqrt_factors: j.iter().map(|&m| 2 * m as u64 + 1).collect(),
            half_power: self.weights.coeff_half_power(),
            two_power: self.weights.coeff_two_power(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (MultiIndex, &Rational)> + '_ {
        self.cores
            .iter()
            .enumerate()
            .map(|(i, c)| (self.multi_index(i), c))
    }

    /// Floating-point coefficients for a concrete interval, same order as [`cores`](Self::cores).
    pub fn float_values(&self, interval: &Interval) -> Vec<f64> {
        let scale = CoeffValue::scale_f64(
            self.weights.coeff_half_power(),
            self.weights.coeff_two_power(),
            interval.length_f64(),
        );
        self.iter()
            .map(|(j, c)| rational_to_f64(c) * (j.sqrt_product() as f64).sqrt() * scale)
            .collect()
    }

    /// Sub-table for a smaller truncation `p' <= p`.
    pub fn truncate(&self, p: usize) -> Result<CoeffTable> {
        if p > self.p {
            return Err(Error::Precondition(format!(
                "cannot truncate a table of order {} to order {p}",
                self.p
            )));
        }
        let size = (p + 1).pow(self.k() as u32);
        let cores = (0..size)
            .map(|i| {
                let mut rem = i;
                let mut j = vec![0; self.k()];
                for slot in j.iter_mut().rev() {
                    *slot = rem % (p + 1);
                    rem /= p + 1;
                }
                self.cores[self.index_of(&j).expect("in range")].clone()
            })
            .collect();
        CoeffTable::from_parts(self.weights.clone(), p, cores)
    }
}

/// Computes every core for `j ∈ {0..p}^k` by nested exact antidifferentiation.
pub fn coefficient_table(w: &WeightSpec, p: usize, cap: &DegreeCap) -> Result<CoeffTable> {
    cap.check_mode(p)?;
    cap.check_weights(w)?;
    let legendre = legendre_table(p);
    let k = w.k();
    // weighted[l][j] = (x+1)^{q_l} P_j
    let weighted: Vec<Vec<Poly>> = w
        .exponents()
        .iter()
        .map(|&q| {
            let base = Poly::shifted_power(q);
            legendre.iter().map(|pj| &base * pj).collect()
        })
        .collect();
    let lower = int(-1);
    let top_degree = weighted
        .iter()
        .flatten()
        .filter_map(Poly::degree)
        .max()
        .unwrap_or(0);
    // moments[j][b] = ∫_{-1}^{1} (x+1)^{q_k} P_j(x) x^b dx, for the outermost level
    let max_inner_degree = (k - 1) * (top_degree + 1) + 1;
    let moments: Vec<Vec<Rational>> = weighted[k - 1]
        .iter()
        .map(|g| monomial_moments(g, max_inner_degree))
        .collect();

    let cores: Vec<Rational> = (0..=p)
        .into_par_iter()
        .map(|j1| {
            let mut out = Vec::with_capacity((p + 1).pow(k as u32 - 1));
            if k == 1 {
                out.push(moments[j1][0].clone());
            } else {
                let first = weighted[0][j1].antiderivative_from(&lower);
                descend(&first, 1, &weighted, &moments, &lower, &mut out);
            }
            out
        })
        .flatten()
        .collect();
    CoeffTable::from_parts(w.clone(), p, cores)
}

fn descend(
    inner: &Poly,
    level: usize,
    weighted: &[Vec<Poly>],
    moments: &[Vec<Rational>],
    lower: &Rational,
    out: &mut Vec<Rational>,
) {
    let k = weighted.len();
    if level + 1 == k {
        for m in moments {
            let core = inner
                .coeffs()
                .iter()
                .zip(m)
                .fold(Rational::zero(), |acc, (c, mu)| acc + c * mu);
            out.push(core);
        }
        return;
    }
    for g in &weighted[level] {
        let next = (g * inner).antiderivative_from(lower);
        descend(&next, level + 1, weighted, moments, lower, out);
    }
}

/// `∫_{-1}^{1} g(x) x^b dx` for `b = 0..=max_b`.
fn monomial_moments(g: &Poly, max_b: usize) -> Vec<Rational> {
    // ∫_{-1}^{1} x^n = 2/(n+1) for even n, 0 for odd n
    let raw = |n: usize| {
        if n.is_multiple_of(2) {
            Rational::new(BigInt::from(2), BigInt::from(n + 1))
        } else {
            Rational::zero()
        }
    };
    (0..=max_b)
        .map(|b| {
            g.coeffs()
                .iter()
                .enumerate()
                .fold(Rational::zero(), |acc, (a, c)| acc + c * raw(a + b))
        })
        .collect()
}

/// `Σ_{j ∈ box} C_j^2` as an exact rational multiple of `(T-t)^{k+2Σq}`.
///
/// `bounds[l]` is the truncation for position `l`; every bound must be `<= table.p()`.
pub fn captured_energy_core(table: &CoeffTable, bounds: &[usize]) -> Result<Rational> {
    if bounds.len() != table.k() {
        return Err(Error::LengthMismatch {
            expected: table.k(),
            got: bounds.len(),
        });
    }
    if let Some(&b) = bounds.iter().find(|&&b| b > table.p()) {
        return Err(Error::Precondition(format!(
            "truncation {b} exceeds table order {}",
            table.p()
        )));
    }
    let mut sum = Rational::zero();
    for (j, c) in table.iter() {
        if j.entries().iter().zip(bounds).all(|(m, b)| m <= b) {
            sum += c * c * BigInt::from(j.sqrt_product());
        }
    }
    let two = table.weights().coeff_two_power();
    Ok(sum / Rational::from_integer(BigInt::one() << (2 * two) as usize))
}

/// `I_k` as an exact rational multiple of `(T-t)^{k+2Σq}`.
pub fn kernel_norm_core(w: &WeightSpec) -> Rational {
    let norm = kernel_norm(w);
    norm.core / Rational::from_integer(BigInt::one() << norm.two_power as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polycore::rat;

    fn unit(k: usize) -> WeightSpec {
        WeightSpec::unit(k).unwrap()
    }

    #[test]
    fn basis_examples() {
        let i01 = Interval::with_length(int(1)).unwrap();
        let i04 = Interval::with_length(int(4)).unwrap();
        assert_eq!(basis_phi(0, &i01).eval(0.3), 1.0);
        assert_eq!(basis_phi(0, &i04).eval(2.7), 0.5);
        assert!((basis_phi(1, &i01).eval(1.0) - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(basis_phi(2, &i01).eval(1.5), 0.0);
    }

    #[test]
    fn first_order_coefficients() {
        let c = fourier_coefficient(&MultiIndex::new(vec![0]), &unit(1), &DegreeCap::default())
            .unwrap();
        assert_eq!(c.core, int(2));
        assert_eq!((c.half_power, c.two_power), (1, 1));
        assert!((c.to_f64(0.25) - 0.5).abs() < 1e-15);
        for m in 1..6 {
            let c = fourier_coefficient(&MultiIndex::new(vec![m]), &unit(1), &DegreeCap::default())
                .unwrap();
            assert!(c.core.is_zero());
        }
    }

    #[test]
    fn triple_zero_mode_is_simplex_volume() {
        let c = fourier_coefficient(
            &MultiIndex::new(vec![0, 0, 0]),
            &unit(3),
            &DegreeCap::default(),
        )
        .unwrap();
        // volume of -1 < x < y < z < 1
        assert_eq!(c.core, rat(4, 3));
        assert_eq!((c.half_power, c.two_power), (3, 3));
        let len: f64 = 0.7;
        assert!((c.to_f64(len) - len.powf(1.5) / 6.0).abs() < 1e-15);
    }

    #[test]
    fn double_zero_mode() {
        let c = fourier_coefficient(
            &MultiIndex::new(vec![0, 0]),
            &unit(2),
            &DegreeCap::default(),
        )
        .unwrap();
        assert_eq!(c.to_exact(&rat(3, 1)), Some(rat(3, 2)));
    }

    #[test]
    fn kernel_norms() {
        let len = rat(5, 2);
        assert_eq!(kernel_norm(&unit(1)).to_exact(&len), Some(len.clone()));
        assert_eq!(
            kernel_norm(&unit(2)).to_exact(&len),
            Some(&len * &len / int(2))
        );
        assert_eq!(
            kernel_norm(&unit(3)).to_exact(&len),
            Some(&len * &len * &len / int(6))
        );
        // ∫_t^T (s-t)^2 ds = L^3/3
        let w = WeightSpec::new(vec![1]).unwrap();
        assert_eq!(
            kernel_norm(&w).to_exact(&len),
            Some(&len * &len * &len / int(3))
        );
    }

    #[test]
    fn table_matches_single_coefficients() {
        let w = WeightSpec::new(vec![1, 0, 2]).unwrap();
        let table = coefficient_table(&w, 2, &DegreeCap::default()).unwrap();
        assert_eq!(table.len(), 27);
        for (j, core) in table.iter() {
            let single = fourier_coefficient(&j, &w, &DegreeCap::default()).unwrap();
            assert_eq!(&single.core, core, "j={j:?}");
        }
    }

    #[test]
    fn table_order_is_lexicographic() {
        let table = coefficient_table(&unit(2), 1, &DegreeCap::default()).unwrap();
        let order: Vec<_> = table.iter().map(|(j, _)| j.0).collect();
        assert_eq!(order, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(table.index_of(&[1, 0]), Some(2));
        assert_eq!(table.index_of(&[2, 0]), None);
        assert!(matches!(table.core(&[0, 2]), Err(Error::MissingEntry(_))));
    }

    #[test]
    fn first_order_table() {
        let table = coefficient_table(&unit(1), 2, &DegreeCap::default()).unwrap();
        let interval = Interval::with_length(rat(9, 4)).unwrap();
        assert_eq!(table.float_values(&interval), vec![1.5, 0.0, 0.0]);
    }

    #[test]
    fn degree_cap_is_enforced() {
        let cap = DegreeCap {
            max_mode: 3,
            max_exponent: 1,
        };
        assert!(matches!(
            coefficient_table(&unit(2), 4, &cap),
            Err(Error::ModeCap { mode: 4, cap: 3 })
        ));
        let w = WeightSpec::new(vec![2, 0]).unwrap();
        assert!(matches!(
            coefficient_table(&w, 1, &cap),
            Err(Error::ExponentCap { exponent: 2, .. })
        ));
        assert!(WeightSpec::new(vec![]).is_err());
        assert!(WeightSpec::new(vec![0; 9]).is_err());
    }

    #[test]
    fn subscript_translation() {
        assert_eq!(MultiIndex::from_subscript(&[3, 2, 1]).0, vec![1, 2, 3]);
    }

    #[test]
    fn truncate_keeps_entries() {
        let table = coefficient_table(&unit(3), 3, &DegreeCap::default()).unwrap();
        let small = table.truncate(1).unwrap();
        assert_eq!(
            small,
            coefficient_table(&unit(3), 1, &DegreeCap::default()).unwrap()
        );
        assert!(table.truncate(4).is_err());
    }
}
