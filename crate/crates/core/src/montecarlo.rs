//! Monte Carlo check of the expansion against a fine-grid simulation.
//!
//! Each path draws Wiener increments on a uniform grid `τ_i = t + iΔ`. The same
//! increments give both the left-point iterated sum (the "true" integral up to
//! discretization) and the discretized `ζ_j = Σ_i φ_j(τ_i) Δf_i`, so the two
//! sides describe one realization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::{basis_values, CoeffTable, Interval, WeightSpec};
use crate::error::{Error, Result};
use crate::expansion::{time_row, CompiledExpansion, GaussianDraw, IndexPattern};
use crate::msekit::exact_mse_with_table;
use crate::polycore::format_rational;

pub const MIN_STEPS: usize = 64;
/// Below this many paths the standard error is too coarse to decide anything.
pub const MIN_DECISION_PATHS: usize = 100;
pub const BATCHES: usize = 100;
pub const SMALL_SAMPLE_WARNING: &str = "standard error too large for a decision";

#[derive(Clone, Debug)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub pattern: IndexPattern,
    pub p: usize,
    pub weights: WeightSpec,
    pub interval: Interval,
}

impl McConfig {
    pub fn new(
        pattern: IndexPattern,
        p: usize,
        weights: WeightSpec,
        interval: Interval,
        n_paths: usize,
        n_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::Precondition("n_paths must be positive".into()));
        }
        if n_steps < MIN_STEPS {
            return Err(Error::Precondition(format!(
                "n_steps must be at least {MIN_STEPS} (got {n_steps})"
            )));
        }
        if pattern.k() != weights.k() {
            return Err(Error::LengthMismatch {
                expected: pattern.k(),
                got: weights.k(),
            });
        }
        Ok(McConfig {
            n_paths,
            n_steps,
            seed,
            pattern,
            p,
            weights,
            interval,
        })
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_paths < MIN_DECISION_PATHS {
            out.push(format!(
                "{SMALL_SAMPLE_WARNING} (n_paths = {} < {MIN_DECISION_PATHS})",
                self.n_paths
            ));
        }
        out
    }

    pub fn step(&self) -> f64 {
        self.interval.length_f64() / self.n_steps as f64
    }

    fn rng_for(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }
}

/// Increments of every distinct label on the grid; label 0 gets `Δτ`.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerPath {
    labels: Vec<u32>,
    increments: Vec<Vec<f64>>,
}

impl WienerPath {
    pub fn generate<R: rand::Rng>(
        pattern: &IndexPattern,
        n_steps: usize,
        interval: &Interval,
        rng: &mut R,
    ) -> Self {
        let dt = interval.length_f64() / n_steps as f64;
        let sd = dt.sqrt();
        let labels = pattern.distinct_labels();
        let increments = labels
            .iter()
            .map(|&label| {
                if label == 0 {
                    vec![dt; n_steps]
                } else {
                    (0..n_steps)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(rng);
                            z * sd
                        })
                        .collect()
                }
            })
            .collect();
        WienerPath { labels, increments }
    }

    pub fn from_increments(labels: Vec<u32>, increments: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != increments.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                got: increments.len(),
            });
        }
        let n = increments.first().map_or(0, Vec::len);
        if increments.iter().any(|row| row.len() != n) {
            return Err(Error::Precondition(
                "increment rows differ in length".into(),
            ));
        }
        Ok(WienerPath { labels, increments })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_steps(&self) -> usize {
        self.increments.first().map_or(0, Vec::len)
    }

    pub fn increments(&self, label: u32) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map(|r| self.increments[r].as_slice())
    }
}

/// `φ_0..φ_p` at the left grid points.
#[derive(Clone, Debug)]
pub struct BasisGrid {
    p: usize,
    // values[i * (p + 1) + j] = φ_j(τ_i)
    values: Vec<f64>,
}

impl BasisGrid {
    pub fn new(p: usize, n_steps: usize, interval: &Interval) -> Self {
        let dt = interval.length_f64() / n_steps as f64;
        let start = interval.start_f64();
        let mut values = Vec::with_capacity(n_steps * (p + 1));
        for i in 0..n_steps {
            values.extend(basis_values(p, interval, start + i as f64 * dt));
        }
        BasisGrid { p, values }
    }

    fn zetas(&self, increments: &[f64]) -> Vec<f64> {
        let width = self.p + 1;
        let mut out = vec![0.0; width];
        for (i, &df) in increments.iter().enumerate() {
            let row = &self.values[i * width..(i + 1) * width];
            for (acc, &phi) in out.iter_mut().zip(row) {
                *acc += phi * df;
            }
        }
        out
    }
}

fn weight_grid(w: &WeightSpec, n_steps: usize, interval: &Interval) -> Vec<Vec<f64>> {
    let dt = interval.length_f64() / n_steps as f64;
    w.exponents()
        .iter()
        .map(|&q| {
            (0..n_steps)
                .map(|i| (i as f64 * dt).powi(q as i32))
                .collect()
        })
        .collect()
}

fn iterated_sum(path: &WienerPath, pattern: &IndexPattern, weights: &[Vec<f64>]) -> Result<f64> {
    let n = path.n_steps();
    // level[i] holds the (l-1)-fold sum over indices strictly below i.
    let mut level = vec![1.0; n + 1];
    for (l, &label) in pattern.labels().iter().enumerate() {
        let df = path.increments(label).ok_or_else(|| {
            Error::Precondition(format!("path has no increments for label {label}"))
        })?;
        let psi = &weights[l];
        let mut next = vec![0.0; n + 1];
        let mut acc = 0.0;
        for i in 0..n {
            acc += level[i] * psi[i] * df[i];
            next[i + 1] = acc;
        }
        level = next;
    }
    Ok(level[n])
}

/// Left-point iterated sum `Σ_{i_1 < ... < i_k} ∏ ψ_l(τ_{i_l}) Δf^{(l)}_{i_l}`.
pub fn simulate_true_integral(
    path: &WienerPath,
    w: &WeightSpec,
    pattern: &IndexPattern,
    interval: &Interval,
) -> Result<f64> {
    if w.k() != pattern.k() {
        return Err(Error::LengthMismatch {
            expected: pattern.k(),
            got: w.k(),
        });
    }
    iterated_sum(path, pattern, &weight_grid(w, path.n_steps(), interval))
}

/// Discretized `ζ_j^{(i)} = Σ φ_j(τ_l) Δf_l` for every label of the path.
///
/// The time component keeps its exact row.
pub fn zetas_from_path(path: &WienerPath, p: usize, interval: &Interval) -> GaussianDraw {
    let grid = BasisGrid::new(p, path.n_steps(), interval);
    zetas_with_grid(path, &grid, interval)
}

pub fn zetas_with_grid(path: &WienerPath, grid: &BasisGrid, interval: &Interval) -> GaussianDraw {
    let rows = path
        .labels
        .iter()
        .zip(&path.increments)
        .map(|(&label, inc)| {
            if label == 0 {
                time_row(grid.p, interval)
            } else {
                grid.zetas(inc)
            }
        })
        .collect();
    GaussianDraw::new(path.labels.clone(), rows).expect("path labels are distinct")
}

/// Both sides of one simulated path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub true_integral: f64,
    pub expansion: f64,
    pub draw: GaussianDraw,
}

impl PathSample {
    pub fn squared_error(&self) -> f64 {
        let d = self.true_integral - self.expansion;
        d * d
    }
}

/// Simulates every path; the result is in path order and independent of the thread count.
pub fn simulate_paths(cfg: &McConfig, table: &CoeffTable) -> Result<Vec<PathSample>> {
    let expansion = CompiledExpansion::new(&cfg.pattern, cfg.p, table, &cfg.interval)?;
    let grid = BasisGrid::new(cfg.p, cfg.n_steps, &cfg.interval);
    let weights = weight_grid(&cfg.weights, cfg.n_steps, &cfg.interval);
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|idx| {
            let mut rng = cfg.rng_for(idx);
            let path = WienerPath::generate(&cfg.pattern, cfg.n_steps, &cfg.interval, &mut rng);
            let true_integral = iterated_sum(&path, &cfg.pattern, &weights)?;
            let draw = zetas_with_grid(&path, &grid, &cfg.interval);
            let value = expansion.eval(&draw)?;
            Ok(PathSample {
                true_integral,
                expansion: value,
                draw,
            })
        })
        .collect()
}

/// Compensated (Neumaier) sum.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub n_batches: usize,
}

/// Mean with a batch-means standard error over `min(BATCHES, n)` contiguous batches.
pub fn batch_mean(values: &[f64]) -> McEstimate {
    let n = values.len();
    if n == 0 {
        return McEstimate {
            estimate: f64::NAN,
            standard_error: f64::NAN,
            n_batches: 0,
        };
    }
    let estimate = stable_sum(values.iter().copied()) / n as f64;
    let b = BATCHES.min(n);
    if b < 2 {
        return McEstimate {
            estimate,
            standard_error: f64::INFINITY,
            n_batches: b,
        };
    }
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let chunk = &values[i * n / b..(i + 1) * n / b];
            stable_sum(chunk.iter().copied()) / chunk.len() as f64
        })
        .collect();
    let centre = stable_sum(means.iter().copied()) / b as f64;
    let var = stable_sum(means.iter().map(|m| (m - centre) * (m - centre))) / (b - 1) as f64;
    McEstimate {
        estimate,
        standard_error: (var / b as f64).sqrt(),
        n_batches: b,
    }
}

/// Mean of `(J_true - J^p)^2` over coupled paths.
pub fn empirical_mse(cfg: &McConfig, table: &CoeffTable) -> Result<McEstimate> {
    let samples = simulate_paths(cfg, table)?;
    let errors: Vec<f64> = samples.iter().map(PathSample::squared_error).collect();
    Ok(batch_mean(&errors))
}

/// Sample Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = stable_sum(a.iter().copied()) / n;
    let mb = stable_sum(b.iter().copied()) / n;
    let cov = stable_sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)));
    let va = stable_sum(a.iter().map(|x| (x - ma) * (x - ma)));
    let vb = stable_sum(b.iter().map(|y| (y - mb) * (y - mb)));
    cov / (va * vb).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct McConfigEcho {
    pub pattern: String,
    pub p: usize,
    pub exponents: Vec<u32>,
    pub length: String,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub config: McConfigEcho,
    pub estimate: f64,
    pub standard_error: f64,
    pub n_batches: usize,
    pub exact: Option<String>,
    pub exact_f64: Option<f64>,
    pub z_score: Option<f64>,
    pub warnings: Vec<String>,
}

/// Runs the simulation and compares with the exact error when it is available.
pub fn validation_report(cfg: &McConfig, table: &CoeffTable) -> Result<McReport> {
    let est = empirical_mse(cfg, table)?;
    let mut warnings = cfg.warnings();
    let (exact, exact_f64) = if cfg.pattern.has_time_component() {
        warnings.push("no exact reference for patterns with a time component".into());
        (None, None)
    } else {
        let r = exact_mse_with_table(&cfg.pattern, cfg.p, table, &cfg.interval)?;
        (Some(format_rational(&r.exact)), Some(r.exact_f64))
    };
    let z_score = exact_f64.map(|e| {
        if est.standard_error > 0.0 {
            (est.estimate - e) / est.standard_error
        } else if est.estimate == e {
            0.0
        } else {
            f64::INFINITY
        }
    });
    Ok(McReport {
        config: McConfigEcho {
            pattern: cfg.pattern.to_string(),
            p: cfg.p,
            exponents: cfg.weights.exponents().to_vec(),
            length: format_rational(&cfg.interval.length()),
            n_paths: cfg.n_paths,
            n_steps: cfg.n_steps,
            seed: cfg.seed,
        },
        estimate: est.estimate,
        standard_error: est.standard_error,
        n_batches: est.n_batches,
        exact,
        exact_f64,
        z_score,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{coefficient_table, DegreeCap};
    use crate::polycore::{int, rat, Rational};

    fn pat(labels: &[u32]) -> IndexPattern {
        IndexPattern::new(labels.to_vec()).unwrap()
    }

    fn config(
        labels: &[u32],
        p: usize,
        len: Rational,
        paths: usize,
        steps: usize,
    ) -> (McConfig, CoeffTable) {
        let w = WeightSpec::unit(labels.len()).unwrap();
        let table = coefficient_table(&w, p, &DegreeCap::default()).unwrap();
        let cfg = McConfig::new(
            pat(labels),
            p,
            w,
            Interval::with_length(len).unwrap(),
            paths,
            steps,
            7,
        )
        .unwrap();
        (cfg, table)
    }

    #[test]
    fn single_integral_is_total_increment() {
        let interval = Interval::with_length(int(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = WienerPath::generate(&pat(&[1]), 128, &interval, &mut rng);
        let total: f64 = path.increments(1).unwrap().iter().fold(0.0, |a, &b| a + b);
        let j = simulate_true_integral(&path, &WeightSpec::unit(1).unwrap(), &pat(&[1]), &interval)
            .unwrap();
        assert_eq!(j, total);
        let draw = zetas_from_path(&path, 2, &interval);
        assert!((draw.row(1).unwrap()[0] - total / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn double_repeated_matches_ito_formula_per_path() {
        let interval = Interval::with_length(int(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let path = WienerPath::generate(&pat(&[1, 1]), 256, &interval, &mut rng);
        let inc = path.increments(1).unwrap();
        let total: f64 = inc.iter().sum();
        let quad: f64 = inc.iter().map(|d| d * d).sum();
        let j = simulate_true_integral(
            &path,
            &WeightSpec::unit(2).unwrap(),
            &pat(&[1, 1]),
            &interval,
        )
        .unwrap();
        assert!((j - (total * total - quad) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let w = WeightSpec::unit(2).unwrap();
        let interval = Interval::with_length(int(1)).unwrap();
        assert!(McConfig::new(pat(&[1, 2]), 1, w.clone(), interval.clone(), 100, 32, 0).is_err());
        assert!(McConfig::new(pat(&[1, 2]), 1, w.clone(), interval.clone(), 0, 64, 0).is_err());
        let small = McConfig::new(pat(&[1, 2]), 1, w, interval, 10, 64, 0).unwrap();
        assert!(small.warnings()[0].contains(SMALL_SAMPLE_WARNING));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (cfg, table) = config(&[1, 2], 1, rat(1, 2), 400, 64);
        let a = empirical_mse(&cfg, &table).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| empirical_mse(&cfg, &table)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_run_is_near_exact() {
        let (cfg, table) = config(&[1, 2], 1, int(1), 4000, 256);
        let report = validation_report(&cfg, &table).unwrap();
        assert_eq!(report.exact.as_deref(), Some("1/12"));
        assert!(report.z_score.unwrap().abs() < 5.0, "{report:?}");
    }

    #[test]
    fn stable_sum_compensates() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(stable_sum(v), 2.0);
    }

    #[test]
    fn batch_mean_of_constant() {
        let est = batch_mean(&vec![0.5; 1000]);
        assert_eq!(est.estimate, 0.5);
        assert_eq!(est.standard_error, 0.0);
        assert_eq!(est.n_batches, 100);
    }
}
