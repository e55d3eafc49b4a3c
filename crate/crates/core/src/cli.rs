//! Command-line interface.
//!
//! Exit codes: 0 success, 2 usage or precondition failure, 3 integrity failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::coeffs::{
    coefficient_table, read_table, table_document, CoeffCache, CoeffTable, CoeffValue, DegreeCap,
    Interval, WeightSpec,
};
use crate::error::{Error, Result};
use crate::expansion::{sample_draw, CompiledExpansion, IndexPattern};
use crate::montecarlo::{validation_report, McConfig};
use crate::msekit::{
    cases_for, check_bound_preconditions, exact_mse_with_table, mse_bound_with_table, MseReport,
};
use crate::polycore::{format_rational, rational_to_f64};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const CACHE_DIR_ENV: &str = "COEFF_CACHE_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "legendre-ito",
    version,
    about = "Fourier-Legendre expansion of iterated Itô integrals"
)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Largest Legendre mode that may be requested.
    #[arg(long, global = true, default_value_t = DegreeCap::default().max_mode)]
    pub max_mode: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Coefficient table C_j for j in {0..p}^k.
    Coeffs {
        #[arg(long)]
        k: Option<usize>,
        /// Weight exponents q_1,..,q_k (default all zero).
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<u32>>,
        #[arg(long)]
        p: usize,
        /// Interval length T - t.
        #[arg(long, default_value = "1")]
        len: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TableFormat::Json)]
        format: TableFormat,
    },
    /// Exact mean-square error of the truncated expansion.
    Mse {
        #[arg(long)]
        pattern: String,
        #[arg(long)]
        p: usize,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<u32>>,
        #[arg(long, default_value = "1")]
        len: String,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Upper bound k!(I_k - Σ C_j^2) with per-level truncations.
    Bound {
        #[arg(long)]
        pattern: String,
        /// One truncation for every level, or a comma list p_1,..,p_k.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<u32>>,
        #[arg(long, default_value = "1")]
        len: String,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo comparison of the empirical and exact errors.
    Validate {
        #[arg(long, default_value = "1,2")]
        pattern: String,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<u32>>,
        #[arg(long, default_value = "1")]
        len: String,
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
        #[arg(long, default_value_t = 1024)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerated coincidence cases for multiplicity k.
    Cases {
        #[arg(long)]
        k: usize,
    },
    /// Matching terms of the expansion and one sample realization.
    Expand {
        #[arg(long)]
        pattern: String,
        #[arg(long)]
        p: usize,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<u32>>,
        #[arg(long, default_value = "1")]
        len: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Check the checksum of a coefficient file.
    Verify { file: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub schema_version: u32,
    pub tool_version: String,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, params: BTreeMap<String, String>, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.into(),
            params,
            seed,
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: timestamp(),
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("manifest serializes")
    }

    /// `# key=value` lines for CSV headers.
    pub fn csv_comments(&self) -> String {
        let mut out = format!("# command={}\n", self.command);
        for (k, v) in &self.params {
            out.push_str(&format!("# {k}={v}\n"));
        }
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed={seed}\n"));
        }
        out.push_str(&format!("# schema_version={}\n", self.schema_version));
        out.push_str(&format!("# tool_version={}\n", self.tool_version));
        out.push_str(&format!("# timestamp={}\n", self.timestamp));
        out
    }
}

// SOURCE_DATE_EPOCH pins the timestamp for reproducible files.
fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
    {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// 17 significant digits, the same string in every rendering.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => {
                let (mut o, mut e) = (Vec::new(), Vec::new());
                let r = pool.install(|| dispatch(&cli, &mut o, &mut e));
                let _ = out.write_all(&o);
                let _ = err.write_all(&e);
                r
            }
            Err(e) => Err(Error::Precondition(format!(
                "cannot start thread pool: {e}"
            ))),
        },
        Some(_) => Err(Error::Precondition("--threads must be positive".into())),
        None => dispatch(&cli, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CacheIntegrity { .. } => EXIT_INTEGRITY,
        _ => EXIT_USAGE,
    }
}

fn cap(cli: &Cli) -> DegreeCap {
    DegreeCap {
        max_mode: cli.max_mode,
        ..DegreeCap::default()
    }
}

fn weights_for(k: usize, q: &Option<Vec<u32>>) -> Result<WeightSpec> {
    match q {
        Some(q) if q.len() != k => Err(Error::LengthMismatch {
            expected: k,
            got: q.len(),
        }),
        Some(q) => WeightSpec::new(q.clone()),
        None => WeightSpec::unit(k),
    }
}

fn load_table(w: &WeightSpec, p: usize, cap: &DegreeCap) -> Result<CoeffTable> {
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(dir) if !dir.is_empty() => CoeffCache::new(dir).load_or_compute(w, p, cap),
        _ => coefficient_table(w, p, cap),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn emit(out: &mut dyn Write, path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(path) => write_file(path, text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn pretty(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("json values serialize");
    s.push('\n');
    s
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let cap = cap(cli);
    match &cli.command {
        Command::Coeffs {
            k,
            q,
            p,
            len,
            out: path,
            format,
        } => {
            let k = match (k, q) {
                (Some(k), _) => *k,
                (None, Some(q)) => q.len(),
                (None, None) => {
                    return Err(Error::Precondition("give --k or --q".into()));
                }
            };
            let w = weights_for(k, q)?;
            let interval = Interval::parse_length(len)?;
            let table = load_table(&w, *p, &cap)?;
            let mut params = BTreeMap::new();
            params.insert("k".into(), k.to_string());
            params.insert("q".into(), join(w.exponents()));
            params.insert("p".into(), p.to_string());
            params.insert("len".into(), format_rational(&interval.length()));
            params.insert("format".into(), format!("{format:?}").to_lowercase());
            let manifest = RunManifest::new("coeffs", params, None);
            let text = match format {
                TableFormat::Json => pretty(&coeffs_json(&table, &interval, &manifest)),
                TableFormat::Csv => coeffs_csv(&table, &interval, &manifest),
            };
            emit(out, path, &text)
        }
        Command::Mse {
            pattern,
            p,
            q,
            len,
            format,
            out: path,
        } => {
            let pattern = IndexPattern::parse(pattern)?;
            if pattern.has_time_component() {
                return Err(Error::TimeComponent {
                    pattern: pattern.to_string(),
                });
            }
            let w = weights_for(pattern.k(), q)?;
            let interval = Interval::parse_length(len)?;
            let table = load_table(&w, *p, &cap)?;
            let report = exact_mse_with_table(&pattern, *p, &table, &interval)?;
            let mut params = BTreeMap::new();
            params.insert("pattern".into(), pattern.to_string());
            params.insert("p".into(), p.to_string());
            params.insert("q".into(), join(w.exponents()));
            params.insert("len".into(), format_rational(&interval.length()));
            let manifest = RunManifest::new("mse", params, None);
            let rows = mse_rows(&report);
            emit(out, path, &render_rows(&rows, *format, &manifest))
        }
        Command::Bound {
            pattern,
            p,
            q,
            len,
            format,
            out: path,
        } => {
            let pattern = IndexPattern::parse(pattern)?;
            let truncations = match p.as_slice() {
                [single] => vec![*single; pattern.k()],
                list => list.to_vec(),
            };
            let w = weights_for(pattern.k(), q)?;
            let interval = Interval::parse_length(len)?;
            let p_max = truncations.iter().copied().max().unwrap_or(0);
            // Preconditions first, so a bad interval never triggers table work.
            check_bound_preconditions(&pattern, &truncations, &interval)?;
            let table = load_table(&w, p_max, &cap)?;
            let bound = mse_bound_with_table(&pattern, &truncations, &table, &interval)?;
            let mut params = BTreeMap::new();
            params.insert("pattern".into(), pattern.to_string());
            params.insert("p".into(), join(&truncations));
            params.insert("q".into(), join(w.exponents()));
            params.insert("len".into(), format_rational(&interval.length()));
            let manifest = RunManifest::new("bound", params, None);
            let rows = vec![
                ("pattern", pattern.to_string()),
                ("p", join(&truncations)),
                ("q", join(w.exponents())),
                ("len", format_rational(&interval.length())),
                ("bound", format_rational(&bound.exact)),
                ("bound_value", format_float(bound.value)),
            ];
            emit(out, path, &render_rows(&rows, *format, &manifest))
        }
        Command::Validate {
            pattern,
            p,
            q,
            len,
            paths,
            steps,
            seed,
            out: path,
        } => {
            let pattern = IndexPattern::parse(pattern)?;
            let w = weights_for(pattern.k(), q)?;
            let interval = Interval::parse_length(len)?;
            let cfg = McConfig::new(
                pattern.clone(),
                *p,
                w.clone(),
                interval.clone(),
                *paths,
                *steps,
                *seed,
            )?;
            let table = load_table(&w, *p, &cap)?;
            let report = validation_report(&cfg, &table)?;
            let mut params = BTreeMap::new();
            params.insert("pattern".into(), pattern.to_string());
            params.insert("p".into(), p.to_string());
            params.insert("q".into(), join(w.exponents()));
            params.insert("len".into(), format_rational(&interval.length()));
            params.insert("paths".into(), paths.to_string());
            params.insert("steps".into(), steps.to_string());
            let manifest = RunManifest::new("validate", params, Some(*seed));
            let mut doc = serde_json::to_value(&report)?;
            let obj = doc.as_object_mut().expect("report is an object");
            obj.insert("estimate".into(), json!(format_float(report.estimate)));
            obj.insert(
                "standard_error".into(),
                json!(format_float(report.standard_error)),
            );
            if let Some(e) = report.exact_f64 {
                obj.insert("exact_f64".into(), json!(format_float(e)));
            }
            if let Some(z) = report.z_score {
                obj.insert("z_score".into(), json!(format_float(z)));
                obj.insert("within_4_se".into(), json!(z.abs() < 4.0));
            }
            obj.insert("manifest".into(), manifest.to_json());
            for w in &report.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            emit(out, path, &pretty(&doc))
        }
        Command::Cases { k } => {
            let entries: Vec<_> = cases_for(*k).collect();
            if entries.is_empty() {
                return Err(Error::Multiplicity(*k));
            }
            let mut text = format!("k={k}: {} cases\n", entries.len());
            for c in entries {
                let groups: Vec<String> = c
                    .groups
                    .iter()
                    .filter(|g| g.len() > 1)
                    .map(|g| format!("S{{{}}}", join(g)))
                    .collect();
                let group = if groups.is_empty() {
                    "trivial".to_string()
                } else {
                    groups.join(" x ")
                };
                text.push_str(&format!(
                    "{:<10} {:<40} group {} (order {})\n",
                    c.label,
                    c.condition(),
                    group,
                    c.group_order()
                ));
            }
            emit(out, &None, &text)
        }
        Command::Expand {
            pattern,
            p,
            q,
            len,
            seed,
        } => {
            let pattern = IndexPattern::parse(pattern)?;
            let w = weights_for(pattern.k(), q)?;
            let interval = Interval::parse_length(len)?;
            let table = load_table(&w, *p, &cap)?;
            let compiled = CompiledExpansion::new(&pattern, *p, &table, &interval)?;
            let mut text = format!("pattern {pattern}, p = {p}\n");
            text.push_str(&format!("{} matching terms:\n", compiled.matchings().len()));
            for m in compiled.matchings() {
                let pairs: Vec<String> = m
                    .pairs
                    .iter()
                    .map(|(a, b)| format!("({},{})", a + 1, b + 1))
                    .collect();
                let free: Vec<String> = m.free.iter().map(|l| (l + 1).to_string()).collect();
                text.push_str(&format!(
                    "  {} pairs [{}] free [{}]\n",
                    if m.sign() > 0 { "+" } else { "-" },
                    pairs.join(" "),
                    free.join(",")
                ));
            }
            text.push_str(&format!(
                "{} nonzero coefficient orbits\n",
                compiled.terms().len()
            ));
            let draw = sample_draw(&pattern, *p, *seed, &interval);
            let value = compiled.eval(&draw)?;
            text.push_str(&format!(
                "sample realization (seed {seed}): {}\n",
                format_float(value)
            ));
            emit(out, &None, &text)
        }
        Command::Verify { file } => {
            let table = read_table(file)?;
            let bytes = fs::read(file).map_err(|e| Error::io(file, e))?;
            let doc: Value = serde_json::from_slice(&bytes)?;
            if let Some(rendering) = doc.get("rendering") {
                check_rendering(file, &table, rendering)?;
            }
            writeln!(
                out,
                "ok: k={} q={} p={} ({} entries)",
                table.k(),
                join(table.weights().exponents()),
                table.p(),
                table.len()
            )
            .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn entry_strings(
    table: &CoeffTable,
    interval: &Interval,
) -> Vec<(Vec<usize>, String, String, String)> {
    let floats = table.float_values(interval);
    let len = interval.length();
    table
        .iter()
        .zip(floats)
        .map(|((j, core), value)| {
            let exact = table
                .value(j.entries())
                .ok()
                .and_then(|v: CoeffValue| v.to_exact(&len))
                .map(|r| format_rational(&r))
                .unwrap_or_default();
            (
                j.entries().to_vec(),
                format_rational(core),
                exact,
                format_float(value),
            )
        })
        .collect()
}

fn rendering_json(table: &CoeffTable, interval: &Interval) -> Value {
    let values: Vec<Value> = entry_strings(table, interval)
        .into_iter()
        .map(|(j, _, exact, value)| {
            let mut m = serde_json::Map::new();
            m.insert("j".into(), json!(j));
            if !exact.is_empty() {
                m.insert("exact".into(), json!(exact));
            }
            m.insert("value".into(), json!(value));
            Value::Object(m)
        })
        .collect();
    json!({
        "length": format_rational(&interval.length()),
        "values": values,
    })
}

/// Coefficient file: cache-format payload plus manifest and float rendering.
pub fn coeffs_json(table: &CoeffTable, interval: &Interval, manifest: &RunManifest) -> Value {
    let mut doc = table_document(table, Some(manifest.to_json()));
    doc.as_object_mut()
        .expect("document is an object")
        .insert("rendering".into(), rendering_json(table, interval));
    doc
}

pub fn coeffs_csv(table: &CoeffTable, interval: &Interval, manifest: &RunManifest) -> String {
    let mut text = manifest.csv_comments();
    let heads: Vec<String> = (1..=table.k()).map(|l| format!("j_{l}")).collect();
    text.push_str(&format!("{},core,exact,value\n", heads.join(",")));
    for (j, core, exact, value) in entry_strings(table, interval) {
        text.push_str(&format!("{},{core},{exact},{value}\n", join(&j)));
    }
    text
}

fn check_rendering(file: &Path, table: &CoeffTable, rendering: &Value) -> Result<()> {
    let corrupt = |reason: &str| Error::CacheIntegrity {
        path: file.to_path_buf(),
        reason: reason.into(),
    };
    let len = rendering
        .get("length")
        .and_then(Value::as_str)
        .ok_or_else(|| corrupt("rendering has no length"))?;
    let interval =
        Interval::parse_length(len).map_err(|_| corrupt("rendering length is invalid"))?;
    if rendering_json(table, &interval) != *rendering {
        return Err(corrupt(
            "rendered values disagree with the coefficient cores",
        ));
    }
    Ok(())
}

fn mse_rows(r: &MseReport) -> Vec<(&'static str, String)> {
    vec![
        ("pattern", r.pattern.to_string()),
        ("case", r.case_id.unwrap_or("-").to_string()),
        ("certified", r.certified.to_string()),
        ("p", r.p.to_string()),
        ("q", join(r.weights.exponents())),
        ("len", format_rational(&r.length)),
        ("exact", format_rational(&r.exact)),
        ("value", format_float(r.exact_f64)),
        ("bound", format_rational(&r.bound)),
        ("bound_value", format_float(r.bound_f64)),
        ("kernel_norm", format_rational(&r.kernel_norm)),
        (
            "kernel_norm_value",
            format_float(rational_to_f64(&r.kernel_norm)),
        ),
    ]
}

fn render_rows(rows: &[(&str, String)], format: ReportFormat, manifest: &RunManifest) -> String {
    match format {
        ReportFormat::Text => {
            let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            rows.iter()
                .map(|(k, v)| format!("{k:<width$}  {v}\n"))
                .collect()
        }
        ReportFormat::Json => {
            let mut map = serde_json::Map::new();
            for (k, v) in rows {
                map.insert((*k).into(), json!(v));
            }
            map.insert("manifest".into(), manifest.to_json());
            pretty(&Value::Object(map))
        }
        ReportFormat::Csv => {
            let mut text = manifest.csv_comments();
            text.push_str("field,value\n");
            for (k, v) in rows {
                text.push_str(&format!("{k},{v}\n"));
            }
            text
        }
    }
}
