//! On-disk coefficient tables.
//!
//! A table file is a JSON object with sorted keys:
//!
//! ```text
//! { "checksum": "<sha256 hex>", "degree_cap_version": 1,
//!   "entries": [{"core": "num/den", "half_power": a, "j": [j_1, ..], "two_power": b}, ..],
//!   "exponents": [..], "k": k, "manifest": {..}?, "p": p, "schema_version": 1 }
//! ```
//!
//! The checksum is the SHA-256 of the compact serialization of every field
//! except `checksum`, `manifest` and `rendering`, so the manifest (which
//! carries a timestamp) never changes the numeric payload's digest.
//! `rendering` holds interval-specific float values added by the CLI.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::{CoeffTable, DegreeCap, WeightSpec, DEGREE_CAP_VERSION};
use crate::error::{Error, Result};
use crate::polycore::{format_rational, parse_rational};

pub const CACHE_SCHEMA_VERSION: u32 = 1;

// Serializes writers within this process; cross-process writers race only on
// the final rename, which is atomic.
static WRITE_LOCK: Mutex<()> = Mutex::new(());

fn payload(table: &CoeffTable) -> Map<String, Value> {
    let w = table.weights();
    let entries: Vec<Value> = table
        .iter()
        .map(|(j, core)| {
            json!({
                "core": format_rational(core),
                "half_power": w.coeff_half_power(),
                "j": j.entries(),
                "two_power": w.coeff_two_power(),
            })
        })
        .collect();
    let mut map = Map::new();
    map.insert("schema_version".into(), json!(CACHE_SCHEMA_VERSION));
    map.insert("degree_cap_version".into(), json!(DEGREE_CAP_VERSION));
    map.insert("k".into(), json!(table.k()));
    map.insert("exponents".into(), json!(w.exponents()));
    map.insert("p".into(), json!(table.p()));
    map.insert("entries".into(), Value::Array(entries));
    map
}

fn checksum(payload: &Map<String, Value>) -> String {
    let canonical = serde_json::to_string(payload).expect("json maps always serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// The full JSON document for `table`, optionally embedding a run manifest.
pub fn table_document(table: &CoeffTable, manifest: Option<Value>) -> Value {
    let mut map = payload(table);
    let sum = checksum(&map);
    map.insert("checksum".into(), Value::String(sum));
    if let Some(m) = manifest {
        map.insert("manifest".into(), m);
    }
    Value::Object(map)
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn write_table(path: &Path, table: &CoeffTable, manifest: Option<Value>) -> Result<()> {
    let doc = table_document(table, manifest);
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    let _guard = WRITE_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("table"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(text.as_bytes())
            .map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads and verifies a table file. Any structural problem is an integrity error.
pub fn read_table(path: &Path) -> Result<CoeffTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: String| Error::CacheIntegrity {
        path: path.to_path_buf(),
        reason,
    };
    let doc: Value =
        serde_json::from_slice(&bytes).map_err(|e| corrupt(format!("not valid JSON: {e}")))?;
    let Value::Object(mut map) = doc else {
        return Err(corrupt("top level is not an object".into()));
    };
    let stored = match map.remove("checksum") {
        Some(Value::String(s)) => s,
        _ => return Err(corrupt("missing checksum".into())),
    };
    map.remove("manifest");
    map.remove("rendering");
    let actual = checksum(&map);
    if actual != stored {
        return Err(corrupt(format!(
            "checksum mismatch: stored {stored}, computed {actual}"
        )));
    }
    if map.get("schema_version") != Some(&json!(CACHE_SCHEMA_VERSION)) {
        return Err(corrupt("unsupported schema_version".into()));
    }
    if map.get("degree_cap_version") != Some(&json!(DEGREE_CAP_VERSION)) {
        return Err(corrupt("unsupported degree_cap_version".into()));
    }
    let field = |name: &str| {
        map.get(name)
            .ok_or_else(|| corrupt(format!("missing field `{name}`")))
    };
    let exponents: Vec<u32> = serde_json::from_value(field("exponents")?.clone())
        .map_err(|e| corrupt(format!("bad exponents: {e}")))?;
    let p: usize =
        serde_json::from_value(field("p")?.clone()).map_err(|e| corrupt(format!("bad p: {e}")))?;
    let k: usize =
        serde_json::from_value(field("k")?.clone()).map_err(|e| corrupt(format!("bad k: {e}")))?;
    let w = WeightSpec::new(exponents).map_err(|e| corrupt(e.to_string()))?;
    if w.k() != k {
        return Err(corrupt("k disagrees with exponents".into()));
    }
    let Some(Value::Array(entries)) = map.get("entries") else {
        return Err(corrupt("missing entries".into()));
    };
    let mut cores = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let j: Vec<usize> = serde_json::from_value(entry["j"].clone())
            .map_err(|e| corrupt(format!("entry {i}: bad j: {e}")))?;
        let expected_j = {
            let mut rem = i;
            let mut out = vec![0; k];
            for slot in out.iter_mut().rev() {
                *slot = rem % (p + 1);
                rem /= p + 1;
            }
            out
        };
        if j != expected_j {
            return Err(corrupt(format!("entry {i}: out of order index {j:?}")));
        }
        if entry["half_power"] != json!(w.coeff_half_power())
            || entry["two_power"] != json!(w.coeff_two_power())
        {
            return Err(corrupt(format!(
                "entry {i}: scale exponents disagree with weights"
            )));
        }
        let core = entry["core"]
            .as_str()
            .ok_or_else(|| corrupt(format!("entry {i}: core is not a string")))
            .and_then(|s| parse_rational(s).map_err(|e| corrupt(format!("entry {i}: {e}"))))?;
        cores.push(core);
    }
    CoeffTable::from_parts(w, p, cores).map_err(|e| corrupt(e.to_string()))
}

/// Directory-backed cache keyed by `(k, exponents, p, degree-cap version)`.
#[derive(Clone, Debug)]
pub struct CoeffCache {
    dir: PathBuf,
}

impl CoeffCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CoeffCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, w: &WeightSpec, p: usize) -> PathBuf {
        let q: Vec<String> = w.exponents().iter().map(u32::to_string).collect();
        self.dir.join(format!(
            "coeffs_k{}_q{}_p{}_v{}.json",
            w.k(),
            q.join("-"),
            p,
            DEGREE_CAP_VERSION
        ))
    }

    /// Loads a cached table, computing and storing it on a miss.
    ///
    /// A present but damaged file is reported, never silently recomputed.
    pub fn load_or_compute(&self, w: &WeightSpec, p: usize, cap: &DegreeCap) -> Result<CoeffTable> {
        cap.check_mode(p)?;
        cap.check_weights(w)?;
        let path = self.path_for(w, p);
        if path.exists() {
            let table = read_table(&path)?;
            if table.weights() != w || table.p() != p {
                return Err(Error::CacheIntegrity {
                    path,
                    reason: "file contents do not match its key".into(),
                });
            }
            return Ok(table);
        }
        let table = super::coefficient_table(w, p, cap)?;
        write_table(&path, &table, None)?;
        Ok(table)
    }
}
