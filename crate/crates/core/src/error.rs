use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} exceeds the configured degree cap {cap}")]
    ModeCap { mode: usize, cap: usize },

    #[error("weight exponent {exponent} exceeds the configured cap {cap}")]
    ExponentCap { exponent: u32, cap: u32 },

    #[error("multiplicity k={0} is outside the supported range")]
    Multiplicity(usize),

    #[error("length mismatch: expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid interval: {0}")]
    Interval(String),

    #[error("invalid number `{0}`")]
    Parse(String),

    #[error(
        "pattern {pattern} contains a time component (label 0); the exact mean-square error \
         is only available for Wiener components, use the upper bound instead"
    )]
    TimeComponent { pattern: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("coefficient table has no entry for {0:?}")]
    MissingEntry(Vec<usize>),

    #[error("pattern {0} does not match any enumerated case")]
    UnmatchedCase(String),

    #[error("cache integrity failure in {path}: {reason}")]
    CacheIntegrity { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
