use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed table {path}: {message}")]
    Table { path: PathBuf, message: String },

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("matrix is not positive definite (column {column:?})")]
    NotPositiveDefinite { column: Option<usize> },

    #[error("degenerate target signature: t'S^-1 t = {value:e}")]
    DegenerateTarget { value: f64 },

    #[error("recalibration failed: no finite distance over the search interval")]
    FitFailed,

    #[error("placement failed after {attempts} attempts: {reason}")]
    Placement { attempts: usize, reason: String },

    #[error("too few background pixels: {found} (need {needed})")]
    TooFewBackground { found: usize, needed: usize },

    #[error("zero spread: {0}")]
    ZeroSpread(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
