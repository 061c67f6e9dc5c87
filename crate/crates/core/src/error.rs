use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NPY file {path} at byte {offset}: {reason}")]
    NpyParse {
        path: PathBuf,
        offset: usize,
        reason: String,
    },

    #[error("shape mismatch in {path}: {reason}")]
    ShapeMismatch { path: PathBuf, reason: String },

    #[error("non-finite value in {context} at flat index {index}")]
    NonFinite { context: String, index: usize },

    #[error("insufficient data for {what}: {reason}")]
    InsufficientData { what: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not positive definite (trace mean {trace_mean:e}) even after jitter")]
    NotPositiveDefinite { trace_mean: f64 },

    #[error("manifest error in {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("category `{category}` excluded: {reason}")]
    CategoryExcluded { category: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("image decoding failed for {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn insufficient(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InsufficientData {
            what: what.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by a bad configuration or arguments rather than
    /// by the data being processed.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
