use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("unsupported dump: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("k = {k} out of range for vector of length {len}")]
    KOutOfRange { k: usize, len: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("percentile {0} outside [0, 100]")]
    PercentileOutOfRange(f64),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("missing attribution for non-random pixel selection")]
    MissingAttribution,

    #[error("dump has no perturbed activations and no network was supplied to generate them")]
    MissingPerturbed,

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("method mismatch: {0} vs {1}")]
    MethodMismatch(String, String),

    #[error("method {method} requires {what}")]
    MissingMethodParam { method: String, what: String },

    #[error("logit check failed at record {record}: |W a + b - z| = {deviation:.3e}")]
    LogitCheck { record: usize, deviation: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("score file: {0}")]
    Csv(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
