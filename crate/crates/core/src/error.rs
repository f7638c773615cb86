use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("non-increasing times at row {row}")]
    NonIncreasingTimes { row: usize },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("non-uniform sampling: spacing {found} at row {row} differs from {expected}")]
    NonUniformSampling {
        row: usize,
        expected: f64,
        found: f64,
    },

    #[error("series of {len} points is too short for a {window}-point window")]
    SeriesTooShort { len: usize, window: usize },

    #[error("invalid smoother: {0}")]
    InvalidSmoother(String),

    #[error("time {t} outside observed range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("step {h} exceeds the smallest positive delay {min_delay}")]
    StepTooLarge { h: f64, min_delay: f64 },

    #[error("invalid history: {0}")]
    InvalidHistory(String),

    #[error("no upward crossing of {anchor} found in the search window")]
    NoCrossing { anchor: f64 },

    #[error("normalization constant is zero (all-zero observations)")]
    ZeroNormalization,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("json: {0}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
