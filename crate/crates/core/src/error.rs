use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{what} is not symmetric positive-definite")]
    NotPositiveDefinite { what: String },

    #[error("health label {0} is outside 1..=4")]
    InvalidLabel(i64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature vector contains a non-finite component")]
    NonFinite,

    #[error("posterior is not a probability simplex (sum deviates from 1 by {deviation:e})")]
    InvalidSimplex { deviation: f64 },

    #[error("{fraction} = {value} yields an empty sample")]
    EmptySample { fraction: &'static str, value: f64 },

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("labeled seed set is empty")]
    EmptyLabeledSeed,

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("repetition {rep} ({variant}) failed: {source}")]
    Repetition {
        rep: usize,
        variant: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
