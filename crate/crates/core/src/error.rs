use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The raw precoder has zero Frobenius norm, so the power scaling is undefined.
    #[error("degenerate precoder: total power of the unnormalized matrix is zero")]
    DegeneratePrecoder,

    #[error("singular channel: {0}")]
    SingularChannel(String),

    #[error("numerical failure in {stage}: {detail}")]
    NumericalFailure { stage: String, detail: String },

    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: line {line}: non-finite channel entry")]
    NonFinite { path: PathBuf, line: usize },

    #[error("{path}: position {position} has {found} APs, expected {expected}")]
    InconsistentAps {
        path: PathBuf,
        position: usize,
        expected: usize,
        found: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient combinations: C({n},{k}) = {available} < requested {requested}")]
    InsufficientCombinations {
        n: usize,
        k: usize,
        available: u128,
        requested: usize,
    },

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
