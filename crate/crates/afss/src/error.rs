//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image id list is empty")]
    EmptyIdList,

    #[error("duplicate image id '{0}'")]
    DuplicateId(String),

    #[error("invalid image id {0:?}: ids must be non-empty and free of whitespace, commas, and control characters")]
    InvalidImageId(String),

    #[error("unknown image id '{0}'")]
    UnknownId(String),

    #[error("epoch mismatch: expected {expected}, got {got}")]
    EpochMismatch { expected: u64, got: u64 },

    #[error("metrics batch sourced at epoch {batch} cannot be applied at epoch {requested}")]
    MetricsEpochMismatch { batch: u64, requested: u64 },

    #[error("{context}: value {value} outside [0, 1]")]
    OutOfRange { context: String, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unsupported snapshot version {found} (supported: {supported})")]
    UnsupportedVersion { found: String, supported: u32 },

    #[error("difficulty mix fractions sum to {0}, expected 1")]
    MixFractionSum(f64),

    #[error("unknown sweep parameter '{0}'")]
    UnknownSweepParameter(String),

    #[error("{0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
