use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid gradient check: {0}")]
    InvalidCheck(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("corrupted {what} at {path}: {reason}")]
    Corruption {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("not found: {0}")]
    Lookup(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(
        what: &'static str,
        path: impl Into<PathBuf>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Corruption {
            what,
            path: path.into(),
            reason: reason.into(),
        }
    }
}
