use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("eigenvalue iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("model format: {0}")]
    Model(String),

    #[error("all {count} candidate fits failed: {causes}")]
    AllFitsFailed { count: usize, causes: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Parse { .. }
            | Error::Empty(_)
            | Error::TooShort(_)
            | Error::Model(_)
            | Error::Degenerate(_) => ErrorClass::Data,
            Error::Dimension(_)
            | Error::NotPositiveDefinite
            | Error::NoConvergence(_)
            | Error::NonFinite(_)
            | Error::AllFitsFailed { .. } => ErrorClass::Numeric,
        }
    }
}
