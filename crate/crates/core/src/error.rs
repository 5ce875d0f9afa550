use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {context} at sample {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid equation: {0}")]
    InvalidEquation(String),

    #[error("invalid bracket [{lo}, {hi}]: both ends give {outcome}")]
    InvalidBracket { lo: f64, hi: f64, outcome: String },

    #[error("profile r_max {r_max} does not cover radius {needed}")]
    ProfileCoverage { r_max: f64, needed: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (configs, flags) rather than I/O.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
