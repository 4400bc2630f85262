use std::io;

use thiserror::Error;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: expected {expected} signal, got {actual}")]
    Domain {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::Io(_) | Error::Format(_) => 4,
            Error::Dimension(_) => 5,
            Error::Training(_) => 6,
            Error::Domain { .. } | Error::UndefinedMetric(_) | Error::Usage(_) => 7,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
