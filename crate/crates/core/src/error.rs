use std::io;

use thiserror::Error;

/// Errors produced by the optimization library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: shapes, ranges or preconditions of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization or numerical routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A file did not match the expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// An enumeration would exceed its size guard.
    #[error("resource error: {0}")]
    Resource(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
