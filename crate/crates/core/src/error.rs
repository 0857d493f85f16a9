use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is outside its domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration is structurally readable but semantically wrong.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Data that cannot support the requested operation
    /// (single-class labels, zero prediction variance, too few rows).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// File parse failure; `line` is 1-based and includes the header.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateData(msg.into())
    }
}
