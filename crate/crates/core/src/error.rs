use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: need {needed} training examples, task has {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("memory buffer is empty")]
    EmptyMemory,

    #[error("need at least {needed} nonzero paired differences, got {got}")]
    InsufficientPairs { needed: usize, got: usize },

    #[error("run record incomplete: {0}")]
    IncompleteRecord(String),

    #[error("data access violation: {0}")]
    DataAccess(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("report failed for {} file(s): {}", .files.len(), .files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join(", "))]
    Report { files: Vec<PathBuf> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short category name, used for CLI exit diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Shape(_) => "shape",
            Error::InvalidConfig(_) => "config",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::EmptyMemory => "empty-memory",
            Error::InsufficientPairs { .. } => "insufficient-pairs",
            Error::IncompleteRecord(_) => "incomplete-record",
            Error::DataAccess(_) => "data-access",
            Error::Format { .. } => "format",
            Error::Report { .. } => "report",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
