use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Every variant maps to a short, stable class name (see [`Error::class`]) so
/// that command-line tooling can report failures in a machine-parsable way.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("shape mismatch against config: {0}")]
    ConfigMismatch(String),

    #[error("truncated payload: {0}")]
    TruncatedPayload(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Stable kebab-case identifier of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) => "invalid-shape",
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidBatch(_) => "invalid-batch",
            Error::InvalidLabel(_) => "invalid-label",
            Error::NumericFailure(_) => "numeric-failure",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::CorruptHeader(_) => "corrupt-header",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::ConfigMismatch(_) => "config-mismatch",
            Error::TruncatedPayload(_) => "truncated-payload",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::Serialization(_) => "serialization",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
