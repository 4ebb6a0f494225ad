use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or inconsistent input data.
    Data,
    /// A numeric procedure failed (divergence, non-finite values).
    Numeric,
}

#[derive(Debug, Error)]
pub enum OodError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("bad embedding file: {0}")]
    BadEmbeddingFile(String),
    #[error("non-finite value in row `{0}`")]
    NonFinite(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error("model bundle schema mismatch: {0}")]
    Schema(String),
    #[error("model bundle is missing `{0}` required for serving")]
    ServingPrecondition(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl OodError {
    pub fn class(&self) -> ErrorClass {
        match self {
            OodError::Numeric(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OodError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OodError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = OodError> = std::result::Result<T, E>;
