//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any ember operation.
#[derive(Debug, Error)]
pub enum Error {
    /// The space file (or another structured document) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// Structurally valid input that violates a semantic rule
    /// (duplicate identifier, inverted bounds, unknown reference, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two values that must live on the same search space do not.
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    /// Vector operands of unequal dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An evaluator broke its contract (non-positive evaluation time,
    /// non-finite metric on success, unknown configuration).
    #[error("evaluator contract violation: {0}")]
    Contract(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
