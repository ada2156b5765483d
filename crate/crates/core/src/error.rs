use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate link: {0}")]
    DegenerateLink(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("internal invariant violation: {0}")]
    Invariant(String),

    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
