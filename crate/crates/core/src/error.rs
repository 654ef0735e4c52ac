use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum HvafError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid count: {count} samples requested from a signal of length {n}")]
    InvalidCount { count: usize, n: usize },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("infeasible separation: {0}")]
    InfeasibleSeparation(String),

    #[error("invalid rank {rank}: must lie in 1..={max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid reference: {0}")]
    InvalidReference(String),

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = HvafError> = std::result::Result<T, E>;
