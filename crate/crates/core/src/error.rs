//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by problem construction, sampling, solvers and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("example index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("outcome enumeration would exceed the guard of {limit} outcomes")]
    EnumerationGuard { limit: usize },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("lazy updates unavailable: {0}")]
    LazyUnavailable(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
