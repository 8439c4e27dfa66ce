use thiserror::Error;

/// Failures raised by the dense and banded linear algebra kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is singular to working precision (pivot {pivot} at index {index})")]
    RankDeficient { index: usize, pivot: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("matrix of size {size} exceeds the dense cap of {cap}")]
    TooLarge { size: usize, cap: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("oracle failed: {0}")]
    Oracle(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
