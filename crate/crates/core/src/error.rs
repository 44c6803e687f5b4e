use thiserror::Error;

/// Errors shared by every numeric module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions incompatible with the operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Two operands with incompatible shapes.
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),

    /// Cholesky pivot was non-positive; the matrix is not positive definite.
    #[error("factorization failed: non-positive pivot at index {pivot} (value {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Numerical breakdown during an iterative procedure.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed or unsupported model file.
    #[error("model file error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }
}
