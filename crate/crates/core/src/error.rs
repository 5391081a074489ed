use thiserror::Error;

/// Errors raised by the numerical kernels, geometries and optimizers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("iteration did not converge: residual {residual:e} after {iterations} iterations")]
    ConvergenceFailure { residual: f64, iterations: usize },

    #[error("matrix is not positive definite: smallest eigenvalue {min_eig:e} <= floor {floor:e}")]
    NotPositiveDefinite { min_eig: f64, floor: f64 },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("unavailable: {0}")]
    Unavailable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
