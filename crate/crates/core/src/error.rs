use thiserror::Error;

pub type Result<T> = std::result::Result<T, LagoError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LagoError {
    #[error("dimension mismatch for {what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dataset row {row}: {message}")]
    InvalidData { row: usize, message: String },

    #[error(
        "estimating equations did not converge after {iterations} iterations \
         (residual norm {residual_norm:.3e}, last beta {last_beta:?})"
    )]
    NonConvergence {
        iterations: usize,
        residual_norm: f64,
        last_beta: Vec<f64>,
    },

    #[error("design is rank deficient (condition number {condition:.3e}); collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<String>, condition: f64 },

    #[error("covariance block is singular: {0}")]
    SingularCovariance(String),

    #[error("covariance matrix is not positive semidefinite (quadratic form {0:.3e})")]
    NotPositiveSemidefinite(f64),

    #[error("grid has {cells:.3e} cells which exceeds the cap of {cap:.3e}; use a coarser increment")]
    GridTooLarge { cells: f64, cap: f64 },
}
