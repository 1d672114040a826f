use thiserror::Error;

/// Which convergence precondition a parameter set violates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    /// `4^(q-1) * rho > alpha_q` failed for this (1-based) part index.
    Penalty { q: usize },
    /// `rho > sqrt(2) * lambda_max(H^H H)` failed (with the safety-inflated eigenvalue).
    RhoSpectral,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Condition::Penalty { q } => write!(f, "penalty condition 4^(q-1)*rho > alpha_q at q={q}"),
            Condition::RhoSpectral => write!(f, "spectral condition rho > sqrt(2)*lambda_max"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not Hermitian (max asymmetry {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} is not a valid constellation amplitude for Q={q_order}")]
    NotInConstellation { value: f64, q_order: u32 },

    #[error("{condition} violated (margin {margin:e})")]
    ConditionViolation { condition: Condition, margin: f64 },

    #[error("non-finite iterate at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("exhaustive search over U*Q = {size} exceeds limit {limit}")]
    SearchSpaceTooLarge { size: usize, limit: usize },

    #[error("zero diagonal entry at index {0}")]
    ZeroDiagonal(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
