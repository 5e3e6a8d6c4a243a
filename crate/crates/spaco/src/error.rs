use thiserror::Error;

/// Errors produced by problem oracles, solvers, and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {what} at iteration {k}")]
    NonFinite { what: String, k: usize },

    #[error("inner maximization did not converge after {iterations} iterations (residual {residual:.3e})")]
    InnerSolveFailed { iterations: usize, residual: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("problem has no analytic reference but one is required")]
    MissingReference,

    #[error("classification is ambiguous: point is within radius of both the true and a spurious solution; shrink the radius")]
    AmbiguousClassification,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
