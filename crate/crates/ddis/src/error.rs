//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation requires a {expected:?} grid, got {got:?}")]
    UnsupportedBoundary {
        expected: crate::grid::Boundary,
        got: crate::grid::Boundary,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Helmholtz resonance: k^2 = {k_squared} is within {tolerance} of eigenvalue pi^2({m}^2+{n}^2)")]
    Resonance {
        k_squared: f64,
        m: usize,
        n: usize,
        tolerance: f64,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("unstable step size: dt = {dt} >= 2/lambda_max = {limit}; use dt < {limit}")]
    UnstableStepSize { dt: f64, limit: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DdisError>;
