use thiserror::Error;

/// Errors raised by cone geometry, estimators and the verification harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point has non-finite coordinates")]
    NonFinite,

    #[error("point is not in the open cone {cone}")]
    NotInCone { cone: String },

    #[error("invalid cone model: {0}")]
    InvalidModel(String),

    #[error("singular matrix: |det A| = {det:e} is not above the guard eps_det = {guard:e}")]
    SingularMatrix { det: f64, guard: f64 },

    #[error("rejection budget of {budget} draws exhausted: {context}")]
    RejectionBudget { budget: u64, context: String },

    #[error("finite-difference stencil leaves the cone: boundary distance {distance:e} <= {required:e}")]
    StencilLeavesCone { distance: f64, required: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integral is not integrable: {0}")]
    NotIntegrable(String),

    #[error("test function requires a declared decay exponent for globally supported integration")]
    MissingDecay,

    #[error("probe refused: conditions of {0} are satisfied, a violation cannot be claimed")]
    ProbeRefused(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ConeError>;

impl ConeError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        ConeError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
