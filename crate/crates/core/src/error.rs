use thiserror::Error;

/// Errors raised by the transport engine.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parameter {param} outside domain [{lo}, {hi}]")]
    Domain { param: f64, lo: f64, hi: f64 },

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("matrix is not invertible: {0}")]
    Invertibility(String),

    #[error("integration failed to converge at tau = {tau}: {reason}")]
    Convergence { tau: f64, reason: String },

    #[error("path is not closed: endpoints differ by {gap:e}")]
    NotALoop { gap: f64 },

    #[error("tangent bundle required (fiber dim {fiber_dim} != base dim {base_dim})")]
    TangentBundle { fiber_dim: usize, base_dim: usize },

    #[error("region is not flat: max curvature component {max_curvature:e} >= threshold {threshold:e}")]
    FlatnessViolation { max_curvature: f64, threshold: f64 },

    #[error("operation requires connection-induced coefficients")]
    NotConnectionInduced,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn eval(msg: impl Into<String>) -> Self {
        Error::Evaluation(msg.into())
    }
}
