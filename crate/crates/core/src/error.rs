//! Crate-wide error type.

/// Parameter/gradient snapshot attached to a non-finite-loss abort so a
/// runner can dump the state that produced the NaN.
#[derive(Debug, Clone)]
pub struct NanSnapshot {
    pub iteration: usize,
    pub params: Vec<f64>,
    pub grad: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what}: expected length {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unsupported primitive for jet propagation: {0}")]
    UnsupportedPrimitive(String),

    #[error("unsupported derivative order {order}: residual evaluation supports orders up to 2")]
    UnsupportedOrder { order: usize },

    #[error("perturbation step too large: non-finite model output at lambda = {lambda:e}")]
    StepTooLarge { lambda: f64 },

    #[error("non-finite loss at iteration {}", .0.iteration)]
    NonFiniteLoss(Box<NanSnapshot>),

    #[error("degenerate reference: cannot normalize metrics by an all-zero reference")]
    DegenerateReference,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a [`Error::Config`] with a formatted message.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
