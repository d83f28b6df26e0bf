//! Composite loss, optimizers, and the deterministic training loop.

pub mod adam;
pub mod lbfgs;
pub mod loss;
pub mod trainer;

pub use crate::pde::LossWeights;
pub use adam::{Adam, AdamParams};
pub use lbfgs::{Lbfgs, LbfgsParams, StepReport};
pub use loss::{composite_loss, composite_loss_grad, param_gradient_of_residual_loss, LossBreakdown};
pub use trainer::{train, EvalSet, TraceRow, TrainConfig, TrainResult, TRACE_HEADER};
