//! Model zoo: the baseline MLP, the region-pooled network, the
//! region-lifting wrapper used by the boost diagnostic, and the analytic /
//! combinator models that tests and diagnostics lean on.

pub mod analytic;
pub mod combinators;
pub mod mlp;
pub mod perturb;
pub mod propinn;
pub mod region;

pub use analytic::AnalyticModel;
pub use combinators::{Scaled, SharedSum};
pub use mlp::{Activation, Mlp, MlpConfig};
pub use perturb::{PerturbationBatch, RegionSpec};
pub use propinn::{ProPinn, ProPinnConfig};
pub use region::RegionLifted;
