//! Training engine and diagnostics for physics-informed networks (PINNs)
//! on 1D+time benchmark PDEs.
//!
//! The crate has three layers:
//!
//! * a small forward-over-reverse automatic differentiation core
//!   ([`jet`], [`dense`], [`model`]) that carries exact first and second
//!   input derivatives (no mixed partials) through a model while supporting
//!   reverse-mode accumulation of parameter gradients *of* those
//!   derivatives — the nesting a PDE residual loss needs;
//! * the model zoo ([`models`]), PDE definitions ([`pde`]) and the training
//!   stack ([`train`], [`metrics`]);
//! * diagnostics for *why* PINN training fails ([`diag`]): gradient
//!   correlation between collocation points, a stiffness estimate obtained
//!   by actually perturbing parameters, and checks of the region-pooling
//!   boost inequality, plus a classical FEM/Jacobi demonstration of
//!   one-hop-per-iteration information propagation ([`fem`]).
//!
//! Everything is `f64`. Training-path derivatives are exact; finite
//! differences appear only in verification oracles ([`model::fd`]).
//!
//! Determinism: all randomness flows through explicit seeds, and parallel
//! reductions use a fixed-shape pairwise tree whose shape depends only on
//! the number of work items, never on thread scheduling. Two runs with the
//! same configuration produce identical loss traces.

pub mod dense;
pub mod diag;
pub mod error;
pub mod exp;
pub mod fem;
pub mod io;
pub mod jet;
pub mod metrics;
pub mod model;
pub mod models;
pub mod params;
pub mod pde;
pub mod points;
pub mod reduce;
pub mod train;

pub use error::{Error, Result};
