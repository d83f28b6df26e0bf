//! The [`Model`] abstraction and the differentiation entry points.
//!
//! A model maps a point `x` in `R^dim` to `m` outputs, parameterized by a
//! flat vector. Beyond plain evaluation it must support:
//!
//! * forward jet propagation under a [`JetPlan`] (exact `d1`/`d2` per axis);
//! * reverse-mode accumulation of parameter cotangents seeded on *jet
//!   components*, which is what differentiating a residual loss requires —
//!   the seed callback receives the computed jets and fills in the adjoint
//!   of each component;
//! * a cheap value-only vector-Jacobian product for diagnostics that only
//!   look at `du/dtheta`.
//!
//! [`fd`] holds the finite-difference oracles used by tests. They are never
//! on any training path.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{Jet2, JetPlan};
use crate::params::{FlatParams, ParamLayout};

pub trait Model: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn layout(&self) -> Arc<ParamLayout>;

    /// Whether jets under `plan` can be propagated (e.g. rejects
    /// non-smooth activations).
    fn check_plan(&self, plan: JetPlan) -> Result<()>;

    /// Plain forward evaluation. `out` has length `output_dim`.
    fn value(&self, params: &FlatParams, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Forward jets. `out[ch * comps + c]` per the plan's component order.
    fn jet(&self, params: &FlatParams, x: &[f64], plan: JetPlan, out: &mut [f64]) -> Result<()>;

    /// Forward jets, then reverse. `seed` is called exactly once with the
    /// computed jets and must fill the adjoint buffer (same layout); the
    /// parameter cotangent is accumulated into `grad`.
    fn jet_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        plan: JetPlan,
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()>;

    /// Value-only forward + reverse. `seed` receives the outputs and fills
    /// their adjoints; the cotangent is accumulated into `grad`.
    fn value_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()>;

    /// Resample any internal stochastic structure (e.g. region
    /// perturbations) from `(seed, stream)`. Deterministic models ignore it.
    fn refresh_perturbations(&mut self, _seed: u64, _stream: u64) {}

    /// Whether [`Model::refresh_perturbations`] actually changes this
    /// model. Optimizers that cache objective evaluations must invalidate
    /// them after each refresh when this returns true.
    fn has_perturbations(&self) -> bool {
        false
    }
}

/// Delegating impl so `&M` (including `&dyn Model`) is itself a model.
impl<M: Model + ?Sized> Model for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn layout(&self) -> Arc<ParamLayout> {
        (**self).layout()
    }
    fn check_plan(&self, plan: JetPlan) -> Result<()> {
        (**self).check_plan(plan)
    }
    fn value(&self, params: &FlatParams, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).value(params, x, out)
    }
    fn jet(&self, params: &FlatParams, x: &[f64], plan: JetPlan, out: &mut [f64]) -> Result<()> {
        (**self).jet(params, x, plan, out)
    }
    fn jet_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        plan: JetPlan,
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        (**self).jet_vjp(params, x, plan, seed, grad)
    }
    fn value_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        (**self).value_vjp(params, x, seed, grad)
    }
    fn has_perturbations(&self) -> bool {
        (**self).has_perturbations()
    }
}

pub(crate) fn check_input(model: &(impl Model + ?Sized), x: &[f64]) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::DimMismatch {
            what: "model input",
            expected: model.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Plain forward pass.
pub fn forward(model: &(impl Model + ?Sized), params: &FlatParams, x: &[f64]) -> Result<Vec<f64>> {
    check_input(model, x)?;
    let mut out = vec![0.0; model.output_dim()];
    model.value(params, x, &mut out)?;
    Ok(out)
}

/// Full second-order jets, one per output channel.
pub fn input_jet(
    model: &(impl Model + ?Sized),
    params: &FlatParams,
    x: &[f64],
) -> Result<Vec<Jet2>> {
    check_input(model, x)?;
    let dim = model.input_dim();
    let plan = JetPlan::full(dim);
    model.check_plan(plan)?;
    let comps = plan.comps();
    let m = model.output_dim();
    let mut buf = vec![0.0; m * comps];
    model.jet(params, x, plan, &mut buf)?;
    let mut jets = Vec::with_capacity(m);
    for ch in 0..m {
        let slot = crate::jet::JetSlot::new(plan, &buf[ch * comps..(ch + 1) * comps]);
        jets.push(slot.to_jet2());
    }
    Ok(jets)
}

/// Jacobian of outputs with respect to parameters, `m x |theta|` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl ParamGradient {
    pub fn row(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.cols..(ch + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// `du/dtheta` at `x`: one reverse pass per output channel.
pub fn param_gradient(
    model: &(impl Model + ?Sized),
    params: &FlatParams,
    x: &[f64],
) -> Result<ParamGradient> {
    check_input(model, x)?;
    let m = model.output_dim();
    let cols = model.layout().len();
    let mut data = vec![0.0; m * cols];
    for ch in 0..m {
        model.value_vjp(
            params,
            x,
            &mut |_vals, adj| adj[ch] = 1.0,
            &mut data[ch * cols..(ch + 1) * cols],
        )?;
    }
    Ok(ParamGradient { rows: m, cols, data })
}

/// Finite-difference oracles. Verification only — these cost
/// `O(|theta|)` model evaluations and are kept out of every hot path.
pub mod fd {
    use super::*;

    /// `||a - b|| / max(||b||, floor)`.
    pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        let diff: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        diff / norm.max(1e-12)
    }

    /// Central finite differences of the forward map with respect to the
    /// inputs: first and pure second derivatives per axis, as jets.
    pub fn fd_input_jet(
        model: &(impl Model + ?Sized),
        params: &FlatParams,
        x: &[f64],
        h: f64,
    ) -> Result<Vec<Jet2>> {
        let dim = model.input_dim();
        let m = model.output_dim();
        let u0 = super::forward(model, params, x)?;
        let mut jets: Vec<Jet2> = u0
            .iter()
            .map(|&v| {
                let mut j = Jet2::zero(dim);
                j.value = v;
                j
            })
            .collect();
        for axis in 0..dim {
            let mut xp = x.to_vec();
            xp[axis] += h;
            let mut xm = x.to_vec();
            xm[axis] -= h;
            let up = super::forward(model, params, &xp)?;
            let um = super::forward(model, params, &xm)?;
            for ch in 0..m {
                jets[ch].d1[axis] = (up[ch] - um[ch]) / (2.0 * h);
                jets[ch].d2[axis] = (up[ch] - 2.0 * u0[ch] + um[ch]) / (h * h);
            }
        }
        Ok(jets)
    }

    /// Central finite differences of `du_ch/dtheta`.
    pub fn fd_param_gradient(
        model: &(impl Model + ?Sized),
        params: &FlatParams,
        x: &[f64],
        ch: usize,
        h: f64,
    ) -> Result<Vec<f64>> {
        let n = params.len();
        let mut g = vec![0.0; n];
        let mut p = params.clone();
        for k in 0..n {
            let orig = p.values()[k];
            p.values_mut()[k] = orig + h;
            let up = super::forward(model, &p, x)?[ch];
            p.values_mut()[k] = orig - h;
            let um = super::forward(model, &p, x)?[ch];
            p.values_mut()[k] = orig;
            g[k] = (up - um) / (2.0 * h);
        }
        Ok(g)
    }

    /// Central finite differences of an arbitrary scalar objective over the
    /// parameter vector.
    pub fn fd_scalar_grad(
        params: &FlatParams,
        h: f64,
        mut f: impl FnMut(&FlatParams) -> Result<f64>,
    ) -> Result<Vec<f64>> {
        let n = params.len();
        let mut g = vec![0.0; n];
        let mut p = params.clone();
        for k in 0..n {
            let orig = p.values()[k];
            p.values_mut()[k] = orig + h;
            let fp = f(&p)?;
            p.values_mut()[k] = orig - h;
            let fm = f(&p)?;
            p.values_mut()[k] = orig;
            g[k] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }
}
