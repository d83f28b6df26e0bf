//! Parameter-free models defined by closed-form expressions.
//!
//! An `AnalyticModel` wraps a scalar function evaluated over the
//! second-order scalar-jet algebra, so it supplies values and derivatives
//! through the same [`Model`] interface the learned architectures use.
//! Closed-form PDE references and synthetic diagnostic targets are built
//! from these. The wrapped function must be twice differentiable wherever
//! it is evaluated.

use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::jet::{Dual2, JetPlan};
use crate::model::{check_input, Model};
use crate::params::{FlatParams, ParamLayout};

type AnalyticFn = dyn Fn(&[Dual2]) -> Dual2 + Send + Sync;

#[derive(Clone)]
pub struct AnalyticModel {
    dim: usize,
    layout: Arc<ParamLayout>,
    f: Arc<AnalyticFn>,
}

impl fmt::Debug for AnalyticModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticModel").field("dim", &self.dim).finish()
    }
}

impl AnalyticModel {
    pub fn new(dim: usize, f: Arc<AnalyticFn>) -> Self {
        AnalyticModel {
            dim,
            layout: ParamLayout::builder().finish(),
            f,
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, Arc::new(move |x: &[Dual2]| Dual2::constant(x[0].dim, c)))
    }

    fn eval(&self, x: &[f64]) -> Dual2 {
        let vars = Dual2::vars(x);
        (self.f)(&vars)
    }

    /// Value without the parameter plumbing (there are no parameters).
    pub fn eval_value(&self, x: &[f64]) -> f64 {
        self.eval(x).v
    }

    /// Full second-order jet at `x`, again parameter-free.
    pub fn eval_jet(&self, x: &[f64]) -> crate::jet::Jet2 {
        let d = self.eval(x);
        crate::jet::Jet2 {
            value: d.v,
            d1: d.d1[..self.dim].to_vec(),
            d2: d.d2[..self.dim].to_vec(),
        }
    }
}

impl Model for AnalyticModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn layout(&self) -> Arc<ParamLayout> {
        self.layout.clone()
    }

    fn check_plan(&self, plan: JetPlan) -> Result<()> {
        if plan.dim() != self.dim {
            return Err(crate::error::Error::DimMismatch {
                what: "jet plan dimension",
                expected: self.dim,
                got: plan.dim(),
            });
        }
        Ok(())
    }

    fn value(&self, _params: &FlatParams, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_input(self, x)?;
        out[0] = self.eval(x).v;
        Ok(())
    }

    fn jet(&self, _params: &FlatParams, x: &[f64], plan: JetPlan, out: &mut [f64]) -> Result<()> {
        check_input(self, x)?;
        self.check_plan(plan)?;
        let d = self.eval(x);
        out[0] = d.v;
        for (slot, axis) in plan.d1_slots() {
            out[slot] = d.d1[axis];
        }
        for (slot, _, axis) in plan.d2_slots() {
            out[slot] = d.d2[axis];
        }
        Ok(())
    }

    fn jet_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        plan: JetPlan,
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        _grad: &mut [f64],
    ) -> Result<()> {
        // no parameters: the adjoint has nowhere to go, but the seed still
        // observes the jets so residual bookkeeping works uniformly
        let mut jets = vec![0.0; plan.comps()];
        self.jet(params, x, plan, &mut jets)?;
        let mut adj = vec![0.0; jets.len()];
        seed(&jets, &mut adj);
        Ok(())
    }

    fn value_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        _grad: &mut [f64],
    ) -> Result<()> {
        let mut vals = [0.0];
        self.value(params, x, &mut vals)?;
        let mut adj = [0.0];
        seed(&vals, &mut adj);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::input_jet;

    #[test]
    fn analytic_jets_carry_exact_derivatives() {
        // u(x, t) = sin(x) * exp(-t)
        let m = AnalyticModel::new(
            2,
            Arc::new(|x: &[Dual2]| x[0].sin() * (-x[1]).exp()),
        );
        let p = FlatParams::zeros(m.layout());
        let (x, t) = (0.7, 0.3);
        let jets = input_jet(&m, &p, &[x, t]).unwrap();
        let e = (-t as f64).exp();
        assert!((jets[0].value - x.sin() * e).abs() < 1e-15);
        assert!((jets[0].d1[0] - x.cos() * e).abs() < 1e-15);
        assert!((jets[0].d1[1] + x.sin() * e).abs() < 1e-15);
        assert!((jets[0].d2[0] + x.sin() * e).abs() < 1e-15);
        assert!((jets[0].d2[1] - x.sin() * e).abs() < 1e-15);
    }

    #[test]
    fn analytic_models_have_no_parameters() {
        let m = AnalyticModel::constant(2, 3.5);
        assert_eq!(m.layout().len(), 0);
        let p = FlatParams::zeros(m.layout());
        let mut out = [0.0];
        m.value(&p, &[1.0, 2.0], &mut out).unwrap();
        assert_eq!(out[0], 3.5);
    }
}
