//! Small model combinators used by property tests and diagnostics.
//!
//! `Scaled` multiplies a model's output by a constant; with a power-of-two
//! factor every derived quantity scales exactly, which makes the quadratic
//! scale covariance of gradient-correlation measures testable bitwise.
//! `SharedSum` adds two models that read the same flat parameter vector,
//! exposing gradient additivity as an observable property.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::JetPlan;
use crate::model::Model;
use crate::params::{FlatParams, ParamLayout};

#[derive(Debug, Clone)]
pub struct Scaled<M> {
    inner: M,
    factor: f64,
}

impl<M: Model> Scaled<M> {
    pub fn new(inner: M, factor: f64) -> Self {
        Scaled { inner, factor }
    }
}

impl<M: Model> Model for Scaled<M> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn layout(&self) -> Arc<ParamLayout> {
        self.inner.layout()
    }

    fn check_plan(&self, plan: JetPlan) -> Result<()> {
        self.inner.check_plan(plan)
    }

    fn value(&self, params: &FlatParams, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.value(params, x, out)?;
        for v in out.iter_mut() {
            *v *= self.factor;
        }
        Ok(())
    }

    fn jet(&self, params: &FlatParams, x: &[f64], plan: JetPlan, out: &mut [f64]) -> Result<()> {
        self.inner.jet(params, x, plan, out)?;
        for v in out.iter_mut() {
            *v *= self.factor;
        }
        Ok(())
    }

    fn jet_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        plan: JetPlan,
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        let c = self.factor;
        self.inner.jet_vjp(
            params,
            x,
            plan,
            &mut |jets, adj| {
                let scaled: Vec<f64> = jets.iter().map(|j| j * c).collect();
                seed(&scaled, adj);
                for a in adj.iter_mut() {
                    *a *= c;
                }
            },
            grad,
        )
    }

    fn value_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        let c = self.factor;
        self.inner.value_vjp(
            params,
            x,
            &mut |vals, adj| {
                let scaled: Vec<f64> = vals.iter().map(|v| v * c).collect();
                seed(&scaled, adj);
                for a in adj.iter_mut() {
                    *a *= c;
                }
            },
            grad,
        )
    }

    fn refresh_perturbations(&mut self, seed: u64, stream: u64) {
        self.inner.refresh_perturbations(seed, stream);
    }
}

/// Sum of two models evaluated on one shared parameter vector. Both
/// operands must agree on dimensions and on the total parameter count
/// (the layout of the first operand is the published one).
#[derive(Debug, Clone)]
pub struct SharedSum<A, B> {
    a: A,
    b: B,
}

impl<A: Model, B: Model> SharedSum<A, B> {
    pub fn new(a: A, b: B) -> Result<Self> {
        if a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim() {
            return Err(Error::config("summed models must agree on dimensions"));
        }
        if a.layout().len() != b.layout().len() {
            return Err(Error::config(
                "summed models must agree on parameter count to share a vector",
            ));
        }
        Ok(SharedSum { a, b })
    }
}

impl<A: Model, B: Model> Model for SharedSum<A, B> {
    fn input_dim(&self) -> usize {
        self.a.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.a.output_dim()
    }

    fn layout(&self) -> Arc<ParamLayout> {
        self.a.layout()
    }

    fn check_plan(&self, plan: JetPlan) -> Result<()> {
        self.a.check_plan(plan)?;
        self.b.check_plan(plan)
    }

    fn value(&self, params: &FlatParams, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.a.value(params, x, out)?;
        let mut tmp = vec![0.0; out.len()];
        self.b.value(params, x, &mut tmp)?;
        for (o, t) in out.iter_mut().zip(tmp) {
            *o += t;
        }
        Ok(())
    }

    fn jet(&self, params: &FlatParams, x: &[f64], plan: JetPlan, out: &mut [f64]) -> Result<()> {
        self.a.jet(params, x, plan, out)?;
        let mut tmp = vec![0.0; out.len()];
        self.b.jet(params, x, plan, &mut tmp)?;
        for (o, t) in out.iter_mut().zip(tmp) {
            *o += t;
        }
        Ok(())
    }

    fn jet_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        plan: JetPlan,
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        let width = self.output_dim() * plan.comps();
        let mut jets = vec![0.0; width];
        self.jet(params, x, plan, &mut jets)?;
        let mut adj = vec![0.0; width];
        seed(&jets, &mut adj);
        self.a.jet_vjp(
            params,
            x,
            plan,
            &mut |_j, a| a.copy_from_slice(&adj),
            grad,
        )?;
        self.b.jet_vjp(
            params,
            x,
            plan,
            &mut |_j, a| a.copy_from_slice(&adj),
            grad,
        )
    }

    fn value_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        let m = self.output_dim();
        let mut vals = vec![0.0; m];
        self.value(params, x, &mut vals)?;
        let mut adj = vec![0.0; m];
        seed(&vals, &mut adj);
        self.a
            .value_vjp(params, x, &mut |_v, a| a.copy_from_slice(&adj), grad)?;
        self.b
            .value_vjp(params, x, &mut |_v, a| a.copy_from_slice(&adj), grad)
    }

    fn refresh_perturbations(&mut self, seed: u64, stream: u64) {
        self.a.refresh_perturbations(seed, stream);
        self.b.refresh_perturbations(seed, stream);
    }
}
