//! Region lifting of an arbitrary model.
//!
//! `RegionLifted` wraps a model `u` and a fixed set of `k` perturbation
//! offsets, evaluating the *region field*
//!
//! ```text
//! u_region(x) = u(x) + (1/k) Σ_i u(x + δ_i)
//! ```
//!
//! — the base value plus the mean over perturbed companions, which is the
//! object the region-boost inequality is stated about. Its parameter
//! gradient is correspondingly `g(x) + mean_i g(x + δ_i)`. Note the base
//! term is *added to* the mean, not averaged into it: with all offsets
//! zero the field collapses to exactly `2 u(x)` (and its gradient
//! correlation to exactly `4 G`), which tests rely on bitwise.
//!
//! The companion mean is computed in deviation form around the first
//! companion with a pairwise tree inside, so identical companions cancel
//! exactly and the result is independent of summation order.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::JetPlan;
use crate::model::{check_input, Model};
use crate::models::perturb::PerturbationBatch;
use crate::params::{FlatParams, ParamLayout};
use crate::reduce::pairwise_sum_vecs;

#[derive(Debug, Clone)]
pub struct RegionLifted<M> {
    inner: M,
    /// The perturbation offsets δ_i, each of length `input_dim`. The base
    /// point is always evaluated separately and is not a companion.
    offsets: Vec<Vec<f64>>,
}

impl<M: Model> RegionLifted<M> {
    pub fn new(inner: M, offsets: Vec<Vec<f64>>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::config("region lift needs at least one perturbation"));
        }
        let dim = inner.input_dim();
        if offsets.iter().any(|d| d.len() != dim) {
            return Err(Error::DimMismatch {
                what: "region offset dimension",
                expected: dim,
                got: offsets.iter().map(|d| d.len()).find(|&l| l != dim).unwrap(),
            });
        }
        Ok(RegionLifted { inner, offsets })
    }

    /// Lift with a sampled batch: all scales flattened into one offset set.
    pub fn with_batch(inner: M, batch: &PerturbationBatch) -> Result<Self> {
        let mut offsets = Vec::new();
        for r in 0..batch.num_scales() {
            for i in 0..batch.count(r) {
                offsets.push(batch.offset(r, i).to_vec());
            }
        }
        Self::new(inner, offsets)
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn offsets(&self) -> &[Vec<f64>] {
        &self.offsets
    }

    /// `eval(x, out)` at the base point plus the deviation-form mean of the
    /// companions, component-wise over a `width`-sized output.
    fn lifted<F>(&self, x: &[f64], width: usize, mut eval: F) -> Result<Vec<f64>>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let dim = self.inner.input_dim();
        let mut base = vec![0.0; width];
        eval(x, &mut base)?;
        let mut shifted = vec![0.0; dim];
        let mut per: Vec<Vec<f64>> = Vec::with_capacity(self.offsets.len());
        for d in &self.offsets {
            for a in 0..dim {
                shifted[a] = x[a] + d[a];
            }
            let mut out = vec![0.0; width];
            eval(&shifted, &mut out)?;
            per.push(out);
        }
        let first = per[0].clone();
        let devs: Vec<Vec<f64>> = per
            .iter()
            .map(|v| v.iter().zip(&first).map(|(a, b)| a - b).collect())
            .collect();
        let sum = pairwise_sum_vecs(devs).expect("at least one companion");
        let inv_k = 1.0 / self.offsets.len() as f64;
        for ((b, f), s) in base.iter_mut().zip(&first).zip(sum) {
            *b += f + s * inv_k;
        }
        Ok(base)
    }
}

impl<M: Model> Model for RegionLifted<M> {
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
        check_input(self, x)?;
        let lifted = self.lifted(x, out.len(), |p, o| self.inner.value(params, p, o))?;
        out.copy_from_slice(&lifted);
        Ok(())
    }

    fn jet(&self, params: &FlatParams, x: &[f64], plan: JetPlan, out: &mut [f64]) -> Result<()> {
        check_input(self, x)?;
        self.check_plan(plan)?;
        // d/dx of u(x + delta) is u'(x + delta): companion jets combine
        // component-wise just like values
        let lifted = self.lifted(x, out.len(), |p, o| self.inner.jet(params, p, plan, o))?;
        out.copy_from_slice(&lifted);
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
        check_input(self, x)?;
        self.check_plan(plan)?;
        let width = self.inner.output_dim() * plan.comps();
        let mut jets = vec![0.0; width];
        self.jet(params, x, plan, &mut jets)?;
        let mut adj = vec![0.0; width];
        seed(&jets, &mut adj);
        // base companion carries the adjoint unscaled, each perturbed one
        // carries 1/k of it — the exact derivative of base + mean
        self.inner.jet_vjp(
            params,
            x,
            plan,
            &mut |_jets, out_adj| out_adj.copy_from_slice(&adj),
            grad,
        )?;
        let inv_k = 1.0 / self.offsets.len() as f64;
        let scaled: Vec<f64> = adj.iter().map(|a| a * inv_k).collect();
        let dim = self.inner.input_dim();
        let mut shifted = vec![0.0; dim];
        for d in &self.offsets {
            for a in 0..dim {
                shifted[a] = x[a] + d[a];
            }
            self.inner.jet_vjp(
                params,
                &shifted,
                plan,
                &mut |_jets, out_adj| out_adj.copy_from_slice(&scaled),
                grad,
            )?;
        }
        Ok(())
    }

    fn value_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        check_input(self, x)?;
        let m = self.inner.output_dim();
        let mut vals = vec![0.0; m];
        self.value(params, x, &mut vals)?;
        let mut adj = vec![0.0; m];
        seed(&vals, &mut adj);
        self.inner.value_vjp(
            params,
            x,
            &mut |_vals, out_adj| out_adj.copy_from_slice(&adj),
            grad,
        )?;
        let inv_k = 1.0 / self.offsets.len() as f64;
        let scaled: Vec<f64> = adj.iter().map(|a| a * inv_k).collect();
        let dim = self.inner.input_dim();
        let mut shifted = vec![0.0; dim];
        for d in &self.offsets {
            for a in 0..dim {
                shifted[a] = x[a] + d[a];
            }
            self.inner.value_vjp(
                params,
                &shifted,
                &mut |_vals, out_adj| out_adj.copy_from_slice(&scaled),
                grad,
            )?;
        }
        Ok(())
    }

    fn refresh_perturbations(&mut self, seed: u64, stream: u64) {
        self.inner.refresh_perturbations(seed, stream);
    }

    fn has_perturbations(&self) -> bool {
        self.inner.has_perturbations()
    }
}
