//! Composite PINN loss over a collocation set:
//!
//! ```text
//! L = (λ_res/n_res) Σ r(x_i)²  +  (λ_ic/n_ic) Σ ‖I(u)(x_i)‖²
//!                              +  (λ_bc/n_bc) Σ ‖B(u)(x_i)‖²
//! ```
//!
//! where the initial-condition operator `I` stacks every IC term (value
//! and, for the wave problem, initial velocity) and the boundary operator
//! `B` is either a Dirichlet pin or a periodic pairing (value, and
//! optionally the spatial derivative).
//!
//! Points are processed in fixed 256-point blocks; block partials are
//! combined by a pairwise tree whose shape depends only on the point
//! count, so losses and gradients are bitwise identical no matter how
//! rayon schedules the blocks. The gradient is accumulated through the
//! exact same block structure as the loss — optimizers never see a
//! different code path.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jet::JetSlot;
use crate::model::Model;
use crate::params::FlatParams;
use crate::pde::{
    BoundaryPoints, CollocationSet, IcTerm, LossWeights, PdeProblem, AXIS_T, AXIS_X,
};
use crate::points::Points;
use crate::reduce::{pairwise_sum, pairwise_sum_vecs};

/// Weighted, count-normalized term values; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub res: f64,
    pub ic: f64,
    pub bc: f64,
}

const BLOCK: usize = 256;

/// Map `f` over `0..n` in fixed blocks, each block serial, blocks
/// parallel; combine block sums with the pairwise tree. When `grad_len`
/// is `Some`, each block accumulates its own gradient buffer and the
/// buffers are tree-summed too.
fn block_reduce<F>(n: usize, grad_len: Option<usize>, f: F) -> Result<(f64, Option<Vec<f64>>)>
where
    F: Fn(usize, Option<&mut [f64]>) -> Result<f64> + Sync,
{
    if n == 0 {
        return Ok((0.0, grad_len.map(|l| vec![0.0; l])));
    }
    let nblocks = n.div_ceil(BLOCK);
    let partials: Result<Vec<(f64, Option<Vec<f64>>)>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(n);
            let mut grad = grad_len.map(|l| vec![0.0; l]);
            let mut acc = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                acc.push(f(i, grad.as_deref_mut())?);
            }
            Ok((pairwise_sum(&acc), grad))
        })
        .collect();
    let partials = partials?;
    let losses: Vec<f64> = partials.iter().map(|(l, _)| *l).collect();
    let loss = pairwise_sum(&losses);
    let grad = if grad_len.is_some() {
        let vecs: Vec<Vec<f64>> = partials.into_iter().map(|(_, g)| g.unwrap()).collect();
        pairwise_sum_vecs(vecs)
    } else {
        None
    };
    Ok((loss, grad))
}

/// Full loss + optional gradient in one pass. This single function is the
/// code path behind `composite_loss`, `composite_loss_grad`, and the
/// optimizer oracles, so "the gradient the optimizer uses" and "the
/// gradient the tests check" cannot diverge.
pub fn loss_and_grad<M: Model>(
    model: &M,
    params: &FlatParams,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    weights: &LossWeights,
    mut grad: Option<&mut [f64]>,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let (n_res, n_ic, n_bc) = colloc.counts();
    if weights.res > 0.0 && n_res == 0 {
        return Err(Error::config("residual weight set but no residual points"));
    }
    if weights.ic > 0.0 && n_ic == 0 {
        return Err(Error::config("ic weight set but no initial points"));
    }
    if weights.bc > 0.0 && n_bc == 0 {
        return Err(Error::config("bc weight set but no boundary points"));
    }
    let plan = problem.plan();
    let comps = plan.comps();
    let grad_len = grad.as_ref().map(|g| g.len());
    if let Some(l) = grad_len {
        if l != params.len() {
            return Err(Error::DimMismatch {
                what: "gradient buffer",
                expected: params.len(),
                got: l,
            });
        }
    }

    // --- residual term ---------------------------------------------------
    let scale_res = weights.res / n_res.max(1) as f64;
    let residual = problem.residual;
    let (sum_res, grad_res) = block_reduce(n_res, grad_len, |i, gbuf| {
        let x = colloc.residual.get(i);
        match gbuf {
            None => {
                let mut jets = vec![0.0; comps];
                model.jet(params, x, plan, &mut jets)?;
                let r = residual.eval(&JetSlot::new(plan, &jets));
                Ok(r * r)
            }
            Some(g) => {
                let mut r_cell = 0.0;
                model.jet_vjp(
                    params,
                    x,
                    plan,
                    &mut |jets, adj| {
                        let slot = JetSlot::new(plan, jets);
                        let r = residual.eval(&slot);
                        r_cell = r;
                        residual.adjoint(plan, &slot, 2.0 * scale_res * r, adj);
                    },
                    g,
                )?;
                Ok(r_cell * r_cell)
            }
        }
    })?;

    // --- initial-condition term -------------------------------------------
    let scale_ic = weights.ic / n_ic.max(1) as f64;
    let ics = &problem.ics;
    let (sum_ic, grad_ic) = block_reduce(n_ic, grad_len, |i, gbuf| {
        let x = colloc.initial.get(i);
        match gbuf {
            None => {
                let mut jets = vec![0.0; comps];
                model.jet(params, x, plan, &mut jets)?;
                let slot = JetSlot::new(plan, &jets);
                Ok(ic_sq(ics, x, &slot))
            }
            Some(g) => {
                let mut sq = 0.0;
                model.jet_vjp(
                    params,
                    x,
                    plan,
                    &mut |jets, adj| {
                        let slot = JetSlot::new(plan, jets);
                        sq = ic_sq(ics, x, &slot);
                        for ic in ics {
                            match ic {
                                IcTerm::Value(gfun) => {
                                    let e = slot.value() - gfun(x[AXIS_X]);
                                    adj[0] += 2.0 * scale_ic * e;
                                }
                                IcTerm::TimeDerivative(gfun) => {
                                    let e = slot.d1(AXIS_T) - gfun(x[AXIS_X]);
                                    adj[plan.d1_slot(AXIS_T).unwrap()] += 2.0 * scale_ic * e;
                                }
                            }
                        }
                    },
                    g,
                )?;
                Ok(sq)
            }
        }
    })?;

    // --- boundary term -----------------------------------------------------
    let scale_bc = weights.bc / n_bc.max(1) as f64;
    let (sum_bc, grad_bc) = match &colloc.boundary {
        BoundaryPoints::Dirichlet { points, value } => {
            let value = *value;
            block_reduce(n_bc, grad_len, |i, gbuf| {
                let x = points.get(i);
                match gbuf {
                    None => {
                        let mut out = [0.0];
                        model.value(params, x, &mut out)?;
                        let e = out[0] - value;
                        Ok(e * e)
                    }
                    Some(g) => {
                        let mut sq = 0.0;
                        model.value_vjp(
                            params,
                            x,
                            &mut |vals, adj| {
                                let e = vals[0] - value;
                                sq = e * e;
                                adj[0] += 2.0 * scale_bc * e;
                            },
                            g,
                        )?;
                        Ok(sq)
                    }
                }
            })?
        }
        BoundaryPoints::Pairs {
            a,
            b,
            with_derivative,
        } => pair_term(
            model,
            params,
            problem,
            a,
            b,
            *with_derivative,
            scale_bc,
            grad_len,
        )?,
    };

    let res = scale_res * sum_res;
    let ic = scale_ic * sum_ic;
    let bc = scale_bc * sum_bc;
    if let Some(g) = grad.as_deref_mut() {
        let parts = vec![grad_res.unwrap(), grad_ic.unwrap(), grad_bc.unwrap()];
        let total = pairwise_sum_vecs(parts).unwrap();
        g.copy_from_slice(&total);
    }
    Ok(LossBreakdown {
        total: res + ic + bc,
        res,
        ic,
        bc,
    })
}

fn ic_sq(ics: &[IcTerm], x: &[f64], slot: &JetSlot) -> f64 {
    let mut sq = 0.0;
    for ic in ics {
        let e = match ic {
            IcTerm::Value(g) => slot.value() - g(x[AXIS_X]),
            IcTerm::TimeDerivative(g) => slot.d1(AXIS_T) - g(x[AXIS_X]),
        };
        sq += e * e;
    }
    sq
}

/// Periodic pairing term: per pair, value gap (and derivative gap where
/// requested), squared and summed. The gradient needs both endpoints'
/// jets before either adjoint can be seeded, so each endpoint is
/// evaluated twice in the gradient path — boundary sets are tiny.
#[allow(clippy::too_many_arguments)]
fn pair_term<M: Model>(
    model: &M,
    params: &FlatParams,
    problem: &PdeProblem,
    a: &Points,
    b: &Points,
    with_derivative: bool,
    scale_bc: f64,
    grad_len: Option<usize>,
) -> Result<(f64, Option<Vec<f64>>)> {
    let plan = problem.plan();
    let comps = plan.comps();
    block_reduce(a.len(), grad_len, |i, gbuf| {
        let xa = a.get(i);
        let xb = b.get(i);
        let mut ja = vec![0.0; comps];
        let mut jb = vec![0.0; comps];
        model.jet(params, xa, plan, &mut ja)?;
        model.jet(params, xb, plan, &mut jb)?;
        let (va, vb) = (JetSlot::new(plan, &ja), JetSlot::new(plan, &jb));
        let e_val = va.value() - vb.value();
        let e_der = if with_derivative {
            va.d1(AXIS_X) - vb.d1(AXIS_X)
        } else {
            0.0
        };
        if let Some(g) = gbuf {
            let d1x = plan.d1_slot(AXIS_X);
            let seed_with = |sign: f64, x: &[f64], g: &mut [f64]| -> Result<()> {
                model.jet_vjp(
                    params,
                    x,
                    plan,
                    &mut |_jets, adj| {
                        adj[0] += sign * 2.0 * scale_bc * e_val;
                        if with_derivative {
                            adj[d1x.unwrap()] += sign * 2.0 * scale_bc * e_der;
                        }
                    },
                    g,
                )
            };
            seed_with(1.0, xa, g)?;
            seed_with(-1.0, xb, g)?;
        }
        Ok(e_val * e_val + e_der * e_der)
    })
}

pub fn composite_loss<M: Model>(
    model: &M,
    params: &FlatParams,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    loss_and_grad(model, params, problem, colloc, weights, None)
}

pub fn composite_loss_grad<M: Model>(
    model: &M,
    params: &FlatParams,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    weights: &LossWeights,
    grad: &mut [f64],
) -> Result<LossBreakdown> {
    loss_and_grad(model, params, problem, colloc, weights, Some(grad))
}

/// The gradient of the composite loss, by the same code path optimizers
/// call — exposed under its own name so the contract is a named, testable
/// fact rather than a convention.
pub fn param_gradient_of_residual_loss<M: Model>(
    model: &M,
    params: &FlatParams,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let breakdown = loss_and_grad(model, params, problem, colloc, weights, Some(&mut grad))?;
    Ok((breakdown, grad))
}
