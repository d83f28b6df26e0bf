//! Training driver: Adam warmup followed by L-BFGS refinement of the
//! composite collocation loss, with a per-iteration trace.
//!
//! Stochastic models (region perturbations) are resampled once per
//! iteration — training iteration `k` draws from RNG stream `k + 1` — and
//! the draw is frozen for the whole iteration, so every line-search probe
//! and the curvature pair `y = g_new − g_old` see one coherent objective.
//! Stream 0 is reserved for evaluation: error metrics and the final
//! reported loss are always computed under that draw, which makes numbers
//! comparable across runs regardless of how many iterations each ran.
//!
//! A non-finite loss aborts immediately with the offending iterate and
//! gradient attached, rather than letting the optimizer chase NaNs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, NanSnapshot, Result};
use crate::metrics::{compute_metrics, Metrics};
use crate::model::Model;
use crate::params::FlatParams;
use crate::pde::{CollocationSet, LossWeights, PdeProblem};
use crate::points::Points;

use super::adam::{Adam, AdamParams};
use super::lbfgs::{Lbfgs, LbfgsParams};
use super::loss::{loss_and_grad, LossBreakdown};

/// RNG stream used for evaluation and any reported-state computation.
/// Training iterations use streams `1, 2, 3, …`.
pub const EVAL_STREAM: u64 = 0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// First-order warmup iterations before switching to L-BFGS.
    pub adam_warmup: usize,
    /// L-BFGS iterations after the warmup.
    pub iterations: usize,
    pub adam: AdamParams,
    pub lbfgs: LbfgsParams,
    /// Overrides the problem's own loss weights when set.
    pub weights: Option<LossWeights>,
    /// Evaluate error metrics every this many iterations (0 = only at the
    /// end). The final iteration is always evaluated when a held-out set
    /// is provided.
    pub eval_every: usize,
    /// Seed for the perturbation RNG; ignored by deterministic models.
    pub perturb_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam_warmup: 0,
            iterations: 200,
            adam: AdamParams::default(),
            lbfgs: LbfgsParams::default(),
            weights: None,
            eval_every: 25,
            perturb_seed: 0,
        }
    }
}

/// Held-out evaluation set: points and reference values, same order.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub points: Points,
    pub truth: Vec<f64>,
}

impl EvalSet {
    pub fn new(points: Points, truth: Vec<f64>) -> Result<Self> {
        if points.len() != truth.len() {
            return Err(Error::DimMismatch {
                what: "evaluation truth values",
                expected: points.len(),
                got: truth.len(),
            });
        }
        Ok(EvalSet { points, truth })
    }
}

/// One trace line. `rmae`/`rrmse` are NaN on iterations where the held-out
/// metrics were not computed; `wall_ms` is cumulative wall time and is the
/// one column exempt from run-to-run determinism.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iteration: usize,
    pub total_loss: f64,
    pub res_loss: f64,
    pub ic_loss: f64,
    pub bc_loss: f64,
    pub rmae: f64,
    pub rrmse: f64,
    pub wall_ms: f64,
}

pub const TRACE_HEADER: [&str; 8] = [
    "iteration",
    "total_loss",
    "res_loss",
    "ic_loss",
    "bc_loss",
    "rmae",
    "rrmse",
    "wall_ms",
];

impl TraceRow {
    fn new(iteration: usize, bd: LossBreakdown, m: Option<Metrics>, since: &Instant) -> Self {
        TraceRow {
            iteration,
            total_loss: bd.total,
            res_loss: bd.res,
            ic_loss: bd.ic,
            bc_loss: bd.bc,
            rmae: m.map_or(f64::NAN, |m| m.rmae),
            rrmse: m.map_or(f64::NAN, |m| m.rrmse),
            wall_ms: since.elapsed().as_secs_f64() * 1e3,
        }
    }

    /// Column values in [`TRACE_HEADER`] order, for CSV output.
    pub fn csv_row(&self) -> [f64; 8] {
        [
            self.iteration as f64,
            self.total_loss,
            self.res_loss,
            self.ic_loss,
            self.bc_loss,
            self.rmae,
            self.rrmse,
            self.wall_ms,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Row 0 is the pre-training state; rows 1..=N follow each iteration.
    pub trace: Vec<TraceRow>,
    /// Loss under the evaluation draw at the final parameters.
    pub final_loss: LossBreakdown,
    /// Held-out metrics at the final parameters, when a set was given.
    pub final_metrics: Option<Metrics>,
    /// L-BFGS iterations that fell back to a short gradient step.
    pub fallback_steps: usize,
    /// Total objective (loss+gradient) evaluations across training.
    pub objective_evals: usize,
}

fn nonfinite(iteration: usize, params: &[f64], grad: &[f64]) -> Error {
    Error::NonFiniteLoss(Box::new(NanSnapshot {
        iteration,
        params: params.to_vec(),
        grad: grad.to_vec(),
    }))
}

fn evaluate<M: Model>(model: &M, params: &FlatParams, eval: &EvalSet) -> Result<Metrics> {
    let mut pred = vec![0.0; eval.points.len()];
    let mut out = [0.0];
    for (i, slot) in pred.iter_mut().enumerate() {
        model.value(params, eval.points.get(i), &mut out)?;
        *slot = out[0];
    }
    compute_metrics(&pred, &eval.truth)
}

/// Run the full schedule: `adam_warmup` first-order iterations, then
/// `iterations` quasi-Newton ones. `params` is updated in place.
pub fn train<M: Model>(
    model: &mut M,
    params: &mut FlatParams,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    cfg: &TrainConfig,
    eval: Option<&EvalSet>,
) -> Result<TrainResult> {
    let weights = cfg.weights.unwrap_or(problem.weights);
    weights.validate()?;
    let n = params.len();
    let perturbed = model.has_perturbations();
    let t0 = Instant::now();
    let mut objective_evals = 0usize;
    let mut fallback_steps = 0usize;

    // pre-training state, under the evaluation draw
    if perturbed {
        model.refresh_perturbations(cfg.perturb_seed, EVAL_STREAM);
    }
    let start = loss_and_grad(&*model, params, problem, colloc, &weights, None)?;
    objective_evals += 1;
    if !start.total.is_finite() {
        return Err(nonfinite(0, params.values(), &[]));
    }
    let start_metrics = eval.map(|e| evaluate(&*model, params, e)).transpose()?;
    let mut trace = vec![TraceRow::new(0, start, start_metrics, &t0)];

    let total_iters = cfg.adam_warmup + cfg.iterations;
    if total_iters == 0 {
        return Ok(TrainResult {
            trace,
            final_loss: start,
            final_metrics: start_metrics,
            fallback_steps: 0,
            objective_evals,
        });
    }

    let mut adam = Adam::new(n, cfg.adam);
    let mut lbfgs = Lbfgs::new(cfg.lbfgs);
    let mut grad = vec![0.0; n];

    for k in 0..total_iters {
        let iter1 = k + 1;
        if perturbed {
            model.refresh_perturbations(cfg.perturb_seed, k as u64 + 1);
            lbfgs.invalidate_cache();
        }

        let bd = if k < cfg.adam_warmup {
            let b = loss_and_grad(&*model, params, problem, colloc, &weights, Some(&mut grad))?;
            objective_evals += 1;
            if !b.total.is_finite() {
                return Err(nonfinite(iter1, params.values(), &grad));
            }
            adam.step(params.values_mut(), &grad);
            b
        } else {
            let mut pending: Option<LossBreakdown> = None;
            let report = {
                let mut scratch = params.clone();
                let model_ref = &*model;
                let pending = &mut pending;
                lbfgs.step(params.values_mut(), move |theta: &[f64]| {
                    scratch.values_mut().copy_from_slice(theta);
                    let mut g = vec![0.0; n];
                    let b = loss_and_grad(
                        model_ref, &scratch, problem, colloc, &weights,
                        Some(&mut g),
                    )?;
                    if !b.total.is_finite() {
                        return Err(nonfinite(iter1, theta, &g));
                    }
                    *pending = Some(b);
                    Ok((b.total, g))
                })?
            };
            objective_evals += report.evals;
            if report.fallback {
                fallback_steps += 1;
            }
            match pending {
                // bitwise match means the last probe *was* the accepted
                // point, so its breakdown is exactly the accepted loss
                Some(p) if p.total == report.loss_after => p,
                _ => {
                    // accepted point differs from the last probe (cached
                    // start reused, or best-so-far rollback): recompute
                    let b = loss_and_grad(&*model, params, problem, colloc, &weights, None)?;
                    objective_evals += 1;
                    b
                }
            }
        };

        // scheduled held-out metric, under the evaluation draw; skip the
        // final iteration — it is always evaluated below
        let scheduled =
            cfg.eval_every > 0 && iter1 % cfg.eval_every == 0 && iter1 != total_iters;
        let metrics = match (eval, scheduled) {
            (Some(e), true) => {
                if perturbed {
                    model.refresh_perturbations(cfg.perturb_seed, EVAL_STREAM);
                }
                Some(evaluate(&*model, params, e)?)
            }
            _ => None,
        };
        trace.push(TraceRow::new(iter1, bd, metrics, &t0));
    }

    // final accounting under the evaluation draw
    if perturbed {
        model.refresh_perturbations(cfg.perturb_seed, EVAL_STREAM);
    }
    let final_loss = loss_and_grad(&*model, params, problem, colloc, &weights, None)?;
    objective_evals += 1;
    let final_metrics = eval.map(|e| evaluate(&*model, params, e)).transpose()?;
    if let (Some(m), Some(row)) = (final_metrics.as_ref(), trace.last_mut()) {
        row.rmae = m.rmae;
        row.rrmse = m.rrmse;
    }

    Ok(TrainResult {
        trace,
        final_loss,
        final_metrics,
        fallback_steps,
        objective_evals,
    })
}
