//! Experiment orchestration: a single JSON config describes one training
//! run end to end — problem, model, collocation draw, optimizer schedule,
//! seeds, evaluation grid, output directory — and [`run`] turns it into a
//! directory of artifacts that another process (or a later session) can
//! consume without re-running anything:
//!
//! * `config_echo.json` — the resolved config plus a SHA-256 of its
//!   canonical serialization, so artifact directories are self-describing
//!   and two directories can be compared by hash alone.
//! * `train_trace.csv` — one row per optimizer iteration (plus row 0 for
//!   the initial state): losses, held-out metrics, wall clock.
//! * `metrics.json` — final held-out metrics, final loss split, and run
//!   accounting (objective evaluations, fallback steps, wall time).
//! * `solution_grid.csv` / `error_map.csv` — the trained network and its
//!   pointwise error sampled on the evaluation grid.
//! * `params.json` — the flat parameter vector; `serde_json` prints f64s
//!   with roundtrip precision and the workspace enables its
//!   `float_roundtrip` parser (default parsing is best-effort and can be
//!   an ulp off), so reloading reproduces the network bit for bit.
//!
//! All entropy is named in the config: `seeds.init` draws the parameters,
//! `seeds.perturbation` drives region resampling during training, and
//! `seeds.sampling` drives random collocation (overriding any seed carried
//! inside the collocation spec, so the `seeds` block is the single
//! authority). Given equal configs, every artifact byte is reproducible
//! except wall-clock fields (`wall_ms` in the trace, `wall_seconds` in the
//! metrics).
//!
//! The evaluation grid is cell-centered — `x_i = lo + (i + 1/2) * (hi -
//! lo)/nx` — so it shares no point with the node-centered training
//! lattices and the endpoint-anchored initial/boundary sets; held-out
//! metrics never reward memorizing collocation points.
//!
//! [`diagnose`] runs the propagation diagnostics (correlation map,
//! positive-correlation ratio, region boost check) on a fresh or reloaded
//! network without training, for before/after comparisons.

mod aggregate;

pub use aggregate::{
    paired_one_sided, repeat, sweep_region_sizes, PairedComparison, RepeatReport, RunStats,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diag;
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_csv};
use crate::model::{forward, Model};
use crate::models::{Mlp, MlpConfig, ProPinn, ProPinnConfig};
use crate::params::FlatParams;
use crate::pde::{by_name, sample_collocation, CollocationSpec, PdeProblem};
use crate::points::Points;
use crate::train::{
    train, AdamParams, EvalSet, LbfgsParams, LossWeights, TrainConfig, TrainResult, TRACE_HEADER,
};

/// Named width/depth presets so configs say what they mean instead of
/// repeating layer arithmetic. `Desk` is sized for a workstation run,
/// `Paper` for the full-scale result, `Tiny` for smoke tests only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MlpProfile {
    #[default]
    Desk,
    Paper,
    Tiny,
}

impl MlpProfile {
    fn config(self, input_dim: usize, output_dim: usize) -> MlpConfig {
        match self {
            // Five affine maps = four tanh hidden layers.
            MlpProfile::Desk => MlpConfig::new(input_dim, output_dim, 5, 128),
            MlpProfile::Paper => MlpConfig::new(input_dim, output_dim, 5, 512),
            MlpProfile::Tiny => MlpConfig::new(input_dim, output_dim, 2, 16),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            MlpProfile::Desk => "mlp-desk",
            MlpProfile::Paper => "mlp-paper",
            MlpProfile::Tiny => "mlp-tiny",
        }
    }
}

/// Region-network presets. `Paper` keeps the stock configuration
/// (including the default scale ladder); `Tiny` shrinks every width and
/// the ladder to one cheap scale for smoke tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PropinnProfile {
    #[default]
    Paper,
    Tiny,
}

impl PropinnProfile {
    fn config(self, input_dim: usize, output_dim: usize) -> ProPinnConfig {
        let mut cfg = ProPinnConfig::for_dim(input_dim, output_dim);
        if self == PropinnProfile::Tiny {
            cfg.d_model = 6;
            cfg.projector_hidden = 4;
            cfg.mixer_hidden = 4;
            cfg.head_hidden = 8;
            cfg.region_sizes = vec![0.02];
            cfg.region_counts = vec![4];
        }
        cfg
    }
}

/// Which network to train. The region knobs only apply to `propinn`
/// entries; `deny_unknown_fields` rejects them elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Mlp {
        #[serde(default)]
        profile: MlpProfile,
    },
    Propinn {
        #[serde(default)]
        profile: PropinnProfile,
        /// Override the profile's scale ladder (radii, one per scale).
        #[serde(default)]
        region_sizes: Option<Vec<f64>>,
        /// Override the per-scale companion counts; must match the ladder
        /// length.
        #[serde(default)]
        region_counts: Option<Vec<usize>>,
        /// Train with companion branches cut out of the gradient
        /// (value-identical forward pass; ablation switch).
        #[serde(default)]
        detach_regions: bool,
    },
}

/// Every random draw in a run, named. There are no defaults on purpose:
/// a config that omits a seed does not parse, so no run ever depends on
/// implicit entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Parameter initialization.
    pub init: u64,
    /// Per-iteration region offset resampling (region networks only).
    pub perturbation: u64,
    /// Random collocation sampling. Overrides the seed inside a
    /// `{"kind": "random"}` collocation spec.
    pub sampling: u64,
}

/// Optimizer schedule: a short Adam warmup followed by L-BFGS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(default)]
    pub adam_warmup: usize,
    /// L-BFGS iterations after the warmup.
    pub iterations: usize,
    #[serde(default)]
    pub adam: AdamParams,
    #[serde(default)]
    pub lbfgs: LbfgsParams,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_eval_every() -> usize {
    25
}

/// Held-out evaluation grid, cell-centered on the problem domain so it is
/// disjoint from every training lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalGridSpec {
    pub nx: usize,
    pub nt: usize,
}

impl Default for EvalGridSpec {
    fn default() -> Self {
        EvalGridSpec { nx: 256, nt: 100 }
    }
}

/// Optional post-training diagnostics. All off by default; a plain
/// training run pays nothing for them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticToggles {
    /// Export `correlation_map.csv` + `failure_mask.csv` on a
    /// `map_nx x map_nt` cell-centered grid.
    pub correlation_map: bool,
    /// Record the fraction of grid points whose gradient correlates
    /// positively with its `+x` neighbor.
    pub positive_ratio: bool,
    /// Run the region boost check at the domain center.
    pub boost_check: bool,
    pub map_nx: usize,
    pub map_nt: usize,
    /// Neighbor distance for the map offset and the positive ratio.
    pub neighbor_distance: f64,
}

impl Default for DiagnosticToggles {
    fn default() -> Self {
        DiagnosticToggles {
            correlation_map: false,
            positive_ratio: false,
            boost_check: false,
            map_nx: 64,
            map_nt: 64,
            neighbor_distance: 1e-2,
        }
    }
}

/// One complete experiment description. Serialized form is the on-disk
/// config format; unknown keys are rejected everywhere so typos fail
/// loudly instead of silently running defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Problem name: `convection`, `reaction`, `wave`, or `allen-cahn`.
    pub problem: String,
    pub model: ModelSpec,
    pub collocation: CollocationSpec,
    pub optimizer: OptimizerSpec,
    /// Loss weights; defaults to the problem's own.
    #[serde(default)]
    pub weights: Option<LossWeights>,
    pub seeds: Seeds,
    #[serde(default)]
    pub eval: EvalGridSpec,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub diagnostics: DiagnosticToggles,
    /// Start from a saved parameter vector (`params.json` of an earlier
    /// run) instead of a fresh draw.
    #[serde(default)]
    pub params_file: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical (declaration-ordered) JSON serialization.
    pub fn sha256(&self) -> Result<String> {
        Ok(sha256_hex(&serde_json::to_vec(self)?))
    }
}

/// Final-state summary written to `metrics.json`. Loss fields are
/// mirrored flat so the file stands alone without this crate's types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmae: f64,
    pub rrmse: f64,
    pub rel_l1: f64,
    pub loss_total: f64,
    pub loss_residual: f64,
    pub loss_ic: f64,
    pub loss_bc: f64,
    pub iterations: usize,
    pub objective_evals: usize,
    pub fallback_steps: usize,
    /// Wall-clock training time; the one nondeterministic field.
    pub wall_seconds: f64,
}

/// Everything `run` produced, for callers that aggregate across runs.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub report: MetricsReport,
    pub result: TrainResult,
}

/// Summary written by [`diagnose`] to `diagnostics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DiagnosticsReport {
    /// Mean point-pair gradient correlation over the map grid.
    pub correlation_mean: Option<f64>,
    /// Failure threshold used for the exported mask.
    pub failure_epsilon: Option<f64>,
    pub positive_ratio: Option<f64>,
    pub boost: Option<BoostSummary>,
}

/// Flattened copy of a region boost check for JSON export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostSummary {
    pub g_point: f64,
    pub g_region: f64,
    pub holds: bool,
    pub assumption_ok: bool,
}

enum BuiltModel {
    Mlp(Box<Mlp>),
    Propinn(Box<ProPinn>),
}

/// Stable identifier stamped into exported diagnostic fields.
fn model_tag(spec: &ModelSpec) -> String {
    match spec {
        ModelSpec::Mlp { profile } => profile.tag().to_string(),
        ModelSpec::Propinn {
            profile,
            detach_regions,
            ..
        } => {
            let base = match profile {
                PropinnProfile::Paper => "propinn",
                PropinnProfile::Tiny => "propinn-tiny",
            };
            if *detach_regions {
                format!("{base}-detached")
            } else {
                base.to_string()
            }
        }
    }
}

fn build_model(spec: &ModelSpec, input_dim: usize, output_dim: usize) -> Result<BuiltModel> {
    match spec {
        ModelSpec::Mlp { profile } => {
            let m = Mlp::new(profile.config(input_dim, output_dim))?;
            Ok(BuiltModel::Mlp(Box::new(m)))
        }
        ModelSpec::Propinn {
            profile,
            region_sizes,
            region_counts,
            detach_regions,
        } => {
            let mut cfg = profile.config(input_dim, output_dim);
            if let Some(sizes) = region_sizes {
                cfg.region_sizes = sizes.clone();
                // A bare ladder override keeps a matching count per scale.
                if region_counts.is_none() && cfg.region_counts.len() != sizes.len() {
                    let per = cfg.region_counts.first().copied().unwrap_or(9);
                    cfg.region_counts = vec![per; sizes.len()];
                }
            }
            if let Some(counts) = region_counts {
                cfg.region_counts = counts.clone();
            }
            cfg.detach_regions = *detach_regions;
            Ok(BuiltModel::Propinn(Box::new(ProPinn::new(cfg)?)))
        }
    }
}

fn load_params(model: &(impl Model + ?Sized), path: &Path) -> Result<FlatParams> {
    let text = std::fs::read_to_string(path)?;
    let values: Vec<f64> = serde_json::from_str(&text)?;
    FlatParams::from_values(model.layout(), values)
}

/// Fresh draw from `seeds.init`, or a reload when `params_file` is set.
fn starting_params(cfg: &ExperimentConfig, built: &BuiltModel) -> Result<FlatParams> {
    match (&cfg.params_file, built) {
        (Some(path), BuiltModel::Mlp(m)) => load_params(&**m, path),
        (Some(path), BuiltModel::Propinn(m)) => load_params(&**m, path),
        (None, BuiltModel::Mlp(m)) => Ok(m.init_params(cfg.seeds.init)),
        (None, BuiltModel::Propinn(m)) => Ok(m.init_params(cfg.seeds.init)),
    }
}

/// Cell-centered lattice over the problem rectangle: `nx` columns in `x`
/// by `nt` rows in `t`, each point at the center of its cell.
pub fn cell_centered_grid(problem: &PdeProblem, nx: usize, nt: usize) -> Result<Points> {
    if nx == 0 || nt == 0 {
        return Err(Error::config("evaluation grid needs nx, nt >= 1"));
    }
    let (x_lo, x_hi) = problem.x_bounds();
    let (t_lo, t_hi) = problem.t_bounds();
    let mut data = Vec::with_capacity(nx * nt * 2);
    for j in 0..nt {
        let t = t_lo + (j as f64 + 0.5) * (t_hi - t_lo) / nt as f64;
        for i in 0..nx {
            let x = x_lo + (i as f64 + 0.5) * (x_hi - x_lo) / nx as f64;
            data.push(x);
            data.push(t);
        }
    }
    Points::new(2, data)
}

fn eval_set(problem: &PdeProblem, spec: EvalGridSpec) -> Result<EvalSet> {
    let points = cell_centered_grid(problem, spec.nx, spec.nt)?;
    let truth: Vec<f64> = points
        .iter()
        .map(|p| problem.reference.eval(p[0], p[1]))
        .collect();
    EvalSet::new(points, truth)
}

/// Collocation with the sampling seed rewritten from the `seeds` block,
/// so the spec's own seed field can never silently diverge from it.
fn resolve_collocation(cfg: &ExperimentConfig) -> CollocationSpec {
    match cfg.collocation {
        CollocationSpec::Random { n, .. } => CollocationSpec::Random {
            n,
            seed: cfg.seeds.sampling,
        },
        grid => grid,
    }
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    sha256: String,
    config: &'a ExperimentConfig,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_point_value_csv(path: &Path, header: &str, points: &Points, values: &[f64]) -> Result<()> {
    let rows = points
        .iter()
        .zip(values)
        .map(|(p, &v)| [p[0], p[1], v])
        .collect::<Vec<_>>();
    write_csv(path, header, rows)
}

/// Train per the config and populate `output_dir`. On a non-finite loss
/// the optimizer state is saved to `nan_snapshot.json` before the error
/// propagates, so the failure is inspectable.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let problem = by_name(&cfg.problem)?;
    let built = build_model(&cfg.model, problem.dim(), 1)?;
    let params = starting_params(cfg, &built)?;
    match built {
        BuiltModel::Mlp(mut m) => run_with(cfg, &problem, &mut *m, params),
        BuiltModel::Propinn(mut m) => run_with(cfg, &problem, &mut *m, params),
    }
}

fn run_with<M: Model>(
    cfg: &ExperimentConfig,
    problem: &PdeProblem,
    model: &mut M,
    mut params: FlatParams,
) -> Result<RunOutput> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    write_json(
        &dir.join("config_echo.json"),
        &ConfigEcho {
            sha256: cfg.sha256()?,
            config: cfg,
        },
    )?;

    let colloc = sample_collocation(problem, &resolve_collocation(cfg))?;
    let eval = eval_set(problem, cfg.eval)?;
    let train_cfg = TrainConfig {
        adam_warmup: cfg.optimizer.adam_warmup,
        iterations: cfg.optimizer.iterations,
        adam: cfg.optimizer.adam,
        lbfgs: cfg.optimizer.lbfgs,
        weights: cfg.weights,
        eval_every: cfg.optimizer.eval_every,
        perturb_seed: cfg.seeds.perturbation,
    };

    let t0 = Instant::now();
    let result = match train(model, &mut params, problem, &colloc, &train_cfg, Some(&eval)) {
        Ok(r) => r,
        Err(Error::NonFiniteLoss(snap)) => {
            write_json(&dir.join("nan_snapshot.json"), &NanSnapshotDoc::from(&*snap))?;
            return Err(Error::NonFiniteLoss(snap));
        }
        Err(other) => return Err(other),
    };
    let wall_seconds = t0.elapsed().as_secs_f64();

    write_csv(
        &dir.join("train_trace.csv"),
        &TRACE_HEADER.join(","),
        result.trace.iter().map(|row| row.csv_row()),
    )?;

    let metrics = result
        .final_metrics
        .expect("run always trains against an evaluation set");
    let report = MetricsReport {
        rmae: metrics.rmae,
        rrmse: metrics.rrmse,
        rel_l1: metrics.rel_l1,
        loss_total: result.final_loss.total,
        loss_residual: result.final_loss.res,
        loss_ic: result.final_loss.ic,
        loss_bc: result.final_loss.bc,
        iterations: result.trace.len().saturating_sub(1),
        objective_evals: result.objective_evals,
        fallback_steps: result.fallback_steps,
        wall_seconds,
    };
    write_json(&dir.join("metrics.json"), &report)?;

    let pred: Result<Vec<f64>> = eval
        .points
        .iter()
        .map(|p| Ok(forward(model, &params, p)?[0]))
        .collect();
    let pred = pred?;
    let err: Vec<f64> = pred
        .iter()
        .zip(&eval.truth)
        .map(|(&u, &t)| u - t)
        .collect();
    write_point_value_csv(&dir.join("solution_grid.csv"), "x,t,u", &eval.points, &pred)?;
    write_point_value_csv(&dir.join("error_map.csv"), "x,t,err", &eval.points, &err)?;
    write_json(&dir.join("params.json"), &params.values().to_vec())?;

    if cfg.diagnostics.correlation_map || cfg.diagnostics.positive_ratio || cfg.diagnostics.boost_check
    {
        let report = run_diagnostics(cfg, problem, model, &params, &dir)?;
        write_json(&dir.join("diagnostics.json"), &report)?;
    }

    Ok(RunOutput {
        dir,
        report,
        result,
    })
}

#[derive(Serialize)]
struct NanSnapshotDoc {
    iteration: usize,
    params: Vec<f64>,
    grad: Vec<f64>,
}

impl From<&crate::error::NanSnapshot> for NanSnapshotDoc {
    fn from(s: &crate::error::NanSnapshot) -> Self {
        NanSnapshotDoc {
            iteration: s.iteration,
            params: s.params.clone(),
            grad: s.grad.clone(),
        }
    }
}

/// Run the enabled diagnostics on a fresh or reloaded network without
/// training it, writing the same files a diagnostic-enabled [`run`]
/// would.
pub fn diagnose(cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
    let problem = by_name(&cfg.problem)?;
    let built = build_model(&cfg.model, problem.dim(), 1)?;
    let params = starting_params(cfg, &built)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let report = match &built {
        BuiltModel::Mlp(m) => run_diagnostics(cfg, &problem, &**m, &params, &cfg.output_dir)?,
        BuiltModel::Propinn(m) => run_diagnostics(cfg, &problem, &**m, &params, &cfg.output_dir)?,
    };
    write_json(&cfg.output_dir.join("diagnostics.json"), &report)?;
    Ok(report)
}

/// Boost-check geometry when the model has no scale ladder of its own.
const FALLBACK_REGION_SIZE: f64 = 0.03;

fn run_diagnostics<M: Model>(
    cfg: &ExperimentConfig,
    problem: &PdeProblem,
    model: &M,
    params: &FlatParams,
    dir: &Path,
) -> Result<DiagnosticsReport> {
    let toggles = cfg.diagnostics;
    let mut report = DiagnosticsReport::default();
    let grid = cell_centered_grid(problem, toggles.map_nx, toggles.map_nt)?;

    if toggles.correlation_map {
        let field = diag::correlation_map(
            model,
            params,
            grid.clone(),
            &[toggles.neighbor_distance, 0.0],
            model_tag(&cfg.model),
        )?;
        field.write_csv(&dir.join("correlation_map.csv"))?;
        let epsilon = field.write_failure_mask_csv(&dir.join("failure_mask.csv"), None)?;
        report.correlation_mean = Some(field.mean());
        report.failure_epsilon = Some(epsilon);
    }

    if toggles.positive_ratio {
        report.positive_ratio = Some(diag::positive_ratio(
            model,
            params,
            &grid,
            toggles.neighbor_distance,
        )?);
    }

    if toggles.boost_check {
        let (x_lo, x_hi) = problem.x_bounds();
        let (t_lo, t_hi) = problem.t_bounds();
        let center = [0.5 * (x_lo + x_hi), 0.5 * (t_lo + t_hi)];
        // Probe at the network's own smallest scale when it has one.
        let region_size = match &cfg.model {
            ModelSpec::Propinn {
                region_sizes: Some(sizes),
                ..
            } if !sizes.is_empty() => sizes[0],
            ModelSpec::Propinn { profile, .. } => profile
                .config(problem.dim(), 1)
                .region_sizes
                .first()
                .copied()
                .unwrap_or(FALLBACK_REGION_SIZE),
            ModelSpec::Mlp { .. } => FALLBACK_REGION_SIZE,
        };
        // Cross of four offsets at half the admissible radius, plus a
        // neighbor site inside the same ball.
        let r = region_size / 3.0 * 0.5;
        let offsets = vec![vec![r, 0.0], vec![-r, 0.0], vec![0.0, r], vec![0.0, -r]];
        let x_prime = [center[0] + r, center[1]];
        let check = diag::boost_check(model, params, &center, &x_prime, &offsets, region_size)?;
        report.boost = Some(BoostSummary {
            g_point: check.g_point,
            g_region: check.g_region,
            holds: check.holds,
            assumption_ok: check.assumption_ok,
        });
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            problem: "convection".to_string(),
            model: ModelSpec::Mlp {
                profile: MlpProfile::Tiny,
            },
            collocation: CollocationSpec::Grid { nx: 6, nt: 6 },
            optimizer: OptimizerSpec {
                adam_warmup: 0,
                iterations: 2,
                adam: AdamParams::default(),
                lbfgs: LbfgsParams::default(),
                eval_every: 1,
            },
            weights: None,
            seeds: Seeds {
                init: 7,
                perturbation: 11,
                sampling: 13,
            },
            eval: EvalGridSpec { nx: 8, nt: 5 },
            output_dir: dir.to_path_buf(),
            diagnostics: DiagnosticToggles::default(),
            params_file: None,
        }
    }

    #[test]
    fn configs_parse_from_json_and_reject_unknown_keys() {
        let text = r#"{
            "problem": "convection",
            "model": {"kind": "propinn", "profile": "tiny", "detach_regions": true},
            "collocation": {"kind": "random", "n": 64, "seed": 0},
            "optimizer": {"iterations": 10},
            "seeds": {"init": 1, "perturbation": 2, "sampling": 3},
            "output_dir": "/tmp/out"
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.optimizer.eval_every, 25);
        assert_eq!(cfg.eval, EvalGridSpec { nx: 256, nt: 100 });
        match &cfg.model {
            ModelSpec::Propinn {
                profile,
                detach_regions,
                ..
            } => {
                assert_eq!(*profile, PropinnProfile::Tiny);
                assert!(detach_regions);
            }
            other => panic!("parsed wrong model spec: {other:?}"),
        }

        let bad = text.replace("\"problem\"", "\"problme\"");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("problme"), "got: {err}");
    }

    #[test]
    fn seeds_must_be_explicit() {
        let text = r#"{
            "problem": "wave",
            "model": {"kind": "mlp"},
            "collocation": {"kind": "grid", "nx": 4, "nt": 4},
            "optimizer": {"iterations": 1},
            "output_dir": "/tmp/out"
        }"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("seeds"), "got: {err}");
    }

    #[test]
    fn the_config_hash_tracks_content() {
        let dir = std::env::temp_dir();
        let a = tiny_config(&dir);
        let mut b = a.clone();
        assert_eq!(a.sha256().unwrap(), b.sha256().unwrap());
        b.seeds.init += 1;
        assert_ne!(a.sha256().unwrap(), b.sha256().unwrap());
    }

    #[test]
    fn cell_centered_grids_avoid_domain_edges_and_lattice_nodes() {
        let problem = by_name("convection").unwrap();
        let grid = cell_centered_grid(&problem, 4, 2).unwrap();
        assert_eq!(grid.len(), 8);
        let (x_lo, x_hi) = problem.x_bounds();
        for p in grid.iter() {
            assert!(p[0] > x_lo && p[0] < x_hi);
            assert!(p[1] > 0.0 && p[1] < 1.0);
        }
        // First cell center of 4 columns on [0, 2*pi).
        let first = grid.get(0);
        assert!((first[0] - (x_hi - x_lo) / 8.0).abs() < 1e-15);
        assert!((first[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn a_run_writes_every_artifact() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&tmp.path().join("run"));
        let out = run(&cfg).unwrap();
        for name in [
            "config_echo.json",
            "train_trace.csv",
            "metrics.json",
            "solution_grid.csv",
            "error_map.csv",
            "params.json",
        ] {
            assert!(out.dir.join(name).is_file(), "missing {name}");
        }
        assert!(out.report.rrmse.is_finite());
        assert_eq!(out.report.iterations, 2);

        // The echo reparses to the exact config we ran.
        let echo: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.dir.join("config_echo.json")).unwrap())
                .unwrap();
        let echoed: ExperimentConfig =
            serde_json::from_value(echo["config"].clone()).unwrap();
        assert_eq!(echoed, cfg);
        assert_eq!(echo["sha256"].as_str().unwrap(), cfg.sha256().unwrap());
    }

    #[test]
    fn rerunning_a_config_reproduces_every_nonclock_byte() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(&tmp.path().join("a"));
        let a = run(&cfg).unwrap();
        cfg.output_dir = tmp.path().join("b");
        let b = run(&cfg).unwrap();
        for name in ["solution_grid.csv", "error_map.csv", "params.json"] {
            let left = std::fs::read(a.dir.join(name)).unwrap();
            let right = std::fs::read(b.dir.join(name)).unwrap();
            assert_eq!(left, right, "{name} differs between identical runs");
        }
        assert_eq!(a.report.rrmse, b.report.rrmse);
        assert_eq!(a.report.loss_total, b.report.loss_total);
    }

    #[test]
    fn zero_iterations_still_produces_a_complete_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(&tmp.path().join("run"));
        cfg.optimizer.iterations = 0;
        let out = run(&cfg).unwrap();
        assert_eq!(out.report.iterations, 0);
        assert!(out.dir.join("metrics.json").is_file());
        assert!(out.dir.join("solution_grid.csv").is_file());
    }

    #[test]
    fn the_error_map_mean_matches_the_metric_identity() {
        // mean |err| on the grid must equal rel_l1 * mean |truth|; both
        // sides come from the same evaluation set, so this ties the
        // exported map to the reported metric.
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&tmp.path().join("run"));
        let out = run(&cfg).unwrap();
        let (_, rows) = crate::io::read_csv(&out.dir.join("error_map.csv")).unwrap();
        let mean_abs_err =
            rows.iter().map(|r| r[2].abs()).sum::<f64>() / rows.len() as f64;

        let problem = by_name(&cfg.problem).unwrap();
        let eval = eval_set(&problem, cfg.eval).unwrap();
        let mean_abs_truth =
            eval.truth.iter().map(|t| t.abs()).sum::<f64>() / eval.truth.len() as f64;
        let lhs = mean_abs_err;
        let rhs = out.report.rel_l1 * mean_abs_truth;
        assert!(
            (lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300),
            "identity broken: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn saved_parameters_reload_bit_for_bit() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(&tmp.path().join("run"));
        let out = run(&cfg).unwrap();

        // A reload must reproduce the exported solution grid exactly:
        // prediction at a grid point equals the stored CSV value.
        let problem = by_name(&cfg.problem).unwrap();
        let built = build_model(&cfg.model, problem.dim(), 1).unwrap();
        let m = match &built {
            BuiltModel::Mlp(m) => m,
            _ => unreachable!(),
        };
        let loaded = load_params(&**m, &out.dir.join("params.json")).unwrap();
        let (_, rows) = crate::io::read_csv(&out.dir.join("solution_grid.csv")).unwrap();
        for row in rows.iter().step_by(7) {
            let u = forward(&**m, &loaded, &[row[0], row[1]]).unwrap()[0];
            assert_eq!(u, row[2], "reloaded prediction drifted at {:?}", &row[..2]);
        }
    }

    #[test]
    fn non_finite_starting_points_abort_with_a_snapshot() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(&tmp.path().join("run"));
        // Poison the starting point through the params file.
        let problem = by_name(&cfg.problem).unwrap();
        let built = build_model(&cfg.model, problem.dim(), 1).unwrap();
        let n = match &built {
            BuiltModel::Mlp(m) => m.layout().len(),
            _ => unreachable!(),
        };
        let poison = tmp.path().join("poison.json");
        // JSON cannot carry infinities; a near-max finite value overflows
        // inside the first loss evaluation instead.
        write_json(&poison, &vec![1e308; n]).unwrap();
        cfg.params_file = Some(poison);

        let err = run(&cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss(_)));
        assert!(cfg.output_dir.join("nan_snapshot.json").is_file());
        // The snapshot carries the poisoned state for inspection.
        let snap: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(cfg.output_dir.join("nan_snapshot.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(snap["iteration"], 0);
    }

    #[test]
    fn params_files_must_match_the_model_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(&tmp.path().join("run"));
        let short = tmp.path().join("short.json");
        write_json(&short, &vec![0.0_f64; 3]).unwrap();
        cfg.params_file = Some(short);
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn diagnose_exports_the_enabled_probes_without_training() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(&tmp.path().join("diag"));
        cfg.diagnostics = DiagnosticToggles {
            correlation_map: true,
            positive_ratio: true,
            boost_check: true,
            map_nx: 5,
            map_nt: 4,
            neighbor_distance: 1e-2,
        };
        let report = diagnose(&cfg).unwrap();
        assert!(cfg.output_dir.join("diagnostics.json").is_file());
        assert!(cfg.output_dir.join("correlation_map.csv").is_file());
        assert!(cfg.output_dir.join("failure_mask.csv").is_file());
        let ratio = report.positive_ratio.unwrap();
        assert!((0.0..=1.0).contains(&ratio));
        assert!(report.correlation_mean.unwrap().is_finite());
        let boost = report.boost.unwrap();
        assert!(boost.g_point >= 0.0 && boost.g_region >= 0.0);
    }

    #[test]
    fn region_ladder_overrides_reach_the_network() {
        let spec = ModelSpec::Propinn {
            profile: PropinnProfile::Tiny,
            region_sizes: Some(vec![0.01, 0.02]),
            region_counts: None,
            detach_regions: false,
        };
        let built = build_model(&spec, 2, 1).unwrap();
        match built {
            BuiltModel::Propinn(p) => {
                assert_eq!(p.config().region_sizes, vec![0.01, 0.02]);
                assert_eq!(p.config().region_counts.len(), 2);
            }
            _ => unreachable!(),
        }
    }
}

