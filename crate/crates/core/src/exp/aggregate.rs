//! Cross-run aggregation: seed-shifted repetitions with per-metric
//! summary statistics, a paired one-sided t-test for "method A beats
//! method B" claims, and a scale-ladder sweep for region networks.
//!
//! Repetition convention: run `i` adds `i` to every seed in the config,
//! so two repeated studies with the same base seeds share their entire
//! seed sequence pairwise — exactly what the paired test assumes.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{run, write_json, ExperimentConfig, MetricsReport, ModelSpec, RunOutput};
use crate::error::{Error, Result};

/// Mean and sample standard deviation (the `n - 1` estimator) of one
/// metric across runs; a single run reports zero spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl RunStats {
    fn from_values(values: Vec<f64>) -> RunStats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() < 2 {
            0.0
        } else {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        };
        RunStats {
            mean,
            std: var.sqrt(),
            values,
        }
    }
}

/// Summary of a repeated study, also written to `aggregate.json` in the
/// study's root directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub rmae: RunStats,
    pub rrmse: RunStats,
    pub rel_l1: RunStats,
    pub runs: Vec<MetricsReport>,
    pub dirs: Vec<PathBuf>,
}

/// Run the config `n` times, run `i` into `output_dir/run_{i}` with all
/// three seeds shifted by `i`, and write `aggregate.json` at the root.
pub fn repeat(cfg: &ExperimentConfig, n: usize) -> Result<RepeatReport> {
    if n == 0 {
        return Err(Error::config("a repeated study needs at least one run"));
    }
    let mut runs = Vec::with_capacity(n);
    let mut dirs = Vec::with_capacity(n);
    for i in 0..n {
        let mut c = cfg.clone();
        c.seeds.init += i as u64;
        c.seeds.perturbation += i as u64;
        c.seeds.sampling += i as u64;
        c.output_dir = cfg.output_dir.join(format!("run_{i}"));
        let out = run(&c)?;
        dirs.push(out.dir);
        runs.push(out.report);
    }
    let report = RepeatReport {
        rmae: RunStats::from_values(runs.iter().map(|r| r.rmae).collect()),
        rrmse: RunStats::from_values(runs.iter().map(|r| r.rrmse).collect()),
        rel_l1: RunStats::from_values(runs.iter().map(|r| r.rel_l1).collect()),
        runs,
        dirs,
    };
    write_json(&cfg.output_dir.join("aggregate.json"), &report)?;
    Ok(report)
}

/// Result of a paired one-sided t-test on per-seed differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n: usize,
    /// Mean of `b - a`; positive when `a` scored lower.
    pub mean_diff: f64,
    pub t_stat: f64,
    /// One-sided p-value for H1: `mean(b - a) > 0`.
    pub p_value: f64,
}

/// Paired one-sided t-test that `a` is smaller than `b` in the mean,
/// given per-seed scores in matching order. Differences `d_i = b_i - a_i`
/// give `t = mean(d) / (sd(d) / sqrt(n))` on `n - 1` degrees of freedom;
/// the p-value is the upper tail. Zero-spread differences short-circuit
/// on sign alone (`p = 0`, `1/2`, or `1`), since the statistic is then
/// degenerate.
pub fn paired_one_sided(a: &[f64], b: &[f64]) -> Result<PairedComparison> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            what: "paired samples",
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::config("a paired test needs at least two pairs"));
    }
    let d: Vec<f64> = b.iter().zip(a).map(|(&bi, &ai)| bi - ai).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        let (t_stat, p_value) = match mean.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 0.0),
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 1.0),
            _ => (0.0, 0.5),
        };
        return Ok(PairedComparison {
            n,
            mean_diff: mean,
            t_stat,
            p_value,
        });
    }
    let t_stat = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::config(format!("t distribution: {e}")))?;
    let p_value = 1.0 - dist.cdf(t_stat);
    Ok(PairedComparison {
        n,
        mean_diff: mean,
        t_stat,
        p_value,
    })
}

/// Train one run per candidate scale ladder, each into
/// `output_dir/regions_{r1-r2-...}`. Companion counts follow the base
/// config; only the radii vary. Rejects non-region models.
pub fn sweep_region_sizes(
    cfg: &ExperimentConfig,
    ladders: &[Vec<f64>],
) -> Result<Vec<RunOutput>> {
    if ladders.is_empty() {
        return Err(Error::config("a region sweep needs at least one ladder"));
    }
    if !matches!(cfg.model, ModelSpec::Propinn { .. }) {
        return Err(Error::config(
            "a region sweep only applies to region models",
        ));
    }
    let mut outs = Vec::with_capacity(ladders.len());
    for ladder in ladders {
        let mut c = cfg.clone();
        if let ModelSpec::Propinn { region_sizes, .. } = &mut c.model {
            *region_sizes = Some(ladder.clone());
        }
        let name = ladder
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join("-");
        c.output_dir = cfg.output_dir.join(format!("regions_{name}"));
        outs.push(run(&c)?);
    }
    Ok(outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp::{
        DiagnosticToggles, EvalGridSpec, MlpProfile, OptimizerSpec, PropinnProfile, Seeds,
    };
    use crate::pde::CollocationSpec;
    use crate::train::{AdamParams, LbfgsParams};
    use std::path::Path;

    fn quick_config(dir: &Path, model: ModelSpec) -> ExperimentConfig {
        ExperimentConfig {
            problem: "convection".to_string(),
            model,
            collocation: CollocationSpec::Grid { nx: 5, nt: 5 },
            optimizer: OptimizerSpec {
                adam_warmup: 0,
                iterations: 1,
                adam: AdamParams::default(),
                lbfgs: LbfgsParams::default(),
                eval_every: 1,
            },
            weights: None,
            seeds: Seeds {
                init: 3,
                perturbation: 5,
                sampling: 8,
            },
            eval: EvalGridSpec { nx: 6, nt: 4 },
            output_dir: dir.to_path_buf(),
            diagnostics: DiagnosticToggles::default(),
            params_file: None,
        }
    }

    #[test]
    fn run_stats_match_the_hand_formula() {
        let s = RunStats::from_values(vec![1.0, 2.0, 4.0]);
        assert!((s.mean - 7.0 / 3.0).abs() < 1e-15);
        assert!((s.std - (7.0_f64 / 3.0).sqrt()).abs() < 1e-15);

        let one = RunStats::from_values(vec![0.25]);
        assert_eq!(one.std, 0.0);
        assert_eq!(one.mean, 0.25);
    }

    #[test]
    fn two_pair_t_test_agrees_with_the_cauchy_closed_form() {
        // With one degree of freedom the t distribution is Cauchy, so
        // the upper tail has the closed form 1/2 - atan(t)/pi.
        let a = [1.0, 2.0];
        let b = [1.3, 2.5];
        let cmp = paired_one_sided(&a, &b).unwrap();

        let d = [b[0] - a[0], b[1] - a[1]];
        let mean = (d[0] + d[1]) / 2.0;
        let sd = (((d[0] - mean).powi(2) + (d[1] - mean).powi(2)) / 1.0).sqrt();
        let t = mean / (sd / 2.0_f64.sqrt());
        assert!((cmp.t_stat - t).abs() < 1e-12);
        let cauchy_p = 0.5 - t.atan() / std::f64::consts::PI;
        assert!(
            (cmp.p_value - cauchy_p).abs() < 1e-12,
            "p = {}, closed form = {}",
            cmp.p_value,
            cauchy_p
        );
        assert!(cmp.p_value < 0.5, "consistent improvement should score < 1/2");
    }

    #[test]
    fn constant_differences_short_circuit_on_sign() {
        let better = paired_one_sided(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert_eq!(better.p_value, 0.0);
        assert_eq!(better.t_stat, f64::INFINITY);

        let tied = paired_one_sided(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(tied.p_value, 0.5);

        let worse = paired_one_sided(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!(worse.p_value, 1.0);
    }

    #[test]
    fn degenerate_pairings_are_rejected() {
        assert!(paired_one_sided(&[1.0], &[2.0]).is_err());
        assert!(paired_one_sided(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn repeated_runs_shift_seeds_and_average_metrics() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = quick_config(
            tmp.path(),
            ModelSpec::Mlp {
                profile: MlpProfile::Tiny,
            },
        );
        let report = repeat(&cfg, 2).unwrap();
        assert!(tmp.path().join("run_0/metrics.json").is_file());
        assert!(tmp.path().join("run_1/metrics.json").is_file());
        assert!(tmp.path().join("aggregate.json").is_file());

        assert_eq!(report.rmae.values.len(), 2);
        // Different seeds must actually change the outcome.
        assert_ne!(report.rmae.values[0], report.rmae.values[1]);
        let mean = (report.rmae.values[0] + report.rmae.values[1]) / 2.0;
        assert!((report.rmae.mean - mean).abs() < 1e-15);

        // run_0 reproduces a plain run of the base config.
        let mut base = cfg.clone();
        base.output_dir = tmp.path().join("solo");
        let solo = run(&base).unwrap();
        assert_eq!(solo.report.rrmse, report.runs[0].rrmse);
    }

    #[test]
    fn a_single_run_study_reports_zero_spread() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = quick_config(
            tmp.path(),
            ModelSpec::Mlp {
                profile: MlpProfile::Tiny,
            },
        );
        let report = repeat(&cfg, 1).unwrap();
        assert_eq!(report.rrmse.std, 0.0);
        assert_eq!(report.rrmse.mean, report.runs[0].rrmse);
    }

    #[test]
    fn region_sweeps_fan_out_one_directory_per_ladder() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = quick_config(
            tmp.path(),
            ModelSpec::Propinn {
                profile: PropinnProfile::Tiny,
                region_sizes: None,
                region_counts: None,
                detach_regions: false,
            },
        );
        let ladders = vec![vec![0.01], vec![0.015, 0.02]];
        let outs = sweep_region_sizes(&cfg, &ladders).unwrap();
        assert_eq!(outs.len(), 2);
        assert!(tmp.path().join("regions_0.01/metrics.json").is_file());
        assert!(tmp
            .path()
            .join("regions_0.015-0.02/metrics.json")
            .is_file());

        // The echoed configs really carry the swept ladders.
        let echo: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(
                tmp.path().join("regions_0.015-0.02/config_echo.json"),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(echo["config"]["model"]["region_sizes"][1], 0.02);
    }

    #[test]
    fn region_sweeps_reject_plain_networks() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = quick_config(
            tmp.path(),
            ModelSpec::Mlp {
                profile: MlpProfile::Tiny,
            },
        );
        assert!(sweep_region_sizes(&cfg, &[vec![0.01]]).is_err());
    }
}
