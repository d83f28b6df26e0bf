//! Propagation-failure diagnostics.
//!
//! The central object is the gradient correlation between two collocation
//! points,
//!
//! ```text
//! G(x, x') = | < du/dtheta |_x , du/dtheta |_{x'} > | ,
//! ```
//!
//! for multi-output models the Frobenius norm of the m x m matrix obtained
//! by contracting the two parameter Jacobians over the parameter axis.
//! When G vanishes between neighboring points, a parameter update that fits
//! one point cannot move the prediction at the other: supervision from
//! initial and boundary data stops propagating into the interior and the
//! optimizer settles on a trivial interior solution while the data losses
//! keep shrinking. [`gradient_correlation`] computes G exactly by two
//! reverse-mode sweeps.
//!
//! [`stiffness_estimate`] measures the same coupling operationally: descend
//! along the parameter gradient taken at `x` with step `lambda` and record
//! how much the prediction at `x'` moves, per unit step,
//!
//! ```text
//! D(lambda) = || u_theta(x') - u_{theta - lambda g_x}(x') || / lambda .
//! ```
//!
//! First-order Taylor expansion gives `D(lambda) = G + O(lambda)`, so the
//! two diagnostics agree in the small-step limit; [`dg_equivalence`] reports
//! the agreement at the smallest step together with the empirical
//! convergence order of `|D - G|`.
//!
//! [`boost_check`] probes what region pooling buys. Lifting a model to the
//! region field `u(x) + (1/k) sum_i u(x + delta_i)` makes the lifted
//! gradient `g_x + mean_i g_{x+delta_i}`, so the lifted correlation expands
//! into four blocks,
//!
//! ```text
//! <g_x, g_x'> + <g_x, mean_j g_j'> + <mean_i g_i, g_x'> + <mean_i g_i, mean_j g_j'> ,
//! ```
//!
//! and whenever every pairwise gradient inner product among the
//! participating sites is nonnegative — the precondition that
//! `assumption_ok` verifies — the three extra blocks can only add, so the
//! region correlation dominates the pointwise one. With all offsets zero
//! the field doubles and G exactly quadruples, a degenerate case tests pin
//! down to a few ulps.
//!
//! Grid-level tooling — correlation maps, binary failure masks, the
//! positive-ratio statistic — lives in [`field`].

pub mod field;

pub use field::{correlation_map, positive_ratio, CorrelationField};

use crate::error::{Error, Result};
use crate::model::{check_input, forward, param_gradient, Model, ParamGradient};
use crate::models::RegionLifted;
use crate::params::FlatParams;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Signed channel-wise contraction `sum_c <a_c, b_c>` of two parameter
/// Jacobians — the trace of the full contraction matrix, and the plain
/// signed inner product for single-output models. This is the quantity
/// whose sign the nonnegativity assumption constrains.
pub(crate) fn signed_inner(a: &ParamGradient, b: &ParamGradient) -> f64 {
    debug_assert_eq!(a.rows, b.rows);
    (0..a.rows).map(|c| dot(a.row(c), b.row(c))).sum()
}

/// `G` from two precomputed Jacobians. Single-output models take the
/// absolute inner product directly (no square/square-root round trip, so
/// self-correlation is bitwise the squared gradient norm); multi-output
/// models take the Frobenius norm of the contraction matrix.
pub(crate) fn correlation_of(a: &ParamGradient, b: &ParamGradient) -> f64 {
    debug_assert_eq!(a.rows, b.rows);
    if a.rows == 1 {
        return dot(a.row(0), b.row(0)).abs();
    }
    // Accumulate the diagonal entry and each off-diagonal pair together:
    // swapping the sites transposes the contraction matrix, which maps the
    // pair (i,j),(j,i) onto itself, so the summation order — and the
    // resulting bits — are identical for both argument orders.
    let mut frob_sq = 0.0;
    for i in 0..a.rows {
        let d = dot(a.row(i), b.row(i));
        frob_sq += d * d;
        for j in (i + 1)..b.rows {
            let upper = dot(a.row(i), b.row(j));
            let lower = dot(a.row(j), b.row(i));
            frob_sq += upper * upper + lower * lower;
        }
    }
    frob_sq.sqrt()
}

/// Gradient correlation `G(x, x')` of `model` at `params`.
///
/// Nonnegative and symmetric in `x` and `x'`, down to the bits: both
/// argument orders produce the identical float sequence.
/// `G(x, x)` is the squared parameter-gradient norm, and a model whose
/// output does not depend on the parameters yields exactly zero.
pub fn gradient_correlation(
    model: &(impl Model + ?Sized),
    params: &FlatParams,
    x: &[f64],
    x_prime: &[f64],
) -> Result<f64> {
    let ga = param_gradient(model, params, x)?;
    let gb = param_gradient(model, params, x_prime)?;
    Ok(correlation_of(&ga, &gb))
}

/// The finite-step stiffness probe `D(lambda)` over a decreasing step
/// sequence, plus its small-step limit.
#[derive(Debug, Clone)]
pub struct StiffnessEstimate {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    /// Strictly decreasing, all positive.
    pub lambdas: Vec<f64>,
    /// `D(lambda)` per entry of `lambdas`.
    pub values: Vec<f64>,
    /// The value at the smallest step — the best available proxy for
    /// `lim_{lambda -> 0} D(lambda)`.
    pub limit: f64,
}

/// Compute `D(lambda) = ||u_theta(x') - u_{theta - lambda g_x}(x')|| / lambda`
/// for each step size in `lambdas`.
///
/// `lambdas` must be strictly decreasing and positive. For multi-output
/// models the step is applied channel-wise — channel `c` of the perturbed
/// output is evaluated under `theta - lambda g_c` — and the norm is taken
/// over channels; the single-output case reduces to the plain definition.
/// A perturbed evaluation that leaves the floating-point range aborts with
/// a step-too-large error naming the offending `lambda`.
pub fn stiffness_estimate(
    model: &(impl Model + ?Sized),
    params: &FlatParams,
    x: &[f64],
    x_prime: &[f64],
    lambdas: &[f64],
) -> Result<StiffnessEstimate> {
    if lambdas.is_empty() {
        return Err(Error::config("stiffness_estimate: empty step sequence"));
    }
    if lambdas.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        return Err(Error::config(
            "stiffness_estimate: step sizes must be finite and positive",
        ));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config(
            "stiffness_estimate: step sizes must be strictly decreasing",
        ));
    }
    let g = param_gradient(model, params, x)?;
    let base = forward(model, params, x_prime)?;
    if base.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(
            "stiffness_estimate: model output non-finite at the unperturbed parameters",
        ));
    }
    let m = g.rows;
    let mut scratch = params.clone();
    let mut values = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut sq = 0.0;
        for ch in 0..m {
            scratch.values_mut().copy_from_slice(params.values());
            for (w, gi) in scratch.values_mut().iter_mut().zip(g.row(ch)) {
                *w -= lambda * gi;
            }
            let u = forward(model, &scratch, x_prime)?;
            if !u[ch].is_finite() {
                return Err(Error::StepTooLarge { lambda });
            }
            let diff = base[ch] - u[ch];
            sq += diff * diff;
        }
        let d = sq.sqrt() / lambda;
        if !d.is_finite() {
            return Err(Error::StepTooLarge { lambda });
        }
        values.push(d);
    }
    let limit = *values.last().unwrap();
    Ok(StiffnessEstimate {
        x: x.to_vec(),
        x_prime: x_prime.to_vec(),
        lambdas: lambdas.to_vec(),
        values,
        limit,
    })
}

/// Agreement between the stiffness probe and the gradient correlation.
#[derive(Debug, Clone)]
pub struct DgEquivalence {
    /// `G(x, x')`.
    pub correlation: f64,
    pub estimate: StiffnessEstimate,
    /// `|D(lambda_min) - G| / max(G, 1e-12)`.
    pub rel_err: f64,
    /// Least-squares slope of `ln |D(lambda) - G|` against `ln lambda`.
    /// First-order Taylor behavior shows up as a slope near one. Steps where
    /// the difference is exactly zero carry no order information and are
    /// dropped; if fewer than two points remain the agreement is already
    /// exact and the slope is reported as `+inf`.
    pub slope: f64,
}

/// Run [`stiffness_estimate`] and [`gradient_correlation`] on the same pair
/// and quantify how the probe converges onto the correlation.
pub fn dg_equivalence(
    model: &(impl Model + ?Sized),
    params: &FlatParams,
    x: &[f64],
    x_prime: &[f64],
    lambdas: &[f64],
) -> Result<DgEquivalence> {
    let correlation = gradient_correlation(model, params, x, x_prime)?;
    let estimate = stiffness_estimate(model, params, x, x_prime, lambdas)?;
    let rel_err = (estimate.limit - correlation).abs() / correlation.max(1e-12);
    let mut ln_l = Vec::new();
    let mut ln_d = Vec::new();
    for (lambda, d) in estimate.lambdas.iter().zip(&estimate.values) {
        let diff = (d - correlation).abs();
        if diff > 0.0 {
            ln_l.push(lambda.ln());
            ln_d.push(diff.ln());
        }
    }
    let slope = if ln_l.len() < 2 {
        f64::INFINITY
    } else {
        lsq_slope(&ln_l, &ln_d)
    };
    Ok(DgEquivalence {
        correlation,
        estimate,
        rel_err,
        slope,
    })
}

fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Outcome of one region-boost probe.
#[derive(Debug, Clone, Copy)]
pub struct BoostCheck {
    /// `G` of the base model between `x` and `x'`.
    pub g_point: f64,
    /// `G` of the region-lifted model between the same pair.
    pub g_region: f64,
    /// `g_region >= g_point - 1e-12 * max(g_point, g_region)` — the boost
    /// inequality up to a relative float slack. Meaningful only when
    /// `assumption_ok` is set; without the nonnegativity precondition the
    /// inequality has no reason to hold.
    pub holds: bool,
    /// Every pairwise signed gradient inner product among
    /// `{x, x', x + delta_i, x' + delta_j}` within distance `region_size`
    /// is nonnegative.
    pub assumption_ok: bool,
}

/// Compare pointwise and region-lifted gradient correlation on one pair.
///
/// `region_size` is the locality radius `R`: the pair must satisfy
/// `|x - x'| <= R/3` and every offset `|delta_i| <= R/3`, which by the
/// triangle inequality keeps all participating sites within `R` of each
/// other — exactly the set the nonnegativity assumption speaks about.
/// Violations of either bound are configuration errors, as is an empty
/// offset list.
pub fn boost_check(
    model: &(impl Model + ?Sized),
    params: &FlatParams,
    x: &[f64],
    x_prime: &[f64],
    offsets: &[Vec<f64>],
    region_size: f64,
) -> Result<BoostCheck> {
    check_input(model, x)?;
    check_input(model, x_prime)?;
    if !region_size.is_finite() || region_size <= 0.0 {
        return Err(Error::config(
            "boost_check: region size must be finite and positive",
        ));
    }
    if offsets.is_empty() {
        return Err(Error::config(
            "boost_check: at least one perturbation offset is required",
        ));
    }
    let reach = region_size / 3.0;
    let sep = euclid(x, x_prime);
    if sep > reach {
        return Err(Error::config(format!(
            "boost_check: |x - x'| = {sep:.3e} exceeds region_size/3 = {reach:.3e}"
        )));
    }
    let zero = vec![0.0; x.len()];
    for d in offsets {
        if d.len() != x.len() {
            return Err(Error::DimMismatch {
                what: "boost offset dimension",
                expected: x.len(),
                got: d.len(),
            });
        }
        let norm = euclid(d, &zero);
        if norm > reach {
            return Err(Error::config(format!(
                "boost_check: offset norm {norm:.3e} exceeds region_size/3 = {reach:.3e}"
            )));
        }
    }

    let g_point = gradient_correlation(model, params, x, x_prime)?;
    let lifted = RegionLifted::new(model, offsets.to_vec())?;
    let g_region = gradient_correlation(&lifted, params, x, x_prime)?;

    // All sites the lifted inner product touches; with the R/3 bounds above
    // every pair is within R, but the distance filter keeps the check
    // honest if the preconditions are ever loosened.
    let mut sites: Vec<Vec<f64>> = Vec::with_capacity(2 + 2 * offsets.len());
    sites.push(x.to_vec());
    sites.push(x_prime.to_vec());
    for d in offsets {
        sites.push(x.iter().zip(d).map(|(a, b)| a + b).collect());
        sites.push(x_prime.iter().zip(d).map(|(a, b)| a + b).collect());
    }
    let grads: Vec<ParamGradient> = sites
        .iter()
        .map(|s| param_gradient(model, params, s))
        .collect::<Result<_>>()?;
    let mut assumption_ok = true;
    'outer: for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            if euclid(&sites[i], &sites[j]) > region_size {
                continue;
            }
            if signed_inner(&grads[i], &grads[j]) < 0.0 {
                assumption_ok = false;
                break 'outer;
            }
        }
    }

    let scale = g_point.max(g_region);
    let holds = g_region >= g_point - 1e-12 * scale;
    Ok(BoostCheck {
        g_point,
        g_region,
        holds,
        assumption_ok,
    })
}
