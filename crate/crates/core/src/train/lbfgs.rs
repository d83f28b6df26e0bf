//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The two-loop recursion builds the quasi-Newton direction from the last
//! `history` curvature pairs `(s, y)`, scaled by `gamma = s·y / y·y`. Pairs
//! with `s·y <= 1e-10` are discarded rather than stored: a near-zero
//! curvature product would make the inverse-Hessian estimate indefinite.
//! The line search is the classic bracket/zoom scheme with safeguarded
//! cubic interpolation, enforcing
//!
//! ```text
//! f(θ + αd) <= f(θ) + c₁ α g·d        (sufficient decrease)
//! |g(θ + αd)·d| <= c₂ |g·d|           (curvature)
//! ```
//!
//! The optimizer caches the objective value and gradient at the accepted
//! point so the next iteration starts without a redundant evaluation. When
//! the objective itself changes between iterations — e.g. a model resamples
//! its perturbation offsets — the caller must [`Lbfgs::invalidate_cache`]
//! so the stale pair is re-evaluated under the new objective. Curvature
//! pairs are always formed from two gradients of the *same* objective
//! because both are computed inside a single `step` call.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsParams {
    /// Number of curvature pairs retained. Zero degrades to steepest
    /// descent with the same line search.
    pub history: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Objective-evaluation budget per line search.
    pub max_line_evals: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        LbfgsParams {
            history: 50,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 25,
        }
    }
}

/// What one optimizer iteration did.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub loss_before: f64,
    pub loss_after: f64,
    /// Accepted step length along the search direction (0 when the
    /// gradient already vanished).
    pub step_len: f64,
    /// Objective evaluations spent this iteration.
    pub evals: usize,
    /// True when the line search failed and the iterate fell back to a
    /// short normalized gradient step.
    pub fallback: bool,
    /// Euclidean norm of the gradient at the starting point.
    pub grad_norm: f64,
}

/// Outcome of one trial evaluation along the ray θ + αd.
struct Probe {
    a: f64,
    f: f64,
    /// Directional derivative g(θ+αd)·d.
    dphi: f64,
    g: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Lbfgs {
    p: LbfgsParams,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
    /// (f, g) at the current iterate, valid until the objective changes.
    cached: Option<(f64, Vec<f64>)>,
    first: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const CURVATURE_SKIP: f64 = 1e-10;
const FALLBACK_STEP: f64 = 1e-4;

impl Lbfgs {
    pub fn new(p: LbfgsParams) -> Self {
        Lbfgs {
            p,
            s: VecDeque::new(),
            y: VecDeque::new(),
            rho: VecDeque::new(),
            cached: None,
            first: true,
        }
    }

    /// Drop the cached (value, gradient) pair. Required whenever the
    /// objective changes under the optimizer between steps; the stored
    /// curvature pairs are kept, as usual for stochastic quasi-Newton.
    pub fn invalidate_cache(&mut self) {
        self.cached = None;
    }

    /// Two-loop recursion: approximate −H⁻¹g from stored pairs.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if let (Some(s), Some(y)) = (self.s.back(), self.y.back()) {
            let gamma = dot(s, y) / dot(y, y);
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        }
        for i in 0..k {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        for qj in q.iter_mut() {
            *qj = -*qj;
        }
        q
    }

    fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) {
        if self.p.history == 0 {
            return;
        }
        let sy = dot(&s, &y);
        if sy <= CURVATURE_SKIP {
            return;
        }
        if self.s.len() == self.p.history {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
        self.rho.push_back(1.0 / sy);
        self.s.push_back(s);
        self.y.push_back(y);
    }

    /// One quasi-Newton iteration: direction, strong-Wolfe line search,
    /// curvature update. `obj` evaluates the objective and gradient at a
    /// trial point. The iterate is updated in place.
    pub fn step<F>(&mut self, theta: &mut [f64], mut obj: F) -> Result<StepReport>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let mut evals = 0usize;
        let (f0, g0) = match self.cached.take() {
            Some(pair) => pair,
            None => {
                evals += 1;
                obj(theta)?
            }
        };
        let gnorm = norm2(&g0);
        if gnorm == 0.0 {
            self.cached = Some((f0, g0));
            return Ok(StepReport {
                loss_before: f0,
                loss_after: f0,
                step_len: 0.0,
                evals,
                fallback: false,
                grad_norm: 0.0,
            });
        }

        let mut d = self.direction(&g0);
        let mut dphi0 = dot(&g0, &d);
        if dphi0 >= 0.0 {
            // Stale curvature produced a non-descent direction: restart
            // from steepest descent.
            self.s.clear();
            self.y.clear();
            self.rho.clear();
            d = g0.iter().map(|g| -g).collect();
            dphi0 = -gnorm * gnorm;
        }

        let a_init = if self.first {
            let g1: f64 = g0.iter().map(|g| g.abs()).sum();
            (1.0 / g1).min(1.0)
        } else {
            1.0
        };
        self.first = false;

        let found = wolfe_search(
            theta,
            &d,
            f0,
            dphi0,
            a_init,
            self.p,
            &mut obj,
            &mut evals,
        )?;

        let (new_theta, f_new, g_new, step_len, fallback) = match found {
            Some(p) => {
                let mut t: Vec<f64> = theta.to_vec();
                for (ti, di) in t.iter_mut().zip(&d) {
                    *ti += p.a * di;
                }
                (t, p.f, p.g, p.a, false)
            }
            None => {
                // Line search exhausted its budget without any decrease:
                // take a short normalized gradient step so the iterate at
                // least moves off the troublesome point, and flag it.
                let scale = FALLBACK_STEP / gnorm.max(1e-12);
                let t: Vec<f64> = theta
                    .iter()
                    .zip(&g0)
                    .map(|(ti, gi)| ti - scale * gi)
                    .collect();
                evals += 1;
                let (f, g) = obj(&t)?;
                (t, f, g, scale * gnorm, true)
            }
        };

        let s: Vec<f64> = new_theta.iter().zip(theta.iter()).map(|(n, o)| n - o).collect();
        let y: Vec<f64> = g_new.iter().zip(&g0).map(|(n, o)| n - o).collect();
        self.push_pair(s, y);

        theta.copy_from_slice(&new_theta);
        self.cached = Some((f_new, g_new));
        Ok(StepReport {
            loss_before: f0,
            loss_after: f_new,
            step_len,
            evals,
            fallback,
            grad_norm: gnorm,
        })
    }
}

/// Strong-Wolfe line search (bracketing phase). Returns the accepted probe,
/// or the best sufficient-decrease probe seen if the budget runs out, or
/// `None` when no trial produced any decrease.
#[allow(clippy::too_many_arguments)]
fn wolfe_search<F>(
    theta: &[f64],
    d: &[f64],
    f0: f64,
    dphi0: f64,
    a_init: f64,
    p: LbfgsParams,
    obj: &mut F,
    evals: &mut usize,
) -> Result<Option<Probe>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut probe_at = |a: f64, evals: &mut usize| -> Result<Probe> {
        let t: Vec<f64> = theta.iter().zip(d).map(|(ti, di)| ti + a * di).collect();
        *evals += 1;
        let (f, g) = obj(&t)?;
        let dphi = dot(&g, d);
        Ok(Probe { a, f, dphi, g })
    };

    let mut best: Option<Probe> = None;
    let mut prev = Probe {
        a: 0.0,
        f: f0,
        dphi: dphi0,
        g: Vec::new(),
    };
    let mut a = a_init;
    while *evals < p.max_line_evals {
        let cur = probe_at(a, evals)?;
        if !cur.f.is_finite() {
            // Overshot into a non-finite region; treat like a failed
            // sufficient-decrease test and zoom back toward prev.
            return zoom(theta, d, f0, dphi0, prev, cur, p, obj, evals, best);
        }
        if cur.f < f0 && best.as_ref().map_or(true, |b| cur.f < b.f) {
            best = Some(Probe {
                a: cur.a,
                f: cur.f,
                dphi: cur.dphi,
                g: cur.g.clone(),
            });
        }
        if cur.f > f0 + p.c1 * a * dphi0 || (prev.a > 0.0 && cur.f >= prev.f) {
            return zoom(theta, d, f0, dphi0, prev, cur, p, obj, evals, best);
        }
        if cur.dphi.abs() <= -p.c2 * dphi0 {
            return Ok(Some(cur));
        }
        if cur.dphi >= 0.0 {
            return zoom(theta, d, f0, dphi0, cur, prev, p, obj, evals, best);
        }
        prev = cur;
        a *= 2.0;
    }
    Ok(best)
}

/// Zoom phase: shrink [lo, hi] (lo holds the best sufficient-decrease point
/// so far) with safeguarded cubic interpolation until the curvature
/// condition holds or the evaluation budget is spent.
#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    theta: &[f64],
    d: &[f64],
    f0: f64,
    dphi0: f64,
    mut lo: Probe,
    mut hi: Probe,
    p: LbfgsParams,
    obj: &mut F,
    evals: &mut usize,
    mut best: Option<Probe>,
) -> Result<Option<Probe>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    while *evals < p.max_line_evals {
        let a = cubic_min(lo.a, lo.f, lo.dphi, hi.a, hi.f, hi.dphi);
        let t: Vec<f64> = theta.iter().zip(d).map(|(ti, di)| ti + a * di).collect();
        *evals += 1;
        let (f, g) = obj(&t)?;
        let cur = Probe {
            a,
            f,
            dphi: dot(&g, d),
            g,
        };
        if cur.f.is_finite() && cur.f < f0 && best.as_ref().map_or(true, |b| cur.f < b.f) {
            best = Some(Probe {
                a: cur.a,
                f: cur.f,
                dphi: cur.dphi,
                g: cur.g.clone(),
            });
        }
        if !cur.f.is_finite() || cur.f > f0 + p.c1 * a * dphi0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dphi.abs() <= -p.c2 * dphi0 {
                return Ok(Some(cur));
            }
            if cur.dphi * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.a - lo.a).abs() < 1e-14 * lo.a.abs().max(1.0) {
            break; // interval collapsed; fall through to best-so-far
        }
    }
    Ok(best)
}

/// Minimizer of the cubic fit through (a0,f0,d0) and (a1,f1,d1), safeguarded
/// to the interior of the interval; bisects when the fit is degenerate.
fn cubic_min(a0: f64, f0: f64, d0: f64, a1: f64, f1: f64, d1: f64) -> f64 {
    let (lo, hi) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let width = hi - lo;
    let mid = 0.5 * (lo + hi);
    if width <= 0.0 {
        return mid;
    }
    let e1 = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
    let disc = e1 * e1 - d0 * d1;
    if disc < 0.0 {
        return mid;
    }
    let e2 = (a1 - a0).signum() * disc.sqrt();
    let denom = d1 - d0 + 2.0 * e2;
    if denom == 0.0 {
        return mid;
    }
    let a = a1 - (a1 - a0) * (d1 + e2 - e1) / denom;
    // keep a safeguard margin away from both ends so the bracket shrinks
    let margin = 0.1 * width;
    if !a.is_finite() || a < lo + margin || a > hi - margin {
        mid
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = Σ cᵢ (xᵢ − bᵢ)², gradient 2 cᵢ (xᵢ − bᵢ).
    fn quadratic<'a>(
        c: &'a [f64],
        b: &'a [f64],
    ) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + 'a {
        move |x: &[f64]| {
            let f = x
                .iter()
                .zip(c)
                .zip(b)
                .map(|((xi, ci), bi)| ci * (xi - bi) * (xi - bi))
                .sum();
            let g = x
                .iter()
                .zip(c)
                .zip(b)
                .map(|((xi, ci), bi)| 2.0 * ci * (xi - bi))
                .collect();
            Ok((f, g))
        }
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (1.0, 100.0);
        let f = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
        let g = vec![
            -2.0 * (a - x[0]) - 4.0 * b * x[0] * (x[1] - x[0] * x[0]),
            2.0 * b * (x[1] - x[0] * x[0]),
        ];
        Ok((f, g))
    }

    #[test]
    fn near_exact_line_search_finishes_a_quadratic_in_dimension_steps() {
        // with (almost) exact line searches, quasi-Newton on an n-dim
        // quadratic terminates in at most n+1 iterations — the classic
        // conjugate-gradient equivalence, and a sharp check that the
        // two-loop recursion reconstructs the right inverse Hessian
        let c = [1.0, 10.0, 100.0];
        let b = [1.0, -2.0, 0.5];
        let p = LbfgsParams {
            c2: 0.01,
            ..LbfgsParams::default()
        };
        let mut opt = Lbfgs::new(p);
        let mut x = vec![0.0; 3];
        let mut iters = 0;
        for _ in 0..5 {
            let r = opt.step(&mut x, quadratic(&c, &b)).unwrap();
            iters += 1;
            if r.grad_norm < 1e-10 {
                break;
            }
        }
        let (_, g) = quadratic(&c, &b)(&x).unwrap();
        assert!(
            norm2(&g) < 1e-8,
            "gradient {:e} after {iters} near-exact iterations",
            norm2(&g)
        );
    }

    #[test]
    fn anisotropic_quadratic_converges_under_the_loose_default_search() {
        // the default c2 = 0.9 accepts sloppy steps (usually the unit
        // step, one evaluation per iteration); convergence is slower but
        // must still be decisively superlinear
        let c = [1.0, 10.0, 100.0];
        let b = [1.0, -2.0, 0.5];
        let mut opt = Lbfgs::new(LbfgsParams::default());
        let mut x = vec![0.0; 3];
        for _ in 0..20 {
            let r = opt.step(&mut x, quadratic(&c, &b)).unwrap();
            if r.grad_norm < 1e-10 {
                break;
            }
        }
        let (_, g) = quadratic(&c, &b)(&x).unwrap();
        assert!(norm2(&g) < 1e-8, "gradient {:e} after 20 iterations", norm2(&g));
        for (xi, bi) in x.iter().zip(b) {
            assert!((xi - bi).abs() < 1e-8);
        }
    }

    #[test]
    fn rosenbrock_valley_reached_within_budget() {
        let mut opt = Lbfgs::new(LbfgsParams::default());
        let mut x = vec![-1.2, 1.0];
        let mut f = f64::INFINITY;
        for _ in 0..100 {
            let r = opt.step(&mut x, rosenbrock).unwrap();
            f = r.loss_after;
            if f < 1e-10 {
                break;
            }
        }
        assert!(f < 1e-8, "rosenbrock stalled at f = {f:e}, x = {x:?}");
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_gradient_reports_converged_without_moving() {
        let mut opt = Lbfgs::new(LbfgsParams::default());
        let mut x = vec![3.0, -1.0];
        let r = opt
            .step(&mut x, |x: &[f64]| Ok((7.5, vec![0.0; x.len()])))
            .unwrap();
        assert_eq!(r.step_len, 0.0);
        assert_eq!(r.grad_norm, 0.0);
        assert_eq!(x, vec![3.0, -1.0]);
    }

    #[test]
    fn zero_history_is_steepest_descent_and_still_converges() {
        let p = LbfgsParams {
            history: 0,
            ..LbfgsParams::default()
        };
        let c = [1.0, 4.0];
        let b = [2.0, -1.0];
        let mut opt = Lbfgs::new(p);
        let mut x = vec![0.0; 2];
        for _ in 0..60 {
            opt.step(&mut x, quadratic(&c, &b)).unwrap();
        }
        assert!(opt.s.is_empty(), "history must stay empty");
        let (f, _) = quadratic(&c, &b)(&x).unwrap();
        assert!(f < 1e-10, "steepest descent stalled at f = {f:e}");
    }

    #[test]
    fn cache_skips_reevaluation_and_invalidation_restores_it() {
        // identical trajectories, run twice: run B invalidates the cache
        // between steps, which must cost exactly one extra evaluation (the
        // re-anchoring of the start point) and change nothing numerically
        let c = [1.0, 3.0];
        let b = [1.0, -1.0];
        let mut opt_a = Lbfgs::new(LbfgsParams::default());
        let mut xa = vec![0.0; 2];
        opt_a.step(&mut xa, quadratic(&c, &b)).unwrap();
        let a2 = opt_a.step(&mut xa, quadratic(&c, &b)).unwrap();

        let mut opt_b = Lbfgs::new(LbfgsParams::default());
        let mut xb = vec![0.0; 2];
        opt_b.step(&mut xb, quadratic(&c, &b)).unwrap();
        opt_b.invalidate_cache();
        let b2 = opt_b.step(&mut xb, quadratic(&c, &b)).unwrap();

        assert_eq!(b2.evals, a2.evals + 1, "one extra anchor evaluation");
        assert_eq!(xa, xb, "re-evaluating the same objective changes nothing");
        assert_eq!(a2.loss_after.to_bits(), b2.loss_after.to_bits());
    }
}
