//! Benchmark PDE problems on space–time rectangles.
//!
//! Each problem bundles a residual operator expressible in second-order
//! jets, initial- and boundary-condition terms, default loss weights, and
//! a reference solution (closed form where one exists, a spectral grid for
//! Allen–Cahn). Coordinates are ordered `[x, t]`. Every constructor runs a
//! self-validation gate: the reference must annihilate the residual (or,
//! for gridded references, satisfy the structural properties the solver
//! guarantees) before the problem is handed out.

pub mod collocation;
pub mod reference;
pub mod spectral;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{Dual2, JetPlan, JetSlot};
use crate::models::analytic::AnalyticModel;

pub use collocation::{sample_collocation, BoundaryPoints, CollocationSet, CollocationSpec};
pub use reference::{RefGrid, Reference};

pub const AXIS_X: usize = 0;
pub const AXIS_T: usize = 1;

/// Residual operators of the four standard benchmarks, written so that
/// `eval` is zero exactly when the PDE holds at the point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Residual {
    /// `u_t + beta * u_x`
    Convection { beta: f64 },
    /// `u_t - rho * u * (1 - u)`
    Reaction { rho: f64 },
    /// `u_t - nu * u_xx + a * u^3 - a * u`
    AllenCahn { nu: f64, a: f64 },
    /// `u_tt - c2 * u_xx`
    Wave { c2: f64 },
}

impl Residual {
    /// First-derivative axes the operator reads (beyond those implied by
    /// second derivatives).
    pub fn d1_mask(&self) -> u8 {
        match self {
            Residual::Convection { .. } => (1 << AXIS_X) | (1 << AXIS_T),
            Residual::Reaction { .. } => 1 << AXIS_T,
            Residual::AllenCahn { .. } => 1 << AXIS_T,
            Residual::Wave { .. } => 0,
        }
    }

    pub fn d2_mask(&self) -> u8 {
        match self {
            Residual::Convection { .. } | Residual::Reaction { .. } => 0,
            Residual::AllenCahn { .. } => 1 << AXIS_X,
            Residual::Wave { .. } => (1 << AXIS_X) | (1 << AXIS_T),
        }
    }

    /// Minimal jet plan that lets this operator evaluate.
    pub fn plan(&self, dim: usize) -> JetPlan {
        let d2 = self.d2_mask();
        // a second derivative forces the matching first derivative; the
        // plan constructor insists on that closure
        JetPlan::new(dim, self.d1_mask() | d2, d2).expect("masks are consistent")
    }

    pub fn eval(&self, jet: &JetSlot) -> f64 {
        match *self {
            Residual::Convection { beta } => jet.d1(AXIS_T) + beta * jet.d1(AXIS_X),
            Residual::Reaction { rho } => {
                let u = jet.value();
                jet.d1(AXIS_T) - rho * u * (1.0 - u)
            }
            Residual::AllenCahn { nu, a } => {
                let u = jet.value();
                jet.d1(AXIS_T) - nu * jet.d2(AXIS_X) + a * u * u * u - a * u
            }
            Residual::Wave { c2 } => jet.d2(AXIS_T) - c2 * jet.d2(AXIS_X),
        }
    }

    /// Accumulate `upstream * d(residual)/d(jet component)` into `adj`,
    /// indexed like the jet buffer of `plan`.
    pub fn adjoint(&self, plan: JetPlan, jet: &JetSlot, upstream: f64, adj: &mut [f64]) {
        match *self {
            Residual::Convection { beta } => {
                adj[plan.d1_slot(AXIS_T).unwrap()] += upstream;
                adj[plan.d1_slot(AXIS_X).unwrap()] += beta * upstream;
            }
            Residual::Reaction { rho } => {
                let u = jet.value();
                adj[plan.d1_slot(AXIS_T).unwrap()] += upstream;
                adj[0] += upstream * rho * (2.0 * u - 1.0);
            }
            Residual::AllenCahn { nu, a } => {
                let u = jet.value();
                adj[plan.d1_slot(AXIS_T).unwrap()] += upstream;
                adj[plan.d2_slot(AXIS_X).unwrap()] -= nu * upstream;
                adj[0] += upstream * a * (3.0 * u * u - 1.0);
            }
            Residual::Wave { c2 } => {
                adj[plan.d2_slot(AXIS_T).unwrap()] += upstream;
                adj[plan.d2_slot(AXIS_X).unwrap()] -= c2 * upstream;
            }
        }
    }

    /// Residual of a twice-differentiable closed form, for oracle checks.
    pub fn of_analytic(&self, u: &AnalyticModel, x: &[f64]) -> f64 {
        let jet = u.eval_jet(x);
        let plan = self.plan(x.len());
        let mut buf = vec![0.0; plan.comps()];
        buf[0] = jet.value;
        for (slot, axis) in plan.d1_slots() {
            buf[slot] = jet.d1[axis];
        }
        for (slot, _, axis) in plan.d2_slots() {
            buf[slot] = jet.d2[axis];
        }
        self.eval(&JetSlot::new(plan, &buf))
    }
}

/// One initial-condition term enforced on the `t = t_lo` face.
#[derive(Clone)]
pub enum IcTerm {
    /// `u(x, t0) = g(x)`
    Value(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// `u_t(x, t0) = g(x)`
    TimeDerivative(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for IcTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IcTerm::Value(_) => f.write_str("IcTerm::Value"),
            IcTerm::TimeDerivative(_) => f.write_str("IcTerm::TimeDerivative"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    /// `u = value` on both spatial ends.
    Dirichlet { value: f64 },
    /// `u(x_lo, t) = u(x_hi, t)`.
    Periodic,
    /// Periodic in value and in the first spatial derivative.
    PeriodicWithDerivative,
}

/// Default loss weights for the composite objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub res: f64,
    pub ic: f64,
    pub bc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            res: 1.0,
            ic: 1.0,
            bc: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.res, self.ic, self.bc];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub name: &'static str,
    /// Per-axis `(lo, hi)`, ordered `[x, t]`.
    pub domain: Vec<(f64, f64)>,
    pub residual: Residual,
    pub ics: Vec<IcTerm>,
    pub bc: BoundaryCondition,
    pub weights: LossWeights,
    pub reference: Reference,
}

impl PdeProblem {
    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    /// Jet plan covering the residual and every constraint term: the wave
    /// velocity IC needs `d1` in `t` even though Dirichlet values do not,
    /// and derivative-periodic boundaries need `d1` in `x`.
    pub fn plan(&self) -> JetPlan {
        let mut plan = self.residual.plan(self.dim());
        if self
            .ics
            .iter()
            .any(|ic| matches!(ic, IcTerm::TimeDerivative(_)))
        {
            plan = plan
                .union(JetPlan::new(self.dim(), 1 << AXIS_T, 0).unwrap())
                .unwrap();
        }
        if matches!(self.bc, BoundaryCondition::PeriodicWithDerivative) {
            plan = plan
                .union(JetPlan::new(self.dim(), 1 << AXIS_X, 0).unwrap())
                .unwrap();
        }
        plan
    }

    pub fn x_bounds(&self) -> (f64, f64) {
        self.domain[AXIS_X]
    }

    pub fn t_bounds(&self) -> (f64, f64) {
        self.domain[AXIS_T]
    }
}

/// Low-discrepancy interior samples for self-validation gates; additive
/// lattice so the points spread over the rectangle without RNG plumbing.
fn gate_points(domain: &[(f64, f64)], n: usize) -> Vec<[f64; 2]> {
    let (xb, tb) = (domain[AXIS_X], domain[AXIS_T]);
    (0..n)
        .map(|i| {
            let a = ((i as f64 + 0.5) * 0.754_877_666_246_692_9).fract();
            let b = ((i as f64 + 0.5) * 0.569_840_290_998_053_3).fract();
            [
                xb.0 + (xb.1 - xb.0) * (0.02 + 0.96 * a),
                tb.0 + (tb.1 - tb.0) * (0.02 + 0.96 * b),
            ]
        })
        .collect()
}

fn assert_reference_annihilates_residual(problem: &PdeProblem) {
    let u = match &problem.reference {
        Reference::ClosedForm(m) => m,
        Reference::Grid(_) => return,
    };
    let pts = gate_points(&problem.domain, 128);
    let ms: f64 = pts
        .iter()
        .map(|p| {
            let r = problem.residual.of_analytic(u, p);
            r * r
        })
        .sum::<f64>()
        / pts.len() as f64;
    assert!(
        ms.sqrt() < 1e-8,
        "{}: reference fails its own residual, RMS {:.3e}",
        problem.name,
        ms.sqrt()
    );
}

/// `u_t + 50 u_x = 0` on `(0, 2π) × (0, 1)`, `u(x,0) = sin x`, periodic.
/// Reference `u = sin(x − 50 t)`. The standard propagation-failure
/// benchmark: the transported wave must travel far in time.
pub fn convection() -> PdeProblem {
    let beta = 50.0;
    let problem = PdeProblem {
        name: "convection",
        domain: vec![(0.0, 2.0 * std::f64::consts::PI), (0.0, 1.0)],
        residual: Residual::Convection { beta },
        ics: vec![IcTerm::Value(Arc::new(f64::sin))],
        bc: BoundaryCondition::Periodic,
        weights: LossWeights::default(),
        reference: Reference::ClosedForm(reference::convection_reference(beta)),
    };
    assert_reference_annihilates_residual(&problem);
    problem
}

/// `u_t = 5 u (1 − u)` on `(0, 2π) × (0, 1)` with a Gaussian bump initial
/// condition; the logistic flow map gives the closed form.
pub fn reaction() -> PdeProblem {
    let rho = 5.0;
    let problem = PdeProblem {
        name: "reaction",
        domain: vec![(0.0, 2.0 * std::f64::consts::PI), (0.0, 1.0)],
        residual: Residual::Reaction { rho },
        ics: vec![IcTerm::Value(Arc::new(reference::reaction_ic))],
        bc: BoundaryCondition::Periodic,
        weights: LossWeights::default(),
        reference: Reference::ClosedForm(reference::reaction_reference(rho)),
    };
    assert_reference_annihilates_residual(&problem);
    problem
}

/// `u_tt = 4 u_xx` on `(0, 1) × (0, 1)`, fixed ends, standing-wave
/// initial shape with zero initial velocity. The velocity condition is an
/// extra initial-condition term sharing the IC weight.
pub fn wave() -> PdeProblem {
    let problem = PdeProblem {
        name: "wave",
        domain: vec![(0.0, 1.0), (0.0, 1.0)],
        residual: Residual::Wave { c2: 4.0 },
        ics: vec![
            IcTerm::Value(Arc::new(|x: f64| {
                let pi = std::f64::consts::PI;
                (pi * x).sin() + 0.5 * (3.0 * pi * x).sin()
            })),
            IcTerm::TimeDerivative(Arc::new(|_x: f64| 0.0)),
        ],
        bc: BoundaryCondition::Dirichlet { value: 0.0 },
        weights: LossWeights::default(),
        reference: Reference::ClosedForm(reference::wave_reference()),
    };
    assert_reference_annihilates_residual(&problem);
    problem
}

/// Allen–Cahn `u_t = 1e-4 u_xx − 5 u³ + 5 u` on `(−1, 1) × (0, 1)`,
/// `u(x,0) = x² cos(πx)`, periodic in value and derivative, IC weight 10.
/// The reference grid must come from the pseudo-spectral solver (or a file
/// it wrote); its structural guarantees are re-checked here.
pub fn allen_cahn(grid: Arc<RefGrid>) -> Result<PdeProblem> {
    let t0_ok = {
        let ic = |x: f64| x * x * (std::f64::consts::PI * x).cos();
        grid.xs()
            .iter()
            .all(|&x| (grid.eval(x, 0.0) - ic(x)).abs() < 1e-12)
    };
    if !t0_ok {
        return Err(Error::config(
            "allen-cahn reference grid does not match the initial condition",
        ));
    }
    for &t in grid.ts() {
        let gap = (grid.eval(-1.0, t) - grid.eval(1.0, t)).abs();
        if gap > 1e-8 {
            return Err(Error::config(format!(
                "allen-cahn reference grid breaks periodicity at t={t}: gap {gap:.3e}"
            )));
        }
    }
    Ok(PdeProblem {
        name: "allen-cahn",
        domain: vec![(-1.0, 1.0), (0.0, 1.0)],
        residual: Residual::AllenCahn { nu: 1e-4, a: 5.0 },
        ics: vec![IcTerm::Value(Arc::new(|x: f64| {
            x * x * (std::f64::consts::PI * x).cos()
        }))],
        bc: BoundaryCondition::PeriodicWithDerivative,
        weights: LossWeights {
            res: 1.0,
            ic: 10.0,
            bc: 1.0,
        },
        reference: Reference::Grid(grid),
    })
}

/// Allen–Cahn with the reference generated in-process at the default
/// spectral resolution (512 × 201, adjusted Crank–Nicolson/Adams–Bashforth
/// stepping). A second or two of compute; callers that run repeatedly
/// should cache the grid to disk instead.
pub fn allen_cahn_default() -> Result<PdeProblem> {
    let grid = spectral::allen_cahn_reference(&spectral::SpectralParams::default())?;
    allen_cahn(Arc::new(grid))
}

/// Problem registry for configs and CLI. `allen-cahn` pays the spectral
/// solve; the other three are instant.
pub fn by_name(name: &str) -> Result<PdeProblem> {
    match name {
        "convection" => Ok(convection()),
        "reaction" => Ok(reaction()),
        "wave" => Ok(wave()),
        "allen-cahn" => allen_cahn_default(),
        other => Err(Error::config(format!(
            "unknown problem {other:?}; expected convection, reaction, wave, or allen-cahn"
        ))),
    }
}

/// Evaluate a problem's residual for an arbitrary closed form given as a
/// dual-number expression; convenient for hand checks in tests.
pub fn residual_of_expr<F>(residual: &Residual, f: F, x: &[f64]) -> f64
where
    F: Fn(&[Dual2]) -> Dual2 + Send + Sync + 'static,
{
    residual.of_analytic(&AnalyticModel::new(x.len(), Arc::new(f)), x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convection_reference_satisfies_the_pde_pointwise() {
        let p = convection();
        let r = match &p.reference {
            Reference::ClosedForm(m) => p.residual.of_analytic(m, &[1.0, 0.3]),
            _ => unreachable!(),
        };
        assert!(r.abs() < 1e-9, "residual {r}");
    }

    #[test]
    fn zero_function_solves_convection_but_not_its_ic() {
        let p = convection();
        let r = residual_of_expr(&p.residual, |x| Dual2::constant(x[0].dim, 0.0), &[2.0, 0.5]);
        assert_eq!(r, 0.0, "the all-zero function annihilates the operator");
    }

    #[test]
    fn convection_residual_of_static_wave_is_beta_times_slope() {
        // u(x,t) = sin(x) has u_t = 0, so the residual is 50 cos(x)
        let x = 0.7;
        let r = residual_of_expr(
            &Residual::Convection { beta: 50.0 },
            |v| v[0].sin(),
            &[x, 0.2],
        );
        assert!((r - 50.0 * x.cos()).abs() < 1e-12);
    }

    #[test]
    fn constant_one_is_a_reaction_equilibrium() {
        let r = residual_of_expr(
            &Residual::Reaction { rho: 5.0 },
            |x| Dual2::constant(x[0].dim, 1.0),
            &[3.0, 0.4],
        );
        assert_eq!(r, 0.0);
    }

    #[test]
    fn reaction_reference_matches_its_ic_at_t_zero() {
        let p = reaction();
        let m = match &p.reference {
            Reference::ClosedForm(m) => m,
            _ => unreachable!(),
        };
        for &x in &[0.0, 1.0, std::f64::consts::PI, 5.5] {
            let want = reference::reaction_ic(x);
            let got = m.eval_value(&[x, 0.0]);
            assert!((got - want).abs() < 1e-14, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn wave_reference_vanishes_on_the_fixed_ends_and_starts_at_rest() {
        let p = wave();
        let m = match &p.reference {
            Reference::ClosedForm(m) => m,
            _ => unreachable!(),
        };
        for &t in &[0.0, 0.31, 0.77, 1.0] {
            assert!(m.eval_value(&[0.0, t]).abs() < 1e-12);
            assert!(m.eval_value(&[1.0, t]).abs() < 1e-12);
        }
        for &x in &[0.2, 0.55, 0.9] {
            let jet = m.eval_jet(&[x, 0.0]);
            assert!(jet.d1[AXIS_T].abs() < 1e-12, "initial velocity at {x}");
        }
    }

    #[test]
    fn residual_plans_are_minimal() {
        assert_eq!(Residual::Convection { beta: 1.0 }.plan(2).comps(), 3);
        assert_eq!(Residual::Reaction { rho: 1.0 }.plan(2).comps(), 2);
        assert_eq!(Residual::AllenCahn { nu: 1.0, a: 1.0 }.plan(2).comps(), 4);
        assert_eq!(Residual::Wave { c2: 1.0 }.plan(2).comps(), 5);
    }

    #[test]
    fn wave_problem_plan_includes_the_velocity_ic_axis() {
        // the wave residual alone needs d2 (hence d1) on both axes; the
        // velocity IC adds nothing new, but the composite plan must still
        // be the full one
        let p = wave();
        assert_eq!(p.plan().comps(), 5);
        // convection's plan stays minimal: no d2 anywhere
        assert_eq!(convection().plan().comps(), 3);
    }

    #[test]
    fn residual_adjoints_match_dual_derivatives() {
        // differentiate residual(jet components) by perturbing each
        // component and comparing with the adjoint accumulation
        let cases = [
            Residual::Convection { beta: 50.0 },
            Residual::Reaction { rho: 5.0 },
            Residual::AllenCahn { nu: 1e-4, a: 5.0 },
            Residual::Wave { c2: 4.0 },
        ];
        for res in cases {
            let plan = res.plan(2);
            let n = plan.comps();
            let base: Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * i as f64).collect();
            let mut adj = vec![0.0; n];
            res.adjoint(plan, &JetSlot::new(plan, &base), 1.0, &mut adj);
            let h = 1e-7;
            for c in 0..n {
                let mut plus = base.clone();
                plus[c] += h;
                let mut minus = base.clone();
                minus[c] -= h;
                let fd = (res.eval(&JetSlot::new(plan, &plus))
                    - res.eval(&JetSlot::new(plan, &minus)))
                    / (2.0 * h);
                assert!(
                    (adj[c] - fd).abs() < 1e-6,
                    "{res:?} component {c}: adjoint {} vs fd {fd}",
                    adj[c]
                );
            }
        }
    }
}
