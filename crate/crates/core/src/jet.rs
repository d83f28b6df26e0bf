//! Second-order axis-aligned jets.
//!
//! A `Jet2` carries a value together with first derivatives `d1[i]` and
//! *pure* second derivatives `d2[i]` with respect to each input coordinate.
//! Mixed partials are never tracked: the benchmark residuals only need
//! `u_t`, `u_x`, `u_xx`, `u_tt`, so propagating the full Hessian would
//! roughly double the cost of every layer for nothing.
//!
//! A [`JetPlan`] selects which components are live. The full plan (every
//! `d1` and `d2` axis) backs the public API; training uses the smallest
//! plan a problem's residual and conditions require — e.g. a first-order
//! transport residual never pays for second derivatives.
//!
//! [`Dual2`] is a scalar version of the same algebra with operator
//! overloading, used for closed-form reference solutions and analytic test
//! models, where convenience matters more than throughput.

use crate::error::{Error, Result};

/// Maximum supported input dimension (space + time for the benchmarks).
pub const MAX_DIM: usize = 3;

/// Which jet components a computation carries.
///
/// Component order in every buffer: value, then live `d1` axes ascending,
/// then live `d2` axes ascending. A live `d2` axis requires its `d1` axis,
/// because the chain rule for `d2` consumes `d1` of the same axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JetPlan {
    dim: u8,
    d1_mask: u8,
    d2_mask: u8,
}

impl JetPlan {
    pub fn new(dim: usize, d1_mask: u8, d2_mask: u8) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::config(format!("jet dimension {dim} out of range")));
        }
        let all = (1u8 << dim) - 1;
        if d1_mask & !all != 0 || d2_mask & !all != 0 {
            return Err(Error::config("jet plan mask references axis beyond dim"));
        }
        if d2_mask & !d1_mask != 0 {
            return Err(Error::config(
                "jet plan requests d2 on an axis without its d1 (chain rule needs it)",
            ));
        }
        Ok(JetPlan {
            dim: dim as u8,
            d1_mask,
            d2_mask,
        })
    }

    /// All first and second derivative components.
    pub fn full(dim: usize) -> Self {
        let all = (1u8 << dim) - 1;
        JetPlan::new(dim, all, all).expect("full plan is always valid")
    }

    /// Value only, no derivatives.
    pub fn value_only(dim: usize) -> Self {
        JetPlan::new(dim, 0, 0).expect("value-only plan is always valid")
    }

    /// Smallest plan covering both operands (closing over the d2->d1 rule).
    pub fn union(self, other: JetPlan) -> Result<Self> {
        debug_assert_eq!(self.dim, other.dim);
        let d2 = self.d2_mask | other.d2_mask;
        let d1 = self.d1_mask | other.d1_mask | d2;
        JetPlan::new(self.dim as usize, d1, d2)
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn d1_mask(&self) -> u8 {
        self.d1_mask
    }

    pub fn d2_mask(&self) -> u8 {
        self.d2_mask
    }

    /// Number of live components per scalar quantity.
    pub fn comps(&self) -> usize {
        1 + self.d1_mask.count_ones() as usize + self.d2_mask.count_ones() as usize
    }

    /// Component slot of `d1` along `axis`, if live.
    pub fn d1_slot(&self, axis: usize) -> Option<usize> {
        if self.d1_mask & (1 << axis) == 0 {
            return None;
        }
        let below = self.d1_mask & ((1u8 << axis) - 1);
        Some(1 + below.count_ones() as usize)
    }

    /// Component slot of `d2` along `axis`, if live.
    pub fn d2_slot(&self, axis: usize) -> Option<usize> {
        if self.d2_mask & (1 << axis) == 0 {
            return None;
        }
        let below = self.d2_mask & ((1u8 << axis) - 1);
        Some(1 + self.d1_mask.count_ones() as usize + below.count_ones() as usize)
    }

    /// Live `(slot, axis)` pairs for first derivatives.
    pub fn d1_slots(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim as usize).filter_map(|a| self.d1_slot(a).map(|s| (s, a)))
    }

    /// Live `(d2_slot, d1_slot, axis)` triples; the chain rule for a second
    /// derivative needs the first derivative along the same axis.
    pub fn d2_slots(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.dim as usize).filter_map(|a| {
            self.d2_slot(a)
                .map(|s2| (s2, self.d1_slot(a).expect("d2 implies d1"), a))
        })
    }
}

/// One output channel's jet: value plus per-axis first and pure second
/// derivatives. This is the public, fully populated form.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl Jet2 {
    pub fn zero(dim: usize) -> Self {
        Jet2 {
            value: 0.0,
            d1: vec![0.0; dim],
            d2: vec![0.0; dim],
        }
    }
}

/// Read-only view of one channel's live components under a plan.
#[derive(Debug, Clone, Copy)]
pub struct JetSlot<'a> {
    plan: JetPlan,
    comps: &'a [f64],
}

impl<'a> JetSlot<'a> {
    pub fn new(plan: JetPlan, comps: &'a [f64]) -> Self {
        debug_assert_eq!(comps.len(), plan.comps());
        JetSlot { plan, comps }
    }

    pub fn plan(&self) -> JetPlan {
        self.plan
    }

    pub fn value(&self) -> f64 {
        self.comps[0]
    }

    /// First derivative along `axis`. Panics if the plan does not carry it;
    /// residual/plan validation guarantees it does.
    pub fn d1(&self, axis: usize) -> f64 {
        self.comps[self
            .plan
            .d1_slot(axis)
            .expect("plan is missing a requested d1 axis")]
    }

    pub fn d2(&self, axis: usize) -> f64 {
        self.comps[self
            .plan
            .d2_slot(axis)
            .expect("plan is missing a requested d2 axis")]
    }

    /// Expand to a fully populated jet (absent components are zero only in
    /// the sense of "not computed"; callers that need them must use a plan
    /// that carries them).
    pub fn to_jet2(&self) -> Jet2 {
        let dim = self.plan.dim();
        let mut j = Jet2::zero(dim);
        j.value = self.value();
        for (slot, axis) in self.plan.d1_slots() {
            j.d1[axis] = self.comps[slot];
        }
        for (slot, _, axis) in self.plan.d2_slots() {
            j.d2[axis] = self.comps[slot];
        }
        j
    }
}

// ---------------------------------------------------------------------------
// Scalar jets with operator overloading.
// ---------------------------------------------------------------------------

/// Scalar second-order jet over up to [`MAX_DIM`] axes (no mixed partials).
///
/// For `y = f(u)`: `y' = f'(u) u'` and `y'' = f''(u) u'^2 + f'(u) u''`,
/// applied per axis.
#[derive(Debug, Clone, Copy)]
pub struct Dual2 {
    pub dim: usize,
    pub v: f64,
    pub d1: [f64; MAX_DIM],
    pub d2: [f64; MAX_DIM],
}

impl Dual2 {
    pub fn constant(dim: usize, v: f64) -> Self {
        Dual2 {
            dim,
            v,
            d1: [0.0; MAX_DIM],
            d2: [0.0; MAX_DIM],
        }
    }

    /// The coordinate variable along `axis`.
    pub fn var(dim: usize, axis: usize, v: f64) -> Self {
        let mut d = Dual2::constant(dim, v);
        d.d1[axis] = 1.0;
        d
    }

    /// Seed a full set of coordinate variables from a point.
    pub fn vars(x: &[f64]) -> Vec<Dual2> {
        (0..x.len()).map(|a| Dual2::var(x.len(), a, x[a])).collect()
    }

    fn lift(self, f: f64, df: f64, ddf: f64) -> Self {
        let mut out = Dual2::constant(self.dim, f);
        for a in 0..self.dim {
            out.d1[a] = df * self.d1[a];
            out.d2[a] = ddf * self.d1[a] * self.d1[a] + df * self.d2[a];
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.lift(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.lift(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.lift(e, e, e)
    }

    pub fn tanh(self) -> Self {
        let s = self.v.tanh();
        let p = 1.0 - s * s;
        self.lift(s, p, -2.0 * s * p)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.lift(r, -r * r, 2.0 * r * r * r)
    }

    pub fn sq(self) -> Self {
        self * self
    }

    pub fn powi(self, n: i32) -> Self {
        let f = self.v.powi(n);
        let df = n as f64 * self.v.powi(n - 1);
        let ddf = (n as f64) * (n as f64 - 1.0) * self.v.powi(n - 2);
        self.lift(f, df, ddf)
    }

    pub fn scale(self, c: f64) -> Self {
        self.lift(self.v * c, c, 0.0)
    }
}

impl std::ops::Add for Dual2 {
    type Output = Dual2;
    fn add(self, rhs: Dual2) -> Dual2 {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = Dual2::constant(self.dim, self.v + rhs.v);
        for a in 0..self.dim {
            out.d1[a] = self.d1[a] + rhs.d1[a];
            out.d2[a] = self.d2[a] + rhs.d2[a];
        }
        out
    }
}

impl std::ops::Sub for Dual2 {
    type Output = Dual2;
    fn sub(self, rhs: Dual2) -> Dual2 {
        self + (-rhs)
    }
}

impl std::ops::Neg for Dual2 {
    type Output = Dual2;
    fn neg(self) -> Dual2 {
        self.scale(-1.0)
    }
}

impl std::ops::Mul for Dual2 {
    type Output = Dual2;
    fn mul(self, rhs: Dual2) -> Dual2 {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = Dual2::constant(self.dim, self.v * rhs.v);
        for a in 0..self.dim {
            out.d1[a] = self.d1[a] * rhs.v + self.v * rhs.d1[a];
            // (fg)'' = f''g + 2 f'g' + f g''  per axis
            out.d2[a] = self.d2[a] * rhs.v + 2.0 * self.d1[a] * rhs.d1[a] + self.v * rhs.d2[a];
        }
        out
    }
}

impl std::ops::Div for Dual2 {
    type Output = Dual2;
    fn div(self, rhs: Dual2) -> Dual2 {
        self * rhs.recip()
    }
}

impl std::ops::Add<f64> for Dual2 {
    type Output = Dual2;
    fn add(self, rhs: f64) -> Dual2 {
        let mut out = self;
        out.v += rhs;
        out
    }
}

impl std::ops::Sub<f64> for Dual2 {
    type Output = Dual2;
    fn sub(self, rhs: f64) -> Dual2 {
        self + (-rhs)
    }
}

impl std::ops::Mul<f64> for Dual2 {
    type Output = Dual2;
    fn mul(self, rhs: f64) -> Dual2 {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol * b.abs().max(1.0),
            "{a} vs {b} (tol {tol})"
        );
    }

    #[test]
    fn plan_slots_and_comps() {
        // dim 2, d1 on both axes, d2 on axis 0 only
        let p = JetPlan::new(2, 0b11, 0b01).unwrap();
        assert_eq!(p.comps(), 4);
        assert_eq!(p.d1_slot(0), Some(1));
        assert_eq!(p.d1_slot(1), Some(2));
        assert_eq!(p.d2_slot(0), Some(3));
        assert_eq!(p.d2_slot(1), None);
        let full = JetPlan::full(2);
        assert_eq!(full.comps(), 5);
        assert_eq!(full.d2_slot(1), Some(4));
    }

    #[test]
    fn plan_rejects_d2_without_d1() {
        assert!(JetPlan::new(2, 0b01, 0b10).is_err());
    }

    #[test]
    fn plan_union_closes_over_chain_rule() {
        let a = JetPlan::new(2, 0b10, 0b00).unwrap(); // d1 on t
        let b = JetPlan::new(2, 0b01, 0b01).unwrap(); // d1,d2 on x
        let u = a.union(b).unwrap();
        assert_eq!(u.d1_mask(), 0b11);
        assert_eq!(u.d2_mask(), 0b01);
    }

    #[test]
    fn dual2_matches_hand_derivatives() {
        // f(x,t) = sin(x) * exp(2 t) at (0.3, 0.1)
        let (x, t) = (0.3f64, 0.1f64);
        let xd = Dual2::var(2, 0, x);
        let td = Dual2::var(2, 1, t);
        let f = xd.sin() * (td * 2.0).exp();
        let e = (2.0 * t).exp();
        assert_close(f.v, x.sin() * e, 1e-15);
        assert_close(f.d1[0], x.cos() * e, 1e-15);
        assert_close(f.d1[1], 2.0 * x.sin() * e, 1e-15);
        assert_close(f.d2[0], -x.sin() * e, 1e-15);
        assert_close(f.d2[1], 4.0 * x.sin() * e, 1e-15);
    }

    #[test]
    fn dual2_quotient_rule() {
        // g(x) = x / (1 + x^2): g' = (1 - x^2)/(1+x^2)^2,
        // g'' = 2x(x^2 - 3)/(1+x^2)^3
        let x = 0.7f64;
        let xd = Dual2::var(1, 0, x);
        let g = xd / (xd.sq() + 1.0);
        let denom = 1.0 + x * x;
        assert_close(g.v, x / denom, 1e-15);
        assert_close(g.d1[0], (1.0 - x * x) / (denom * denom), 1e-14);
        assert_close(
            g.d2[0],
            2.0 * x * (x * x - 3.0) / (denom * denom * denom),
            1e-14,
        );
    }

    #[test]
    fn dual2_tanh_second_derivative() {
        // (tanh v)'' = -2 tanh(v) (1 - tanh(v)^2)
        let v = 0.4f64;
        let d = Dual2::var(1, 0, v).tanh();
        let s = v.tanh();
        assert_close(d.d2[0], -2.0 * s * (1.0 - s * s), 1e-14);
    }
}
