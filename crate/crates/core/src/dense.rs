//! Dense-layer kernels over jet buffers.
//!
//! A jet buffer holds `comps` components for each of `n` neurons,
//! component-major: `buf[c * n + j]`. Component 0 is the value; the rest
//! are first/second input derivatives per the active [`JetPlan`]. Affine
//! maps act identically on every component (they are linear), so the
//! forward pass is `comps` matrix-vector products sharing one weight
//! matrix; only the value component receives the bias.
//!
//! The nonlinearity is where jets and reverse mode interact. With
//! `s = tanh(v)`, `p = 1 - s^2`, `p' = -2 s p`, `p'' = -2 p^2 + 4 s^2 p`,
//! and pre-activation jet `(v, a_i, b_i)` per axis `i`:
//!
//! forward:  `out = (s, p a_i, p' a_i^2 + p b_i)`
//!
//! backward, given output adjoints `(s^, x1^_i, x2^_i)`:
//!
//! ```text
//! v^   += s^ p + sum_i x1^_i p' a_i + sum_i x2^_i (p'' a_i^2 + p' b_i)
//! a_i^ += x1^_i p + x2^_i 2 p' a_i
//! b_i^ += x2^_i p
//! ```
//!
//! All reductions here are fixed-shape (see [`dot`]), so results are
//! bitwise reproducible.

use std::ops::Range;

use crate::jet::JetPlan;
use crate::params::LayoutBuilder;

/// Dot product with four independent accumulators. The summation tree is a
/// function of the slice length only, which keeps results bitwise stable
/// while letting the compiler vectorize (a single serial chain would not).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let quads = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for q in 0..quads {
        let k = 4 * q;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for k in 4 * quads..n {
        s += a[k] * b[k];
    }
    s
}

/// `y += a * x`, elementwise.
#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One dense affine layer: where its weight `[n_out, n_in]` (row-major) and
/// bias `[n_out]` live in the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Affine {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Range<usize>,
    pub b: Range<usize>,
}

impl Affine {
    /// Register weight and bias in a layout under `name.weight` / `name.bias`.
    pub fn register(builder: &mut LayoutBuilder, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = builder.push(format!("{name}.weight"), &[n_out, n_in]);
        let b = builder.push(format!("{name}.bias"), &[n_out]);
        Affine { n_in, n_out, w, b }
    }

    /// `y[c] = W x[c] (+ b for the value component)`.
    pub fn forward(&self, theta: &[f64], comps: usize, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), comps * self.n_in);
        debug_assert_eq!(y.len(), comps * self.n_out);
        let w = &theta[self.w.clone()];
        let b = &theta[self.b.clone()];
        for c in 0..comps {
            let xc = &x[c * self.n_in..(c + 1) * self.n_in];
            let yc = &mut y[c * self.n_out..(c + 1) * self.n_out];
            for j in 0..self.n_out {
                let row = &w[j * self.n_in..(j + 1) * self.n_in];
                let base = if c == 0 { b[j] } else { 0.0 };
                yc[j] = base + dot(row, xc);
            }
        }
    }

    /// Reverse pass. Accumulates `x_adj[c] += W^T y_adj[c]`,
    /// `gw += sum_c y_adj[c] (x[c])^T`, `gb += y_adj[value]`.
    /// Pass `x_adj = None` when the input is a network input whose adjoint
    /// nobody consumes (saves the largest GEMV at the first layer).
    pub fn backward(
        &self,
        theta: &[f64],
        comps: usize,
        x: &[f64],
        y_adj: &[f64],
        mut x_adj: Option<&mut [f64]>,
        grad: &mut [f64],
    ) {
        debug_assert_eq!(x.len(), comps * self.n_in);
        debug_assert_eq!(y_adj.len(), comps * self.n_out);
        let w_range = self.w.clone();
        let b_range = self.b.clone();
        for c in 0..comps {
            let xc = &x[c * self.n_in..(c + 1) * self.n_in];
            let yac = &y_adj[c * self.n_out..(c + 1) * self.n_out];
            if let Some(x_adj) = x_adj.as_deref_mut() {
                let xac = &mut x_adj[c * self.n_in..(c + 1) * self.n_in];
                let w = &theta[w_range.clone()];
                for j in 0..self.n_out {
                    let row = &w[j * self.n_in..(j + 1) * self.n_in];
                    axpy(xac, yac[j], row);
                }
            }
            let gw = &mut grad[w_range.clone()];
            for j in 0..self.n_out {
                let grow = &mut gw[j * self.n_in..(j + 1) * self.n_in];
                axpy(grow, yac[j], xc);
            }
        }
        let gb = &mut grad[b_range];
        for j in 0..self.n_out {
            gb[j] += y_adj[j]; // value component only
        }
    }
}

/// Elementwise tanh on a jet buffer.
pub fn tanh_forward(n: usize, plan: JetPlan, pre: &[f64], post: &mut [f64]) {
    let comps = plan.comps();
    debug_assert_eq!(pre.len(), comps * n);
    debug_assert_eq!(post.len(), comps * n);
    for j in 0..n {
        let s = pre[j].tanh();
        post[j] = s;
        let p = 1.0 - s * s;
        let pd = -2.0 * s * p;
        for (slot, _) in plan.d1_slots() {
            post[slot * n + j] = p * pre[slot * n + j];
        }
        for (slot2, slot1, _) in plan.d2_slots() {
            let a = pre[slot1 * n + j];
            let b = pre[slot2 * n + j];
            post[slot2 * n + j] = pd * a * a + p * b;
        }
    }
}

/// Reverse pass of [`tanh_forward`]; accumulates into `pre_adj`.
/// `post` must hold the forward output (its value component caches `s`).
pub fn tanh_backward(
    n: usize,
    plan: JetPlan,
    pre: &[f64],
    post: &[f64],
    post_adj: &[f64],
    pre_adj: &mut [f64],
) {
    let comps = plan.comps();
    debug_assert_eq!(pre.len(), comps * n);
    debug_assert_eq!(post_adj.len(), comps * n);
    debug_assert_eq!(pre_adj.len(), comps * n);
    for j in 0..n {
        let s = post[j];
        let p = 1.0 - s * s;
        let pd = -2.0 * s * p;
        let pdd = -2.0 * p * p + 4.0 * s * s * p;
        let mut v_hat = post_adj[j] * p;
        for (slot, _) in plan.d1_slots() {
            let a = pre[slot * n + j];
            let x1_hat = post_adj[slot * n + j];
            v_hat += x1_hat * pd * a;
            pre_adj[slot * n + j] += x1_hat * p;
        }
        for (slot2, slot1, _) in plan.d2_slots() {
            let a = pre[slot1 * n + j];
            let b = pre[slot2 * n + j];
            let x2_hat = post_adj[slot2 * n + j];
            v_hat += x2_hat * (pdd * a * a + pd * b);
            pre_adj[slot1 * n + j] += x2_hat * 2.0 * pd * a;
            pre_adj[slot2 * n + j] += x2_hat * p;
        }
        pre_adj[j] += v_hat;
    }
}

/// Seed an input jet buffer for evaluation point `x` under `plan`:
/// coordinate `k` gets value `x[k]`, `d1` seed 1 on its own axis, `d2` 0.
pub fn seed_input(plan: JetPlan, x: &[f64], buf: &mut [f64]) {
    let dim = plan.dim();
    let n = x.len();
    debug_assert_eq!(n, dim);
    debug_assert_eq!(buf.len(), plan.comps() * n);
    buf.fill(0.0);
    buf[..n].copy_from_slice(x);
    for (slot, axis) in plan.d1_slots() {
        buf[slot * n + axis] = 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Dual2;

    /// One affine layer + tanh, jets vs the scalar Dual2 algebra.
    #[test]
    fn layer_jets_match_dual2() {
        let plan = JetPlan::full(2);
        let comps = plan.comps();
        let (n_in, n_out) = (2, 3);
        let mut b = crate::params::ParamLayout::builder();
        let layer = Affine::register(&mut b, "l", n_in, n_out);
        let layout = b.finish();
        let theta: Vec<f64> = (0..layout.len()).map(|i| 0.3 * (i as f64) - 0.7).collect();

        let x = [0.4, -0.2];
        let mut xb = vec![0.0; comps * n_in];
        seed_input(plan, &x, &mut xb);
        let mut pre = vec![0.0; comps * n_out];
        layer.forward(&theta, comps, &xb, &mut pre);
        let mut post = vec![0.0; comps * n_out];
        tanh_forward(n_out, plan, &pre, &mut post);

        let w = &theta[layer.w.clone()];
        let bias = &theta[layer.b.clone()];
        let vars = Dual2::vars(&x);
        for j in 0..n_out {
            let mut acc = Dual2::constant(2, bias[j]);
            for k in 0..n_in {
                acc = acc + vars[k] * w[j * n_in + k];
            }
            let want = acc.tanh();
            let got_v = post[j];
            assert!((got_v - want.v).abs() < 1e-15);
            for axis in 0..2 {
                let g1 = post[plan.d1_slot(axis).unwrap() * n_out + j];
                let g2 = post[plan.d2_slot(axis).unwrap() * n_out + j];
                assert!((g1 - want.d1[axis]).abs() < 1e-14, "d1 axis {axis}");
                assert!((g2 - want.d2[axis]).abs() < 1e-14, "d2 axis {axis}");
            }
        }
    }

    /// Backward pass against central finite differences of a scalar formed
    /// from all output jet components with fixed random-ish seeds.
    #[test]
    fn layer_backward_matches_fd() {
        let plan = JetPlan::full(2);
        let comps = plan.comps();
        let (n_in, n_out) = (2, 3);
        let mut b = crate::params::ParamLayout::builder();
        let layer = Affine::register(&mut b, "l", n_in, n_out);
        let layout = b.finish();
        let theta0: Vec<f64> = (0..layout.len())
            .map(|i| ((i * 37 + 11) % 19) as f64 / 19.0 - 0.5)
            .collect();
        let x = [0.3, 0.9];
        let seeds: Vec<f64> = (0..comps * n_out)
            .map(|i| ((i * 29 + 5) % 13) as f64 / 13.0 - 0.4)
            .collect();

        let eval = |theta: &[f64]| -> f64 {
            let mut xb = vec![0.0; comps * n_in];
            seed_input(plan, &x, &mut xb);
            let mut pre = vec![0.0; comps * n_out];
            layer.forward(theta, comps, &xb, &mut pre);
            let mut post = vec![0.0; comps * n_out];
            tanh_forward(n_out, plan, &pre, &mut post);
            dot(&post, &seeds)
        };

        // analytic gradient
        let mut xb = vec![0.0; comps * n_in];
        seed_input(plan, &x, &mut xb);
        let mut pre = vec![0.0; comps * n_out];
        layer.forward(&theta0, comps, &xb, &mut pre);
        let mut post = vec![0.0; comps * n_out];
        tanh_forward(n_out, plan, &pre, &mut post);
        let mut pre_adj = vec![0.0; comps * n_out];
        tanh_backward(n_out, plan, &pre, &post, &seeds, &mut pre_adj);
        let mut grad = vec![0.0; layout.len()];
        layer.backward(&theta0, comps, &xb, &pre_adj, None, &mut grad);

        let h = 1e-6;
        for k in 0..layout.len() {
            let mut tp = theta0.clone();
            tp[k] += h;
            let mut tm = theta0.clone();
            tm[k] -= h;
            let fd = (eval(&tp) - eval(&tm)) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() < 1e-7 * grad[k].abs().max(1.0),
                "param {k}: fd {fd} vs ad {}",
                grad[k]
            );
        }
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..7).map(|i| (i + 1) as f64).collect();
        let want: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot(&a, &b), want);
    }
}
