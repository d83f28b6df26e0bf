//! Bias-corrected Adam. First-order baseline optimizer and warmup phase
//! before L-BFGS; nothing exotic, but written out so the update is pinned
//! by tests instead of imported behavior.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    p: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, p: AdamParams) -> Self {
        Adam {
            p,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update in place:
    /// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
    /// `θ ← θ − lr·m̂/(√v̂ + ε)` with the standard bias corrections.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.p.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.p.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.p.beta1 * self.m[i] + (1.0 - self.p.beta1) * grad[i];
            self.v[i] = self.p.beta2 * self.v[i] + (1.0 - self.p.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= self.p.lr * mh / (vh.sqrt() + self.p.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_fixed_while_moments_decay() {
        let mut adam = Adam::new(2, AdamParams::default());
        let mut th = [1.0, -2.0];
        adam.step(&mut th, &[1.0, 1.0]);
        let after_first = th;
        let m_before = adam.m.clone();
        adam.step(&mut th, &[0.0, 0.0]);
        // m̂ = β₁m/(1−β₁²) is nonzero for one more step, so parameters may
        // still drift; what must hold is moment decay toward zero
        assert!(adam.m[0].abs() < m_before[0].abs());
        adam.m = vec![0.0; 2];
        adam.v = vec![0.0; 2];
        let frozen = th;
        adam.step(&mut th, &[0.0, 0.0]);
        assert_eq!(th, frozen, "zero gradient and zero moments: no movement");
        let _ = after_first;
    }

    #[test]
    fn first_step_size_is_lr_times_unit_direction() {
        // after one step m̂ = g and v̂ = g², so the update is exactly
        // lr·g/(|g| + ε) — effectively lr in magnitude
        let p = AdamParams {
            lr: 0.05,
            ..AdamParams::default()
        };
        let mut adam = Adam::new(1, p);
        let mut th = [0.0];
        adam.step(&mut th, &[3.0]);
        let want = -0.05 * 3.0 / (3.0 + 1e-8);
        assert!((th[0] - want).abs() < 1e-15);
    }

    #[test]
    fn three_step_trace_matches_independent_computation() {
        // frozen from an out-of-band implementation of the same recurrence
        let p = AdamParams {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut adam = Adam::new(2, p);
        let mut th = [0.0, 0.0];
        let grads = [[1.0, -2.0], [0.5, 1.0], [2.0, 0.0]];
        let want = [
            [-0.09999999900000002, 0.099999999500000006],
            [-0.19321796170183891, 0.12663370329756846],
            [-0.28412659732116341, 0.1472216334965584],
        ];
        for (g, w) in grads.iter().zip(want) {
            adam.step(&mut th, g);
            assert!((th[0] - w[0]).abs() < 1e-15, "{} vs {}", th[0], w[0]);
            assert!((th[1] - w[1]).abs() < 1e-15, "{} vs {}", th[1], w[1]);
        }
    }
}
