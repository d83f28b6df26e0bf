//! Plain fully connected network, the vanilla PINN baseline.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{seed_input, tanh_backward, tanh_forward, Affine};
use crate::error::{Error, Result};
use crate::jet::JetPlan;
use crate::model::{check_input, Model};
use crate::params::{glorot_limit, FlatParams, ParamLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Kept for configuration completeness; jets require smoothness, so any
    /// derivative-carrying plan on a ReLU network is rejected.
    Relu,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Number of affine layers; the activation sits between consecutive
    /// ones, so `layers = 4` means three hidden activations.
    pub layers: usize,
    pub hidden: usize,
    pub activation: Activation,
}

impl MlpConfig {
    pub fn new(input_dim: usize, output_dim: usize, layers: usize, hidden: usize) -> Self {
        MlpConfig {
            input_dim,
            output_dim,
            layers,
            hidden,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    cfg: MlpConfig,
    layout: Arc<ParamLayout>,
    layers: Vec<Affine>,
}

impl Mlp {
    pub fn new(cfg: MlpConfig) -> Result<Self> {
        if cfg.input_dim == 0 || cfg.output_dim == 0 || cfg.layers == 0 {
            return Err(Error::config("mlp dimensions must be positive"));
        }
        if cfg.layers > 1 && cfg.hidden == 0 {
            return Err(Error::config("mlp hidden width must be positive"));
        }
        let mut b = ParamLayout::builder();
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let n_in = if l == 0 { cfg.input_dim } else { cfg.hidden };
            let n_out = if l + 1 == cfg.layers {
                cfg.output_dim
            } else {
                cfg.hidden
            };
            layers.push(Affine::register(&mut b, &format!("layer{l}"), n_in, n_out));
        }
        Ok(Mlp {
            cfg,
            layout: b.finish(),
            layers,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    /// Glorot-uniform weights, zero biases, drawn in layout order.
    pub fn init_params(&self, seed: u64) -> FlatParams {
        let mut p = FlatParams::zeros(self.layout.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &self.layers {
            let limit = glorot_limit(layer.n_in, layer.n_out);
            for w in &mut p.values_mut()[layer.w.clone()] {
                *w = (2.0 * rng.gen::<f64>() - 1.0) * limit;
            }
            // biases stay zero
        }
        p
    }

    fn act_is_smooth(&self) -> bool {
        matches!(self.cfg.activation, Activation::Tanh)
    }

    /// Forward under `plan`, returning every intermediate buffer
    /// (input, then pre/post per activation, ending with the output).
    fn run_forward(&self, theta: &[f64], plan: JetPlan, x: &[f64]) -> Vec<Vec<f64>> {
        let comps = plan.comps();
        let mut bufs = Vec::with_capacity(2 * self.layers.len() + 1);
        let mut input = vec![0.0; comps * self.cfg.input_dim];
        seed_input(plan, x, &mut input);
        bufs.push(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = vec![0.0; comps * layer.n_out];
            layer.forward(theta, comps, bufs.last().unwrap(), &mut pre);
            let last = l + 1 == self.layers.len();
            if last {
                bufs.push(pre);
            } else {
                let mut post = vec![0.0; comps * layer.n_out];
                match self.cfg.activation {
                    Activation::Tanh => tanh_forward(layer.n_out, plan, &pre, &mut post),
                    Activation::Relu => {
                        debug_assert_eq!(comps, 1);
                        for j in 0..layer.n_out {
                            post[j] = pre[j].max(0.0);
                        }
                    }
                }
                bufs.push(pre);
                bufs.push(post);
            }
        }
        bufs
    }

    /// Reverse pass over the buffers from [`Mlp::run_forward`].
    fn run_backward(
        &self,
        theta: &[f64],
        plan: JetPlan,
        bufs: &[Vec<f64>],
        out_adj: Vec<f64>,
        grad: &mut [f64],
    ) {
        let comps = plan.comps();
        let mut upstream = out_adj;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let first = l == 0;
            let input_idx = if l == 0 { 0 } else { 2 * l };
            let input = &bufs[input_idx];
            let mut input_adj = if first {
                None
            } else {
                Some(vec![0.0; comps * layer.n_in])
            };
            layer.backward(
                theta,
                comps,
                input,
                &upstream,
                input_adj.as_deref_mut(),
                grad,
            );
            if let Some(post_adj) = input_adj {
                // walk the activation: bufs[2l-1] = pre, bufs[2l] = post
                let pre = &bufs[2 * l - 1];
                let post = &bufs[2 * l];
                let n = layer.n_in;
                let mut pre_adj = vec![0.0; comps * n];
                match self.cfg.activation {
                    Activation::Tanh => {
                        tanh_backward(n, plan, pre, post, &post_adj, &mut pre_adj)
                    }
                    Activation::Relu => {
                        debug_assert_eq!(comps, 1);
                        for j in 0..n {
                            pre_adj[j] = if pre[j] > 0.0 { post_adj[j] } else { 0.0 };
                        }
                    }
                }
                upstream = pre_adj;
            }
        }
    }

    /// Naive first-order reference path: per-neuron loops, serial sums,
    /// no shared kernels. Exists to cross-check the jet engine; also serves
    /// as the independent forward implementation (its values are computed
    /// from scratch). Returns `(values, d1)` with `d1[ch * dim + axis]`.
    pub fn reference_jet1(&self, params: &FlatParams, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_input(self, x)?;
        let dim = self.cfg.input_dim;
        let theta = params.values();
        let mut vals: Vec<f64> = x.to_vec();
        // d_by_neuron[k][a] = d(neuron k)/d(x_a); identity at the input
        let mut d_by_neuron: Vec<Vec<f64>> = (0..dim)
            .map(|k| {
                let mut d = vec![0.0; dim];
                d[k] = 1.0;
                d
            })
            .collect();
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &theta[layer.w.clone()];
            let b = &theta[layer.b.clone()];
            let mut nv = vec![0.0; layer.n_out];
            let mut nd = vec![vec![0.0; dim]; layer.n_out];
            for j in 0..layer.n_out {
                let mut acc = b[j];
                let mut dacc = vec![0.0; dim];
                for k in 0..layer.n_in {
                    let wjk = w[j * layer.n_in + k];
                    acc += wjk * vals[k];
                    for a in 0..dim {
                        dacc[a] += wjk * d_by_neuron[k][a];
                    }
                }
                if l + 1 < self.layers.len() {
                    match self.cfg.activation {
                        Activation::Tanh => {
                            let s = acc.tanh();
                            let p = 1.0 - s * s;
                            nv[j] = s;
                            for a in 0..dim {
                                nd[j][a] = p * dacc[a];
                            }
                        }
                        Activation::Relu => {
                            nv[j] = acc.max(0.0);
                            let p = if acc > 0.0 { 1.0 } else { 0.0 };
                            for a in 0..dim {
                                nd[j][a] = p * dacc[a];
                            }
                        }
                    }
                } else {
                    nv[j] = acc;
                    nd[j] = dacc;
                }
            }
            vals = nv;
            d_by_neuron = nd;
        }
        let mut d1 = vec![0.0; self.cfg.output_dim * dim];
        for ch in 0..self.cfg.output_dim {
            d1[ch * dim..(ch + 1) * dim].copy_from_slice(&d_by_neuron[ch]);
        }
        Ok((vals, d1))
    }
}

impl Model for Mlp {
    fn input_dim(&self) -> usize {
        self.cfg.input_dim
    }

    fn output_dim(&self) -> usize {
        self.cfg.output_dim
    }

    fn layout(&self) -> Arc<ParamLayout> {
        self.layout.clone()
    }

    fn check_plan(&self, plan: JetPlan) -> Result<()> {
        if plan.dim() != self.cfg.input_dim {
            return Err(Error::DimMismatch {
                what: "jet plan dimension",
                expected: self.cfg.input_dim,
                got: plan.dim(),
            });
        }
        if plan.comps() > 1 && !self.act_is_smooth() {
            return Err(Error::UnsupportedPrimitive(
                "relu activation is not twice differentiable".into(),
            ));
        }
        Ok(())
    }

    fn value(&self, params: &FlatParams, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_input(self, x)?;
        let plan = JetPlan::value_only(self.cfg.input_dim);
        let bufs = self.run_forward(params.values(), plan, x);
        out.copy_from_slice(bufs.last().unwrap());
        Ok(())
    }

    fn jet(&self, params: &FlatParams, x: &[f64], plan: JetPlan, out: &mut [f64]) -> Result<()> {
        check_input(self, x)?;
        self.check_plan(plan)?;
        let comps = plan.comps();
        let m = self.cfg.output_dim;
        let bufs = self.run_forward(params.values(), plan, x);
        let last = bufs.last().unwrap();
        for ch in 0..m {
            for c in 0..comps {
                out[ch * comps + c] = last[c * m + ch];
            }
        }
        Ok(())
    }

    fn jet_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        plan: JetPlan,
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        check_input(self, x)?;
        self.check_plan(plan)?;
        let comps = plan.comps();
        let m = self.cfg.output_dim;
        let theta = params.values();
        let bufs = self.run_forward(theta, plan, x);
        let last = bufs.last().unwrap();
        // channel-major view for the seed callback
        let mut jets = vec![0.0; m * comps];
        for ch in 0..m {
            for c in 0..comps {
                jets[ch * comps + c] = last[c * m + ch];
            }
        }
        let mut adj = vec![0.0; m * comps];
        seed(&jets, &mut adj);
        let mut out_adj = vec![0.0; comps * m];
        for ch in 0..m {
            for c in 0..comps {
                out_adj[c * m + ch] = adj[ch * comps + c];
            }
        }
        self.run_backward(theta, plan, &bufs, out_adj, grad);
        Ok(())
    }

    fn value_vjp(
        &self,
        params: &FlatParams,
        x: &[f64],
        seed: &mut dyn FnMut(&[f64], &mut [f64]),
        grad: &mut [f64],
    ) -> Result<()> {
        check_input(self, x)?;
        let plan = JetPlan::value_only(self.cfg.input_dim);
        let theta = params.values();
        let bufs = self.run_forward(theta, plan, x);
        let vals = bufs.last().unwrap().clone();
        let mut adj = vec![0.0; vals.len()];
        seed(&vals, &mut adj);
        self.run_backward(theta, plan, &bufs, adj, grad);
        Ok(())
    }
}
