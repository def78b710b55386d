//! Dense networks with hand-written backpropagation, Adam and a running
//! observation normaliser.
//!
//! Batches are column-major matrices with one sample per column.

use nalgebra::{DMatrix, DMatrixView, DVectorView};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Elu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    // Derivative from the pre-activation `z` and output `y`.
    fn grad(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected network; hidden layers use `activation`, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values kept by [`Mlp::forward_train`].
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Gaussian initialisation scaled by fan-in; the output layer uses
    /// `out_gain` so that initial outputs can start near zero.
    pub fn new<R: Rng>(sizes: &[usize], activation: Activation, out_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output layer");
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l + 1 == layers { out_gain } else { std::f64::consts::SQRT_2 };
            let std = gain / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(rng);
                params.push(z * std);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            activation,
            params,
        }
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || params.len() != Self::param_count(sizes) {
            return Err(Error::Checkpoint(format!(
                "network of sizes {sizes:?} needs {} parameters, got {}",
                Self::param_count(sizes),
                params.len()
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let start = off;
            off += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    fn layer(&self, start: usize, fan_in: usize, fan_out: usize) -> (DMatrixView<'_, f64>, DVectorView<'_, f64>) {
        let w = DMatrixView::from_slice(&self.params[start..start + fan_in * fan_out], fan_out, fan_in);
        let b_start = start + fan_in * fan_out;
        let b = DVectorView::from_slice(&self.params[b_start..b_start + fan_out], fan_out);
        (w, b)
    }

    fn affine(w: &DMatrixView<'_, f64>, b: &DVectorView<'_, f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = w * x;
        for mut col in z.column_iter_mut() {
            col += b;
        }
        z
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let layers = self.sizes.len() - 1;
        let mut h = x.clone();
        for (l, (start, fi, fo)) in self.offsets().enumerate() {
            let (w, b) = self.layer(start, fi, fo);
            let mut z = Self::affine(&w, &b, &h);
            if l + 1 < layers {
                z.apply(|v| *v = self.activation.apply(*v));
            }
            h = z;
        }
        h
    }

    /// Forward pass for a single sample.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let m = DMatrix::from_column_slice(x.len(), 1, x);
        self.forward(&m).as_slice().to_vec()
    }

    pub fn forward_train(&self, x: &DMatrix<f64>) -> Tape {
        let layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut h = x.clone();
        for (l, (start, fi, fo)) in self.offsets().enumerate() {
            let (w, b) = self.layer(start, fi, fo);
            let z = Self::affine(&w, &b, &h);
            inputs.push(h);
            h = if l + 1 < layers {
                z.map(|v| self.activation.apply(v))
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Tape { inputs, pre, output: h }
    }

    /// Adds the parameter gradient for an upstream gradient `grad_out`
    /// (same shape as the output) into `grads`.
    pub fn backward(&self, tape: &Tape, grad_out: &DMatrix<f64>, grads: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let offsets: Vec<_> = self.offsets().collect();
        let mut delta = grad_out.clone();
        for l in (0..layers).rev() {
            let (start, fi, fo) = offsets[l];
            if l + 1 < layers {
                // Output of layer l is the input of layer l + 1.
                let y = &tape.inputs[l + 1];
                let z = &tape.pre[l];
                delta.zip_zip_apply(z, y, |d, z, y| *d *= self.activation.grad(z, y));
            }
            let gw = &delta * tape.inputs[l].transpose();
            for (g, v) in grads[start..start + fi * fo].iter_mut().zip(gw.as_slice()) {
                *g += v;
            }
            for (r, g) in grads[start + fi * fo..start + fi * fo + fo].iter_mut().enumerate() {
                *g += delta.row(r).sum();
            }
            if l > 0 {
                let (w, _) = self.layer(start, fi, fo);
                delta = w.tr_mul(&delta);
            }
        }
    }
}

/// Scales `grads` so that their L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Per-dimension running mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
}

impl RunningNorm {
    pub fn new(dim: usize, clip: f64) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
            clip,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges the statistics of a batch (one sample per column).
    pub fn update(&mut self, batch: &DMatrix<f64>) {
        let n = batch.ncols() as f64;
        if n == 0.0 {
            return;
        }
        let total = self.count + n;
        for (d, row) in batch.row_iter().enumerate() {
            let bm = row.sum() / n;
            let bv = row.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / n;
            let delta = bm - self.mean[d];
            let m2 = self.var[d] * self.count + bv * n + delta * delta * self.count * n / total;
            self.mean[d] += delta * n / total;
            self.var[d] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.var) {
            *v = ((*v - m) / (s + 1e-8).sqrt()).clamp(-self.clip, self.clip);
        }
    }

    pub fn normalize_batch(&self, batch: &mut DMatrix<f64>) {
        for mut col in batch.column_iter_mut() {
            self.normalize(col.as_mut_slice());
        }
    }
}
