//! Minimal dense multilayer perceptron with hand-written backpropagation.
//!
//! Plain SGD, tanh hidden units, and optional sigmoid output squashing.
//! Parameters are addressable by flat index so finite-difference checks and
//! checkpoints can treat a network as one parameter vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// derivative expressed through the activated output y
    fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// row-major, n_out x n_in
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer activations recorded during a forward pass.
pub struct Cache {
    /// input to each layer
    inputs: Vec<Vec<f64>>,
    /// activated output of each layer
    outputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub dw: Vec<Vec<f64>>,
    pub db: Vec<Vec<f64>>,
}

impl Mlp {
    /// Builds a network with tanh hidden layers and the given output
    /// activation. Weights are uniform in +-1/sqrt(fan_in).
    pub fn new(sizes: &[usize], output: Activation, rng: &mut impl Rng) -> Mlp {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut layers = Vec::new();
        for k in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[k], sizes[k + 1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let act = if k == sizes.len() - 2 { output } else { Activation::Tanh };
            layers.push(Layer {
                n_in,
                n_out,
                w: (0..n_in * n_out).map(|_| rng.gen_range(-bound..bound)).collect(),
                b: vec![0.0; n_out],
                act,
            });
        }
        Mlp { layers }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in)
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Cache) {
        assert_eq!(x.len(), self.n_inputs());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            inputs.push(cur.clone());
            let mut out = vec![0.0; layer.n_out];
            for o in 0..layer.n_out {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                let mut z = layer.b[o];
                for (wi, xi) in row.iter().zip(&cur) {
                    z += wi * xi;
                }
                out[o] = layer.act.apply(z);
            }
            outputs.push(out.clone());
            cur = out;
        }
        (cur, Cache { inputs, outputs })
    }

    /// Output without keeping the cache.
    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Accumulates parameter gradients for dL/d(output) and returns
    /// dL/d(input).
    pub fn backward(&self, cache: &Cache, dout: &[f64], grads: &mut Grads) -> Vec<f64> {
        let mut delta = dout.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.outputs[k];
            let x = &cache.inputs[k];
            // through the activation
            let mut dz = vec![0.0; layer.n_out];
            for o in 0..layer.n_out {
                dz[o] = delta[o] * layer.act.deriv_from_output(y[o]);
            }
            // parameter grads
            for o in 0..layer.n_out {
                let drow = &mut grads.dw[k][o * layer.n_in..(o + 1) * layer.n_in];
                for (g, xi) in drow.iter_mut().zip(x) {
                    *g += dz[o] * xi;
                }
                grads.db[k][o] += dz[o];
            }
            // input grads
            let mut dx = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (dxi, wi) in dx.iter_mut().zip(row) {
                    *dxi += dz[o] * wi;
                }
            }
            delta = dx;
        }
        delta
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            dw: self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    /// One plain SGD step: w -= lr * grad.
    pub fn apply_sgd(&mut self, grads: &Grads, lr: f64) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.w.iter_mut().zip(&grads.dw[k]) {
                *w -= lr * g;
            }
            for (b, g) in layer.b.iter_mut().zip(&grads.db[k]) {
                *b -= lr * g;
            }
        }
    }

    /// Soft update toward `source`: self = rate * source + (1 - rate) * self.
    pub fn soft_update_from(&mut self, source: &Mlp, rate: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            for (d, s) in dst.w.iter_mut().zip(&src.w) {
                *d = rate * s + (1.0 - rate) * *d;
            }
            for (d, s) in dst.b.iter_mut().zip(&src.b) {
                *d = rate * s + (1.0 - rate) * *d;
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn get_param(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.w.len() {
                return l.w[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut i: usize, v: f64) {
        for l in &mut self.layers {
            if i < l.w.len() {
                l.w[i] = v;
                return;
            }
            i -= l.w.len();
            if i < l.b.len() {
                l.b[i] = v;
                return;
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range");
    }
}

impl Grads {
    pub fn get_flat(&self, mut i: usize) -> f64 {
        for (dw, db) in self.dw.iter().zip(&self.db) {
            if i < dw.len() {
                return dw[i];
            }
            i -= dw.len();
            if i < db.len() {
                return db[i];
            }
            i -= db.len();
        }
        panic!("gradient index out of range");
    }

    pub fn l2_norm(&self) -> f64 {
        let mut s = 0.0;
        for dw in &self.dw {
            s += dw.iter().map(|g| g * g).sum::<f64>();
        }
        for db in &self.db {
            s += db.iter().map(|g| g * g).sum::<f64>();
        }
        s.sqrt()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}
