//! Feed-forward trunk with three scalar heads: conversion logit, lognormal
//! location and pre-softplus scale.
//!
//! All weights live in one flat vector. Each layer stores its weight matrix
//! (out x in, row-major) followed by its bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADS: usize = 3;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x * logistic(x)`; smooth, so finite differences behave.
    #[default]
    Silu,
    Relu,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silu" => Ok(Activation::Silu),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::InvalidConfig(format!("unknown activation '{s}'"))),
        }
    }
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z * logistic(z),
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = logistic(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionTriple {
    pub p_c: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Largest conversion probability, so `ln(1 - p)` stays finite for saturated logits.
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

impl PredictionTriple {
    pub fn from_heads(z: [f64; HEADS], sigma_floor: f64) -> Self {
        Self {
            p_c: logistic(z[0]).min(P_MAX),
            mu: z[1],
            sigma: softplus(z[2]) + sigma_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    customer_dim: usize,
    fund_dim: usize,
    /// Layer widths from input to the head layer inclusive.
    widths: Vec<usize>,
    activation: Activation,
    sigma_floor: f64,
    params: Vec<f64>,
}

impl PredictorModel {
    /// All-zero parameters.
    pub fn zeros(
        customer_dim: usize,
        fund_dim: usize,
        hidden: &[usize],
        activation: Activation,
        sigma_floor: f64,
    ) -> Result<Self> {
        if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma floor must be positive, got {sigma_floor}"
            )));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(customer_dim + fund_dim);
        widths.extend_from_slice(hidden);
        widths.push(HEADS);
        let n = widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self {
            customer_dim,
            fund_dim,
            widths,
            activation,
            sigma_floor,
            params: vec![0.0; n],
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn initialized(
        customer_dim: usize,
        fund_dim: usize,
        hidden: &[usize],
        activation: Activation,
        sigma_floor: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(customer_dim, fund_dim, hidden, activation, sigma_floor)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for w in model.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for p in &mut model.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += fan_out * (fan_in + 1);
        }
        Ok(model)
    }

    pub fn customer_dim(&self) -> usize {
        self.customer_dim
    }

    pub fn fund_dim(&self) -> usize {
        self.fund_dim
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn hidden(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Biases of the head layer: conversion logit, location, scale.
    pub fn head_bias_mut(&mut self) -> &mut [f64] {
        let n = self.params.len();
        &mut self.params[n - HEADS..]
    }

    pub fn forward(&self, x_u: &[f64], x_f: &[f64]) -> Result<PredictionTriple> {
        if x_u.len() != self.customer_dim || x_f.len() != self.fund_dim {
            return Err(Error::DimMismatch(format!(
                "model expects {} customer and {} fund features, got {} and {}",
                self.customer_dim,
                self.fund_dim,
                x_u.len(),
                x_f.len()
            )));
        }
        let mut scratch = Scratch::new(self);
        scratch.load(x_u, x_f);
        Ok(PredictionTriple::from_heads(
            self.run(&mut scratch),
            self.sigma_floor,
        ))
    }

    /// Forward pass on the input already loaded into `scratch`; keeps every
    /// pre-activation for a later [`backward`](Self::backward).
    pub(crate) fn run(&self, s: &mut Scratch) -> [f64; HEADS] {
        let last = self.widths.len() - 2;
        let mut offset = 0;
        for l in 0..=last {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[offset..offset + n_out * n_in];
            let b = &self.params[offset + n_out * n_in..offset + n_out * (n_in + 1)];
            let (before, after) = s.acts.split_at_mut(l + 1);
            let input = &before[l];
            let z = &mut s.pre[l];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                z[o] = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l < last {
                for (a, &zv) in after[0].iter_mut().zip(z.iter()) {
                    *a = self.activation.apply(zv);
                }
            }
            offset += n_out * (n_in + 1);
        }
        let z = &s.pre[last];
        [z[0], z[1], z[2]]
    }

    /// Add `d(loss)/d(params)` to `grad`, given the loss derivative at the
    /// heads for the pass stored in `scratch`.
    pub(crate) fn backward(&self, s: &mut Scratch, d_heads: [f64; HEADS], grad: &mut [f64]) {
        let last = self.widths.len() - 2;
        s.delta[last].copy_from_slice(&d_heads);
        let mut offset = self.params.len();
        for l in (0..=last).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            offset -= n_out * (n_in + 1);
            let input = &s.acts[l];
            let (lower, upper) = s.delta.split_at_mut(l);
            let delta = &upper[0];
            let gw = &mut grad[offset..offset + n_out * n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (g, &a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            let gb = &mut grad[offset + n_out * n_in..offset + n_out * (n_in + 1)];
            for (g, &d) in gb.iter_mut().zip(delta) {
                *g += d;
            }
            if l > 0 {
                let w = &self.params[offset..offset + n_out * n_in];
                let prev = &mut lower[l - 1];
                prev.fill(0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, &wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wv;
                    }
                }
                for (p, &z) in prev.iter_mut().zip(&s.pre[l - 1]) {
                    *p *= self.activation.derivative(z);
                }
            }
        }
    }
}

/// Per-thread buffers for one forward/backward pass.
pub(crate) struct Scratch {
    /// `acts[0]` is the input; `acts[l]` the output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Scratch {
    pub(crate) fn new(model: &PredictorModel) -> Self {
        let w = &model.widths;
        Self {
            acts: w[..w.len() - 1].iter().map(|&n| vec![0.0; n]).collect(),
            pre: w[1..].iter().map(|&n| vec![0.0; n]).collect(),
            delta: w[1..].iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub(crate) fn load(&mut self, x_u: &[f64], x_f: &[f64]) {
        let input = &mut self.acts[0];
        input[..x_u.len()].copy_from_slice(x_u);
        input[x_u.len()..].copy_from_slice(x_f);
    }
}
