use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::RngStream;

/// Fully-connected layer whose input is subject to dropout at rate `dropout`.
///
/// Weights are stored output-major: `weights[k * inputs + j]` connects input
/// `j` to output `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    dropout: f64,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>, dropout: f64) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid_config("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::invalid_config(format!(
                "layer {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        check_rate(dropout)?;
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid_config("layer parameters must be finite"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            dropout,
        })
    }

    /// He-normal weights, zero bias.
    pub fn he_init(inputs: usize, outputs: usize, dropout: f64, rng: &mut RngStream) -> Result<Self> {
        let scale = (2.0 / inputs.max(1) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.next_normal() * scale).collect();
        Self::new(inputs, outputs, weights, vec![0.0; outputs], dropout)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `p / (1 - p)`, the variance factor of the implied Gaussian.
    pub fn noise_ratio(&self) -> f64 {
        self.dropout / (1.0 - self.dropout)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs {
            return Err(Error::invalid_input(format!(
                "layer expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("layer input is not finite"));
        }
        Ok(())
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.inputs..(k + 1) * self.inputs]
    }

    /// Pre-activation mean `Σ_j w_kj x_j + b_k`.
    pub fn mean(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs).map(|k| dot(self.row(k), x) + self.bias[k]).collect()
    }

    /// Pre-activation variance `p/(1-p) Σ_j w_kj² x_j²`. The bias does not
    /// enter.
    pub fn variance(&self, x: &[f64]) -> Vec<f64> {
        let r = self.noise_ratio();
        (0..self.outputs)
            .map(|k| r * self.row(k).iter().zip(x).map(|(w, v)| w * w * v * v).sum::<f64>())
            .collect()
    }

    /// One Gaussian-dropout draw `μ + σ ε`. A layer with rate 0 consumes no
    /// random numbers.
    pub fn gaussian_dropout_forward(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.outputs];
        let mut sigma = vec![0.0; self.outputs];
        let eps = if self.dropout > 0.0 {
            rng.standard_normal(self.outputs)
        } else {
            vec![0.0; self.outputs]
        };
        self.forward_with_eps(x, &eps, &mut out, &mut sigma);
        Ok(out)
    }

    /// Fills `out` with `μ + σ ε` and `sigma` with σ.
    pub(crate) fn forward_with_eps(&self, x: &[f64], eps: &[f64], out: &mut [f64], sigma: &mut [f64]) {
        let r = self.noise_ratio();
        for k in 0..self.outputs {
            let row = self.row(k);
            let mut mu = 0.0;
            let mut s2 = 0.0;
            for (w, v) in row.iter().zip(x) {
                mu += w * v;
                s2 += w * w * v * v;
            }
            mu += self.bias[k];
            let s = (r * s2).sqrt();
            sigma[k] = s;
            out[k] = if s > 0.0 { mu + s * eps[k] } else { mu };
        }
    }

    /// Classic inverted Bernoulli dropout on the input, followed by the affine
    /// map. Used as the reference the Gaussian approximation is checked against.
    pub fn bernoulli_dropout_forward(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let keep = 1.0 - self.dropout;
        let dropped: Vec<f64> = x
            .iter()
            .map(|&v| if rng.uniform() < keep { v / keep } else { 0.0 })
            .collect();
        Ok(self.mean(&dropped))
    }
}

pub(crate) fn check_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid_config(format!(
            "dropout rate must lie in [0, 1), got {p}"
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
