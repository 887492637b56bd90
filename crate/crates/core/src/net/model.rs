use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, RngStream};
use crate::net::layer::DenseLayer;
use crate::scalers::Scaler;

/// Multi-layer perceptron with ReLU hidden activations and identity output.
///
/// Every weight layer samples its pre-activation from the Gaussian implied by
/// dropout on its input. The logits are the last layer's sampled
/// pre-activation; no extra noise is added after them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

/// Per-layer standard-normal draws, one per output unit of each layer.
pub type Noise = Vec<Vec<f64>>;

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l` (after ReLU for `l > 0`).
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    eps: Noise,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("network has layers")
    }
}

/// Gradient with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights().len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.outputs()]).collect(),
        }
    }

    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    fn scale(&mut self, s: f64) {
        self.weights
            .iter_mut()
            .chain(self.bias.iter_mut())
            .flatten()
            .for_each(|v| *v *= s);
    }
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::invalid_config("network needs at least one layer"));
        };
        if last.outputs() < 2 {
            return Err(Error::invalid_config("network must output at least 2 classes"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::invalid_config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// He-initialised network with widths `input, hidden..., classes` and the
    /// same dropout rate on every weight layer.
    pub fn init(input: usize, hidden: &[usize], classes: usize, dropout: f64, rng: &mut RngStream) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::he_init(w[0], w[1], dropout, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights().len() + l.bias().len()).sum()
    }

    /// Fresh noise for one stochastic pass. Layers with rate 0 get zeros and
    /// consume nothing from `rng`.
    pub fn sample_noise(&self, rng: &mut RngStream) -> Noise {
        self.layers
            .iter()
            .map(|l| {
                if l.dropout() > 0.0 {
                    rng.standard_normal(l.outputs())
                } else {
                    vec![0.0; l.outputs()]
                }
            })
            .collect()
    }

    /// Forward pass with explicit noise. Zero noise gives the expected-value
    /// (deterministic) pass.
    pub fn forward_with_noise(&self, x: &[f64], noise: &[Vec<f64>]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid_input(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("network input is not finite"));
        }
        if noise.len() != self.layers.len() || noise.iter().zip(&self.layers).any(|(e, l)| e.len() != l.outputs()) {
            return Err(Error::invalid_input("noise shape does not match the network"));
        }
        let depth = self.layers.len();
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut sigma = Vec::with_capacity(depth);
        let mut current = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = vec![0.0; layer.outputs()];
            let mut s = vec![0.0; layer.outputs()];
            layer.forward_with_eps(&current, &noise[l], &mut y, &mut s);
            inputs.push(current);
            current = if l + 1 < depth {
                y.iter().map(|v| v.max(0.0)).collect()
            } else {
                Vec::new()
            };
            pre.push(y);
            sigma.push(s);
        }
        Ok(ForwardCache {
            inputs,
            pre,
            sigma,
            eps: noise.to_vec(),
        })
    }

    /// One stochastic pass.
    pub fn forward(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        let noise = self.sample_noise(rng);
        Ok(self.forward_with_noise(x, &noise)?.pre.pop().unwrap())
    }

    /// Expected-value pass with all noise set to zero. For debugging.
    pub fn forward_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let noise: Noise = self.layers.iter().map(|l| vec![0.0; l.outputs()]).collect();
        Ok(self.forward_with_noise(x, &noise)?.pre.pop().unwrap())
    }

    /// Backpropagate `d_logits` through a cached pass. The gradient flows through
    /// both the mean and the standard deviation of each sampled
    /// pre-activation.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64]) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        let mut d_pre = d_logits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x = &cache.inputs[l];
            let ratio = layer.noise_ratio();
            let (n_in, n_out) = (layer.inputs(), layer.outputs());
            let w = layer.weights();
            let mut d_x = vec![0.0; n_in];
            for k in 0..n_out {
                let g = d_pre[k];
                let s = cache.sigma[l][k];
                // ∂σ/∂(w_kj x_j) contribution; σ = 0 is treated as a flat point
                let c = if s > 0.0 { g * cache.eps[l][k] * ratio / s } else { 0.0 };
                grads.bias[l][k] = g;
                let row = &w[k * n_in..(k + 1) * n_in];
                let g_row = &mut grads.weights[l][k * n_in..(k + 1) * n_in];
                for j in 0..n_in {
                    let xj = x[j];
                    g_row[j] = g * xj + c * row[j] * xj * xj;
                    d_x[j] += g * row[j] + c * row[j] * row[j] * xj;
                }
            }
            if l > 0 {
                let prev = &cache.pre[l - 1];
                d_pre = d_x
                    .iter()
                    .zip(prev)
                    .map(|(d, &y)| if y > 0.0 { *d } else { 0.0 })
                    .collect();
            }
        }
        grads
    }

    /// Loss and parameter gradient of one example under fixed noise.
    pub fn loss_and_gradient(
        &self,
        x: &[f64],
        label: usize,
        beta: f64,
        noise: &[Vec<f64>],
    ) -> Result<(f64, Gradients)> {
        let cache = self.forward_with_noise(x, noise)?;
        let (loss, d_logits) = penalized_nll(cache.logits(), label, beta)?;
        Ok((loss, self.backward(&cache, &d_logits)))
    }

    pub fn loss(&self, x: &[f64], label: usize, beta: f64, noise: &[Vec<f64>]) -> Result<f64> {
        let cache = self.forward_with_noise(x, noise)?;
        Ok(penalized_nll(cache.logits(), label, beta)?.0)
    }

    pub(crate) fn apply_update(&mut self, grads: &Gradients, step: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer
                .weights_mut()
                .iter_mut()
                .zip(&grads.weights[l])
                .for_each(|(w, g)| *w -= step * g);
            layer
                .bias_mut()
                .iter_mut()
                .zip(&grads.bias[l])
                .for_each(|(b, g)| *b -= step * g);
        }
    }

    /// Mutable view for finite-difference checks: (layer, is_bias, index).
    pub fn parameter_mut(&mut self, layer: usize, bias: bool, index: usize) -> &mut f64 {
        let l = &mut self.layers[layer];
        if bias {
            &mut l.bias_mut()[index]
        } else {
            &mut l.weights_mut()[index]
        }
    }

    /// `N` stochastic passes for one input.
    pub fn mc_forward(&self, x: &[f64], samples: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        if samples == 0 {
            return Err(Error::invalid_input("need at least one MC sample"));
        }
        (0..samples).map(|_| self.forward(x, rng)).collect()
    }

    /// MC-integrated probability vector `(1/N) Σ softmax(scaler(z_i))`.
    pub fn mc_predict(
        &self,
        x: &[f64],
        samples: usize,
        scaler: Option<&Scaler>,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let passes = self.mc_forward(x, samples, rng)?;
        Ok(mc_integrate(passes.iter().map(Vec::as_slice), scaler, self.classes()))
    }
}

/// Average of per-pass softmaxes, optionally after a scaler.
pub fn mc_integrate<'a>(
    passes: impl IntoIterator<Item = &'a [f64]>,
    scaler: Option<&Scaler>,
    classes: usize,
) -> Vec<f64> {
    let mut acc = vec![0.0; classes];
    let mut p = vec![0.0; classes];
    let mut count = 0usize;
    for z in passes {
        match scaler {
            Some(s) => math::softmax_into(&s.apply(z), &mut p),
            None => math::softmax_into(z, &mut p),
        }
        acc.iter_mut().zip(&p).for_each(|(a, v)| *a += v);
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

/// `−log p_y − β H(p)` for `p = softmax(z)` and its gradient in `z`.
pub fn penalized_nll(z: &[f64], label: usize, beta: f64) -> Result<(f64, Vec<f64>)> {
    if label >= z.len() {
        return Err(Error::invalid_input(format!(
            "label {label} out of range for {} classes",
            z.len()
        )));
    }
    let mut log_p = vec![0.0; z.len()];
    math::log_softmax_into(z, &mut log_p);
    let p: Vec<f64> = log_p.iter().map(|v| v.exp()).collect();
    let h: f64 = -p.iter().zip(&log_p).map(|(a, b)| a * b).sum::<f64>();
    let loss = -log_p[label] - beta * h;
    // ∂H/∂z_k = −p_k (log p_k + H)
    let grad = p
        .iter()
        .zip(&log_p)
        .enumerate()
        .map(|(k, (&pk, &lk))| {
            let onehot = if k == label { 1.0 } else { 0.0 };
            pk - onehot + beta * pk * (lk + h)
        })
        .collect();
    Ok((loss, grad))
}

impl Gradients {
    pub(crate) fn accumulate(&mut self, other: &Gradients) {
        self.add_scaled(other, 1.0);
    }

    pub(crate) fn average(&mut self, count: usize) {
        self.scale(1.0 / count as f64);
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.bias)
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}
