use serde::{Deserialize, Serialize};

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::math::RngStream;
use crate::net::model::{DenseNet, Gradients};

/// Mini-batch SGD settings. `beta` weights the confidence penalty; zero gives
/// plain NLL training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 40,
            batch_size: 32,
            beta: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid_config("learning_rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid_config("epochs and batch_size must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid_config("beta must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: DenseNet,
    /// Mean per-example loss of each epoch, measured on the passes used for
    /// the updates.
    pub loss_history: Vec<f64>,
}

/// Train with one stochastic pass per example per step. Each example gets a
/// fresh noise draw for every layer. Gradients are averaged over the batch.
pub fn train(mut model: DenseNet, data: &LabeledSet, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid_input("training set is empty"));
    }
    if data.dim() != model.input_dim() || data.classes() != model.classes() {
        return Err(Error::invalid_input(format!(
            "data ({} features, {} classes) does not fit a {}-input {}-class network",
            data.dim(),
            data.classes(),
            model.input_dim(),
            model.classes()
        )));
    }
    let mut rng = RngStream::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let order = rng.permutation(data.len());
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&model);
            let mut batch_loss = 0.0;
            for &i in batch {
                let noise = model.sample_noise(&mut rng);
                let (loss, g) = model.loss_and_gradient(data.row(i), data.label(i), cfg.beta, &noise)?;
                batch_loss += loss;
                grads.accumulate(&g);
            }
            if !batch_loss.is_finite() || !grads.max_abs().is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    step,
                    loss: batch_loss,
                });
            }
            grads.average(batch.len());
            model.apply_update(&grads, cfg.learning_rate);
            epoch_loss += batch_loss;
            step += 1;
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok(Trained {
        model,
        loss_history: history,
    })
}

/// Fraction of examples whose expected-value prediction is correct.
pub fn deterministic_accuracy(model: &DenseNet, data: &LabeledSet) -> Result<f64> {
    let mut hits = 0usize;
    for (x, y) in data.rows() {
        if crate::math::argmax(&model.forward_mean(x)?) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
