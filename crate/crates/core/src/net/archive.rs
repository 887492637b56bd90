use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::math::RngStream;
use crate::net::model::DenseNet;

/// `N` stochastic logit vectors per input plus the true labels.
///
/// Logits are stored input-major, sample-second, class-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitArchive {
    inputs: usize,
    samples: usize,
    classes: usize,
    logits: Vec<f64>,
    labels: Vec<u32>,
}

impl LogitArchive {
    pub fn new(samples: usize, classes: usize, logits: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        let inputs = labels.len();
        if inputs == 0 || samples == 0 {
            return Err(Error::invalid_input("archive needs at least one input and one sample"));
        }
        if classes < 2 {
            return Err(Error::invalid_input("archive needs at least 2 classes"));
        }
        if logits.len() != inputs * samples * classes {
            return Err(Error::invalid_input(format!(
                "expected {} logits for n={inputs}, N={samples}, C={classes}, got {}",
                inputs * samples * classes,
                logits.len()
            )));
        }
        if let Some(j) = labels.iter().position(|&y| y as usize >= classes) {
            return Err(Error::invalid_input(format!(
                "label {} of input {j} out of range for {classes} classes",
                labels[j]
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("archive logits must be finite"));
        }
        Ok(Self {
            inputs,
            samples,
            classes,
            logits,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs
    }

    pub fn is_empty(&self) -> bool {
        self.inputs == 0
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j] as usize
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Logit vector of pass `i` for input `j`.
    pub fn pass(&self, j: usize, i: usize) -> &[f64] {
        let start = (j * self.samples + i) * self.classes;
        &self.logits[start..start + self.classes]
    }

    pub fn passes(&self, j: usize) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.samples).map(move |i| self.pass(j, i))
    }

    /// Sub-archive of the given inputs, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let stride = self.samples * self.classes;
        let mut logits = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &j in indices {
            if j >= self.inputs {
                return Err(Error::invalid_input(format!("input index {j} out of range")));
            }
            logits.extend_from_slice(&self.logits[j * stride..(j + 1) * stride]);
            labels.push(self.labels[j]);
        }
        Self::new(self.samples, self.classes, logits, labels)
    }
}

/// Run `samples` stochastic passes for every input. Input `j` draws from
/// `rng.derive(j)`, so the result does not depend on evaluation order.
pub fn dump_archive(model: &DenseNet, data: &LabeledSet, samples: usize, rng: &RngStream) -> Result<LogitArchive> {
    if data.is_empty() {
        return Err(Error::invalid_input("cannot archive an empty set"));
    }
    if data.classes() != model.classes() {
        return Err(Error::invalid_input("label space does not match the model"));
    }
    let mut logits = Vec::with_capacity(data.len() * samples * model.classes());
    for j in 0..data.len() {
        let mut local = rng.derive(j as u64);
        for z in model.mc_forward(data.row(j), samples, &mut local)? {
            logits.extend(z);
        }
    }
    LogitArchive::new(samples, model.classes(), logits, data.labels().to_vec())
}
