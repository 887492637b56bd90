use crate::error::{Error, Result};

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
}

impl LabeledSet {
    pub fn new(dim: usize, classes: usize, features: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid_input("feature dimension must be positive"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::invalid_input(format!(
                "{} features do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= classes) {
            return Err(Error::invalid_input(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("features must be finite"));
        }
        Ok(Self {
            dim,
            classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.label(i)))
    }
}
