//! Logit scaling recalibrators and their fitting.
//!
//! A scaler maps each stochastic logit vector before the softmax and before
//! MC integration. Fitting minimizes the mean negative log-likelihood of the
//! MC-integrated scaled probabilities over a calibration archive, with the
//! network itself frozen.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, RngStream};
use crate::metrics::PROB_FLOOR;
use crate::net::LogitArchive;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    Temperature,
    Vector,
    Aux,
}

impl ScalerKind {
    pub const ALL: [ScalerKind; 3] = [ScalerKind::Temperature, ScalerKind::Vector, ScalerKind::Aux];

    pub fn name(self) -> &'static str {
        match self {
            ScalerKind::Temperature => "temperature",
            ScalerKind::Vector => "vector",
            ScalerKind::Aux => "aux",
        }
    }
}

impl fmt::Display for ScalerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temperature" => Ok(ScalerKind::Temperature),
            "vector" => Ok(ScalerKind::Vector),
            "aux" => Ok(ScalerKind::Aux),
            other => Err(Error::invalid_config(format!(
                "unknown scaler {other:?} (expected temperature, vector or aux)"
            ))),
        }
    }
}

/// `z / T` with `T = exp(log_t)`, so `T > 0` by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureScaler {
    log_t: f64,
}

impl TemperatureScaler {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid_config(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        Ok(Self {
            log_t: temperature.ln(),
        })
    }

    pub fn temperature(&self) -> f64 {
        self.log_t.exp()
    }
}

/// Elementwise `t ⊙ z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorScaler {
    t: Vec<f64>,
}

impl VectorScaler {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.len() < 2 || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_config("vector scaler needs ≥ 2 finite factors"));
        }
        Ok(Self { t })
    }

    pub fn factors(&self) -> &[f64] {
        &self.t
    }
}

/// `W2 · LeakyReLU(W1 · z + b1) + b2` with `C` hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxScaler {
    classes: usize,
    slope: f64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl AuxScaler {
    /// Identity weights and zero biases.
    pub fn identity(classes: usize, slope: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid_config("aux scaler needs ≥ 2 classes"));
        }
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::invalid_config(format!(
                "leaky slope must lie in (0, 1), got {slope}"
            )));
        }
        let mut eye = vec![0.0; classes * classes];
        for c in 0..classes {
            eye[c * classes + c] = 1.0;
        }
        Ok(Self {
            classes,
            slope,
            w1: eye.clone(),
            b1: vec![0.0; classes],
            w2: eye,
            b2: vec![0.0; classes],
        })
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    fn hidden(&self, z: &[f64]) -> Vec<f64> {
        let c = self.classes;
        (0..c)
            .map(|h| {
                let row = &self.w1[h * c..(h + 1) * c];
                row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + self.b1[h]
            })
            .collect()
    }

    fn leaky(&self, h: f64) -> f64 {
        if h >= 0.0 {
            h
        } else {
            self.slope * h
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scaler {
    Temperature(TemperatureScaler),
    Vector(VectorScaler),
    Aux(AuxScaler),
}

impl Scaler {
    /// The identity-initialized scaler of the given kind.
    pub fn identity(kind: ScalerKind, classes: usize) -> Result<Self> {
        Ok(match kind {
            ScalerKind::Temperature => Scaler::Temperature(TemperatureScaler { log_t: 0.0 }),
            ScalerKind::Vector => Scaler::Vector(VectorScaler::new(vec![1.0; classes])?),
            ScalerKind::Aux => Scaler::Aux(AuxScaler::identity(classes, DEFAULT_LEAKY_SLOPE)?),
        })
    }

    pub fn temperature(t: f64) -> Result<Self> {
        Ok(Scaler::Temperature(TemperatureScaler::new(t)?))
    }

    pub fn kind(&self) -> ScalerKind {
        match self {
            Scaler::Temperature(_) => ScalerKind::Temperature,
            Scaler::Vector(_) => ScalerKind::Vector,
            Scaler::Aux(_) => ScalerKind::Aux,
        }
    }

    /// Class count the scaler was built for; temperature fits any.
    pub fn classes(&self) -> Option<usize> {
        match self {
            Scaler::Temperature(_) => None,
            Scaler::Vector(v) => Some(v.t.len()),
            Scaler::Aux(a) => Some(a.classes),
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Scaler::Temperature(t) => {
                let inv = (-t.log_t).exp();
                z.iter().map(|v| v * inv).collect()
            }
            Scaler::Vector(v) => z.iter().zip(&v.t).map(|(a, b)| a * b).collect(),
            Scaler::Aux(a) => {
                let c = a.classes;
                let r: Vec<f64> = a.hidden(z).into_iter().map(|h| a.leaky(h)).collect();
                (0..c)
                    .map(|k| {
                        let row = &a.w2[k * c..(k + 1) * c];
                        row.iter().zip(&r).map(|(w, v)| w * v).sum::<f64>() + a.b2[k]
                    })
                    .collect()
            }
        }
    }

    /// Flat parameter vector. Temperature: `[log T]`. Vector: `t`. Aux:
    /// `W1` (row-major), `b1`, `W2`, `b2`.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Scaler::Temperature(t) => vec![t.log_t],
            Scaler::Vector(v) => v.t.clone(),
            Scaler::Aux(a) => [&a.w1[..], &a.b1, &a.w2, &a.b2].concat(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params().len() {
            return Err(Error::invalid_input(format!(
                "{} scaler takes {} parameters, got {}",
                self.kind(),
                self.params().len(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("scaler parameters must be finite"));
        }
        match self {
            Scaler::Temperature(t) => t.log_t = params[0],
            Scaler::Vector(v) => v.t.copy_from_slice(params),
            Scaler::Aux(a) => {
                let cc = a.classes * a.classes;
                let c = a.classes;
                a.w1.copy_from_slice(&params[..cc]);
                a.b1.copy_from_slice(&params[cc..cc + c]);
                a.w2.copy_from_slice(&params[cc + c..2 * cc + c]);
                a.b2.copy_from_slice(&params[2 * cc + c..]);
            }
        }
        Ok(())
    }

    /// Rebuild from a kind tag and parameter vector.
    pub fn from_params(kind: ScalerKind, classes: usize, slope: f64, params: &[f64]) -> Result<Self> {
        let mut s = match kind {
            ScalerKind::Aux => Scaler::Aux(AuxScaler::identity(classes, slope)?),
            other => Scaler::identity(other, classes)?,
        };
        s.set_params(params)?;
        Ok(s)
    }

    /// Accumulate `(∂a/∂θ)ᵀ d_out` into `grad`, where `a = apply(z)`.
    fn backprop(&self, z: &[f64], d_out: &[f64], grad: &mut [f64]) {
        match self {
            Scaler::Temperature(t) => {
                let inv = (-t.log_t).exp();
                // ∂(z e^{-u})/∂u = −z e^{-u}
                grad[0] -= z.iter().zip(d_out).map(|(v, d)| v * inv * d).sum::<f64>();
            }
            Scaler::Vector(_) => {
                for ((g, v), d) in grad.iter_mut().zip(z).zip(d_out) {
                    *g += v * d;
                }
            }
            Scaler::Aux(a) => {
                let c = a.classes;
                let cc = c * c;
                let h = a.hidden(z);
                let r: Vec<f64> = h.iter().map(|&v| a.leaky(v)).collect();
                let (g_w1, rest) = grad.split_at_mut(cc);
                let (g_b1, rest) = rest.split_at_mut(c);
                let (g_w2, g_b2) = rest.split_at_mut(cc);
                let mut d_r = vec![0.0; c];
                for k in 0..c {
                    g_b2[k] += d_out[k];
                    for l in 0..c {
                        g_w2[k * c + l] += d_out[k] * r[l];
                        d_r[l] += a.w2[k * c + l] * d_out[k];
                    }
                }
                for l in 0..c {
                    let d_h = if h[l] >= 0.0 { d_r[l] } else { a.slope * d_r[l] };
                    g_b1[l] += d_h;
                    for m in 0..c {
                        g_w1[l * c + m] += d_h * z[m];
                    }
                }
            }
        }
    }

    fn check_archive(&self, archive: &LogitArchive) -> Result<()> {
        match self.classes() {
            Some(c) if c != archive.classes() => Err(Error::invalid_input(format!(
                "{} scaler is for {c} classes but the archive has {}",
                self.kind(),
                archive.classes()
            ))),
            _ => Ok(()),
        }
    }
}

/// Mean NLL of one subset of the archive and, optionally, its gradient.
fn objective(scaler: &Scaler, archive: &LogitArchive, indices: &[usize], want_grad: bool) -> (f64, Vec<f64>) {
    let c = archive.classes();
    let n_samples = archive.samples();
    let mut grad = vec![0.0; if want_grad { scaler.params().len() } else { 0 }];
    let mut total = 0.0;
    let mut probs = vec![0.0; n_samples * c];
    let mut d_a = vec![0.0; c];
    for &j in indices {
        let y = archive.label(j);
        let mut p_y = 0.0;
        for i in 0..n_samples {
            let a = scaler.apply(archive.pass(j, i));
            let s = &mut probs[i * c..(i + 1) * c];
            math::softmax_into(&a, s);
            p_y += s[y];
        }
        p_y /= n_samples as f64;
        total -= p_y.clamp(PROB_FLOOR, 1.0).ln();
        if want_grad && p_y > PROB_FLOOR {
            let coef = -1.0 / (n_samples as f64 * p_y);
            for i in 0..n_samples {
                let s = &probs[i * c..(i + 1) * c];
                for k in 0..c {
                    let delta = if k == y { 1.0 } else { 0.0 };
                    d_a[k] = coef * s[y] * (delta - s[k]);
                }
                scaler.backprop(archive.pass(j, i), &d_a, &mut grad);
            }
        }
    }
    let n = indices.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (total / n, grad)
}

/// Mean NLL of the MC-integrated scaled probabilities over the archive.
pub fn mean_nll(scaler: &Scaler, archive: &LogitArchive) -> Result<f64> {
    scaler.check_archive(archive)?;
    let all: Vec<usize> = (0..archive.len()).collect();
    Ok(objective(scaler, archive, &all, false).0)
}

/// Analytic gradient of [`mean_nll`] with respect to [`Scaler::params`].
pub fn gradient(scaler: &Scaler, archive: &LogitArchive) -> Result<Vec<f64>> {
    scaler.check_archive(archive)?;
    let all: Vec<usize> = (0..archive.len()).collect();
    Ok(objective(scaler, archive, &all, true).1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Fraction of calibration inputs held out for monitoring.
    pub holdout_fraction: f64,
    /// Iterations without held-out improvement before stopping.
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop when one accepted step lowers the objective by less than this.
    pub tol: f64,
    pub seed: u64,
    /// L2 pull towards the identity initialization.
    pub weight_decay: f64,
    pub early_stopping: Option<EarlyStopping>,
}

impl FitConfig {
    pub fn for_kind(kind: ScalerKind) -> Self {
        Self {
            learning_rate: match kind {
                ScalerKind::Aux => 0.01,
                _ => 0.05,
            },
            max_iters: 500,
            tol: 1e-7,
            seed: 0,
            weight_decay: 0.0,
            early_stopping: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid_config("fit learning_rate must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid_config("fit max_iters must be positive"));
        }
        if self.tol.is_nan() || self.tol < 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::invalid_config("fit tol and weight_decay must be non-negative"));
        }
        if let Some(es) = &self.early_stopping {
            if !(es.holdout_fraction > 0.0 && es.holdout_fraction < 1.0) || es.patience == 0 {
                return Err(Error::invalid_config(
                    "early stopping needs holdout_fraction in (0, 1) and positive patience",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub scaler: Scaler,
    /// Objective after each accepted step, starting with the initial value.
    /// Non-increasing by construction.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_HALVINGS: usize = 50;

/// Full-batch gradient descent from `init`. A step that raises the objective
/// is halved until it does not.
pub fn fit(init: &Scaler, archive: &LogitArchive, cfg: &FitConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    init.check_archive(archive)?;

    let (train_idx, holdout_idx) = match &cfg.early_stopping {
        Some(es) => {
            let perm = RngStream::new(cfg.seed).permutation(archive.len());
            let n_hold = ((archive.len() as f64 * es.holdout_fraction).round() as usize)
                .clamp(1, archive.len().saturating_sub(1));
            if archive.len() < 2 {
                return Err(Error::invalid_input("early stopping needs at least 2 inputs"));
            }
            let (hold, train) = perm.split_at(n_hold);
            (train.to_vec(), hold.to_vec())
        }
        None => ((0..archive.len()).collect(), Vec::new()),
    };

    let anchor = init.params();
    let decay = cfg.weight_decay;
    let eval = |s: &Scaler, want_grad: bool| {
        let (mut loss, mut grad) = objective(s, archive, &train_idx, want_grad);
        if decay > 0.0 {
            let p = s.params();
            for (k, (v, a)) in p.iter().zip(&anchor).enumerate() {
                loss += 0.5 * decay * (v - a) * (v - a);
                if want_grad {
                    grad[k] += decay * (v - a);
                }
            }
        }
        (loss, grad)
    };

    let mut scaler = init.clone();
    let (mut loss, mut grad) = eval(&scaler, true);
    if !loss.is_finite() {
        return Err(Error::FitFailed {
            iteration: 0,
            nll: loss,
        });
    }
    let mut trace = vec![loss];
    let mut best_holdout = (!holdout_idx.is_empty()).then(|| objective(&scaler, archive, &holdout_idx, false).0);
    let mut best_scaler = scaler.clone();
    let mut since_best = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::FitFailed {
                iteration: iter,
                nll: f64::NAN,
            });
        }
        let params = scaler.params();
        let mut step = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial_params: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let mut trial = scaler.clone();
            if trial.set_params(&trial_params).is_ok() {
                let (trial_loss, _) = eval(&trial, false);
                if trial_loss <= loss {
                    accepted = Some((trial, trial_loss));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, next_loss)) = accepted else {
            converged = true;
            break;
        };
        let improvement = loss - next_loss;
        scaler = next;
        let (l, g) = eval(&scaler, true);
        if !l.is_finite() {
            return Err(Error::FitFailed {
                iteration: iter,
                nll: l,
            });
        }
        loss = l;
        grad = g;
        trace.push(loss);

        if let Some(best) = best_holdout.as_mut() {
            let h = objective(&scaler, archive, &holdout_idx, false).0;
            if h < *best {
                *best = h;
                best_scaler = scaler.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.early_stopping.as_ref().unwrap().patience {
                    break;
                }
            }
        }
        if improvement < cfg.tol {
            converged = true;
            break;
        }
    }

    if best_holdout.is_some() {
        scaler = best_scaler;
    }
    Ok(FitOutcome {
        scaler,
        trace,
        iterations,
        converged,
    })
}
