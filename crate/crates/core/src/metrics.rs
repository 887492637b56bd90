//! Binned calibration metrics over evaluation records.
//!
//! Bins are `M` equal-width intervals over `[0, 1]`, left-closed and
//! right-open except the last, which also contains 1. Empty bins carry zero
//! weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, argmax};
use crate::net::{mc_integrate, LogitArchive};
use crate::scalers::Scaler;

pub const DEFAULT_BINS: usize = 15;

/// Lower clamp for probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// One prediction: MC-integrated probabilities and the derived summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    probs: Vec<f64>,
    predicted: usize,
    confidence: f64,
    uncertainty: f64,
    label: usize,
}

impl EvalRecord {
    pub fn new(probs: Vec<f64>, label: usize) -> Result<Self> {
        math::validate_probs(&probs)?;
        if label >= probs.len() {
            return Err(Error::invalid_input(format!(
                "label {label} out of range for {} classes",
                probs.len()
            )));
        }
        Ok(Self::from_valid(probs, label))
    }

    fn from_valid(probs: Vec<f64>, label: usize) -> Self {
        let predicted = argmax(&probs);
        let confidence = probs[predicted].clamp(0.0, 1.0);
        let uncertainty = math::normalized_entropy_unchecked(&probs);
        Self {
            probs,
            predicted,
            confidence,
            uncertainty,
            label,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn predicted(&self) -> usize {
        self.predicted
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == self.label
    }
}

/// Evaluate an archive, optionally through a scaler, into records.
pub fn records_from_archive(archive: &LogitArchive, scaler: Option<&Scaler>) -> Vec<EvalRecord> {
    (0..archive.len())
        .map(|j| {
            let p = mc_integrate(archive.passes(j), scaler, archive.classes());
            EvalRecord::from_valid(p, archive.label(j))
        })
        .collect()
}

/// Equal-width bin of `v` among `bins` bins on `[0, 1]`.
pub fn bin_index(v: f64, bins: usize) -> Result<usize> {
    if bins == 0 {
        return Err(Error::invalid_input("bin count must be positive"));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid_input(format!("{v} is outside [0, 1]")));
    }
    Ok(((v * bins as f64).floor() as usize).min(bins - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinMode {
    /// Bin by confidence, outcome is accuracy.
    Confidence,
    /// Bin by normalized entropy, outcome is top-1 error.
    Uncertainty,
}

impl BinMode {
    pub fn name(self) -> &'static str {
        match self {
            BinMode::Confidence => "confidence",
            BinMode::Uncertainty => "uncertainty",
        }
    }

    fn stat(self, r: &EvalRecord) -> f64 {
        match self {
            BinMode::Confidence => r.confidence,
            BinMode::Uncertainty => r.uncertainty,
        }
    }

    fn outcome(self, r: &EvalRecord) -> f64 {
        match (self, r.is_correct()) {
            (BinMode::Confidence, true) | (BinMode::Uncertainty, false) => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub count: usize,
    /// Mean confidence or uncertainty of the bin; 0 when empty.
    pub mean_stat: f64,
    /// Accuracy or error of the bin; 0 when empty.
    pub outcome_rate: f64,
}

/// Per-bin statistics behind ECE/UCE and reliability diagrams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReliability {
    pub mode: BinMode,
    pub total: usize,
    pub bins: Vec<ReliabilityBin>,
}

impl BinnedReliability {
    /// `Σ_m (|B_m| / n) |outcome(B_m) − stat(B_m)|`.
    pub fn calibration_error(&self) -> f64 {
        let n = self.total as f64;
        self.bins
            .iter()
            .map(|b| (b.count as f64 / n) * (b.outcome_rate - b.mean_stat).abs())
            .sum()
    }

    pub fn bin_edges(&self, m: usize) -> (f64, f64) {
        let width = 1.0 / self.bins.len() as f64;
        (m as f64 * width, (m + 1) as f64 * width)
    }
}

fn require_nonempty(records: &[EvalRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid_input("no evaluation records"));
    }
    let classes = records[0].classes();
    if let Some(j) = records.iter().position(|r| r.classes() != classes) {
        return Err(Error::invalid_input(format!(
            "record {j} has {} classes, expected {classes}",
            records[j].classes()
        )));
    }
    Ok(())
}

/// Binned statistics over `values` with per-record binary `outcomes`.
fn bin_stats(values: impl Iterator<Item = (f64, f64)>, bins: usize, mode: BinMode) -> Result<BinnedReliability> {
    let mut count = vec![0usize; bins];
    let mut stat_sum = vec![0.0; bins];
    let mut outcome_sum = vec![0.0; bins];
    let mut total = 0;
    for (v, o) in values {
        let b = bin_index(v, bins)?;
        count[b] += 1;
        stat_sum[b] += v;
        outcome_sum[b] += o;
        total += 1;
    }
    let bins = (0..bins)
        .map(|m| {
            if count[m] == 0 {
                ReliabilityBin {
                    count: 0,
                    mean_stat: 0.0,
                    outcome_rate: 0.0,
                }
            } else {
                let c = count[m] as f64;
                ReliabilityBin {
                    count: count[m],
                    mean_stat: stat_sum[m] / c,
                    outcome_rate: outcome_sum[m] / c,
                }
            }
        })
        .collect();
    Ok(BinnedReliability { mode, total, bins })
}

pub fn reliability_data(records: &[EvalRecord], bins: usize, mode: BinMode) -> Result<BinnedReliability> {
    require_nonempty(records)?;
    bin_stats(records.iter().map(|r| (mode.stat(r), mode.outcome(r))), bins, mode)
}

/// Expected calibration error, binned by confidence.
pub fn ece(records: &[EvalRecord], bins: usize) -> Result<f64> {
    Ok(reliability_data(records, bins, BinMode::Confidence)?.calibration_error())
}

/// Expected uncertainty calibration error: top-1 error against normalized
/// entropy, binned by normalized entropy.
pub fn uce(records: &[EvalRecord], bins: usize) -> Result<f64> {
    Ok(reliability_data(records, bins, BinMode::Uncertainty)?.calibration_error())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClasswiseUce {
    /// Mean of the defined per-class values.
    pub value: f64,
    /// UCE over records whose true label is `c`; `None` when there are none.
    pub per_class: Vec<Option<f64>>,
    /// Number of classes left out of the mean for lack of records.
    pub empty_classes: usize,
}

/// Mean over classes of the UCE restricted to records with that true label.
/// Classes without records are excluded from the mean and counted.
pub fn classwise_uce(records: &[EvalRecord], bins: usize) -> Result<ClasswiseUce> {
    require_nonempty(records)?;
    let classes = records[0].classes();
    let mut per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let subset: Vec<EvalRecord> = records.iter().filter(|r| r.label == c).cloned().collect();
        per_class.push(if subset.is_empty() {
            None
        } else {
            Some(uce(&subset, bins)?)
        });
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(ClasswiseUce {
        value: defined.iter().sum::<f64>() / defined.len() as f64,
        empty_classes: classes - defined.len(),
        per_class,
    })
}

/// One-vs-rest classwise ECE: every record is binned by `probs[c]` and the
/// bin's mean `probs[c]` is compared with the frequency of label `c`.
pub fn classwise_ece(records: &[EvalRecord], bins: usize) -> Result<f64> {
    require_nonempty(records)?;
    let classes = records[0].classes();
    let mut total = 0.0;
    for c in 0..classes {
        let rel = bin_stats(
            records
                .iter()
                .map(|r| (r.probs[c].clamp(0.0, 1.0), if r.label == c { 1.0 } else { 0.0 })),
            bins,
            BinMode::Confidence,
        )?;
        total += rel.calibration_error();
    }
    Ok(total / classes as f64)
}

/// Summed negative log-likelihood of the true labels.
pub fn nll(records: &[EvalRecord]) -> f64 {
    -records
        .iter()
        .map(|r| r.probs[r.label].clamp(PROB_FLOOR, 1.0).ln())
        .sum::<f64>()
}

pub fn accuracy(records: &[EvalRecord]) -> Result<f64> {
    require_nonempty(records)?;
    Ok(records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64)
}

pub fn mean_uncertainty(records: &[EvalRecord]) -> Result<f64> {
    require_nonempty(records)?;
    Ok(records.iter().map(|r| r.uncertainty).sum::<f64>() / records.len() as f64)
}

/// The full metric row reported per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ece: f64,
    pub uce: f64,
    pub cece: f64,
    pub cuce: f64,
    pub nll: f64,
    pub accuracy: f64,
}

pub fn summarize(records: &[EvalRecord], bins: usize) -> Result<MetricSummary> {
    Ok(MetricSummary {
        ece: ece(records, bins)?,
        uce: uce(records, bins)?,
        cece: classwise_ece(records, bins)?,
        cuce: classwise_uce(records, bins)?.value,
        nll: nll(records),
        accuracy: accuracy(records)?,
    })
}
