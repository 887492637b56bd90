use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::RngStream;
use crate::metrics::EvalRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodConfig {
    pub batch: usize,
    /// The curve has `steps + 1` points at fractions `k / steps`.
    pub steps: usize,
    pub repeats: usize,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            batch: 100,
            steps: 10,
            repeats: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodPoint {
    pub ood_fraction: f64,
    pub ood_count: usize,
    /// Batch mean normalized entropy, averaged over repeats.
    pub mean_uncertainty: f64,
    /// Standard error of that average across repeats.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodCurve {
    pub points: Vec<OodPoint>,
}

/// Start from a batch of in-distribution records and replace the last `k`
/// slots with out-of-distribution records, `k = round(batch · step / steps)`.
/// Each repeat draws fresh batches without replacement.
pub fn ood_mixing_curve(
    in_dist: &[EvalRecord],
    ood: &[EvalRecord],
    cfg: &OodConfig,
    rng: &mut RngStream,
) -> Result<OodCurve> {
    if cfg.batch == 0 || cfg.steps == 0 || cfg.repeats == 0 {
        return Err(Error::invalid_input("batch, steps and repeats must be positive"));
    }
    if in_dist.len() < cfg.batch || ood.len() < cfg.batch {
        return Err(Error::invalid_input(format!(
            "need at least {} records of each kind, have {} in-distribution and {} OoD",
            cfg.batch,
            in_dist.len(),
            ood.len()
        )));
    }
    let mut per_step = vec![Vec::with_capacity(cfg.repeats); cfg.steps + 1];
    for _ in 0..cfg.repeats {
        let ins = &rng.permutation(in_dist.len())[..cfg.batch];
        let outs = &rng.permutation(ood.len())[..cfg.batch];
        for (step, slot) in per_step.iter_mut().enumerate() {
            let k = ood_count(cfg, step);
            let sum: f64 = ins[..cfg.batch - k]
                .iter()
                .map(|&i| in_dist[i].uncertainty())
                .chain(outs[..k].iter().map(|&i| ood[i].uncertainty()))
                .sum();
            slot.push(sum / cfg.batch as f64);
        }
    }
    let points = per_step
        .into_iter()
        .enumerate()
        .map(|(step, vals)| {
            let r = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / r;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)
            } else {
                0.0
            };
            OodPoint {
                ood_fraction: step as f64 / cfg.steps as f64,
                ood_count: ood_count(cfg, step),
                mean_uncertainty: mean,
                std_error: (var / r).sqrt(),
            }
        })
        .collect();
    Ok(OodCurve { points })
}

fn ood_count(cfg: &OodConfig, step: usize) -> usize {
    (cfg.batch as f64 * step as f64 / cfg.steps as f64).round() as usize
}
