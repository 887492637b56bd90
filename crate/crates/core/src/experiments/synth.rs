//! Synthetic record and archive generators with known calibration
//! properties.

use crate::error::{Error, Result};
use crate::math::{self, argmax, RngStream};
use crate::metrics::EvalRecord;
use crate::net::{mc_integrate, LogitArchive};
use crate::scalers::Scaler;

/// Draw a class index from a probability vector.
pub fn sample_categorical(p: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn random_probs(classes: usize, rng: &mut RngStream) -> Vec<f64> {
    let scale = 5.0 * rng.uniform();
    let z: Vec<f64> = (0..classes).map(|_| scale * rng.next_normal()).collect();
    let mut p = vec![0.0; classes];
    math::softmax_into(&z, &mut p);
    p
}

/// Records whose top-1 prediction is wrong with probability equal to their
/// normalized entropy, i.e. perfectly calibrated in uncertainty.
pub fn uncertainty_calibrated_records(n: usize, classes: usize, rng: &mut RngStream) -> Result<Vec<EvalRecord>> {
    if classes < 2 {
        return Err(Error::invalid_input("need at least 2 classes"));
    }
    (0..n)
        .map(|_| {
            let p = random_probs(classes, rng);
            let predicted = argmax(&p);
            let u = math::normalized_entropy(&p)?;
            let label = if rng.uniform() < u {
                let other = rng.below(classes - 1);
                if other >= predicted {
                    other + 1
                } else {
                    other
                }
            } else {
                predicted
            };
            EvalRecord::new(p, label)
        })
        .collect()
}

/// Records whose labels are drawn from their own probability vectors, i.e.
/// perfectly calibrated per class.
pub fn probability_calibrated_records(n: usize, classes: usize, rng: &mut RngStream) -> Result<Vec<EvalRecord>> {
    (0..n)
        .map(|_| {
            let p = random_probs(classes, rng);
            let y = sample_categorical(&p, rng);
            EvalRecord::new(p, y)
        })
        .collect()
}

/// Archive whose labels are drawn from the MC-integrated `softmax(z / T*)`,
/// so that the NLL-optimal temperature is `T*` in the large-sample limit.
/// Each input has base logits with standard deviation `logit_scale` and
/// per-pass jitter of standard deviation `pass_jitter`.
pub fn temperature_archive(
    inputs: usize,
    classes: usize,
    samples: usize,
    true_temperature: f64,
    logit_scale: f64,
    pass_jitter: f64,
    rng: &mut RngStream,
) -> Result<LogitArchive> {
    let truth = Scaler::temperature(true_temperature)?;
    let mut logits = Vec::with_capacity(inputs * samples * classes);
    let mut labels = Vec::with_capacity(inputs);
    for _ in 0..inputs {
        let base: Vec<f64> = (0..classes).map(|_| logit_scale * rng.next_normal()).collect();
        let passes: Vec<Vec<f64>> = (0..samples)
            .map(|_| base.iter().map(|b| b + pass_jitter * rng.next_normal()).collect())
            .collect();
        let p = mc_integrate(passes.iter().map(Vec::as_slice), Some(&truth), classes);
        labels.push(sample_categorical(&p, rng) as u32);
        logits.extend(passes.into_iter().flatten());
    }
    LogitArchive::new(samples, classes, logits, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_frequencies() {
        let mut rng = RngStream::new(1);
        let p = [0.2, 0.5, 0.3];
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[sample_categorical(&p, &mut rng)] += 1;
        }
        for (c, q) in counts.iter().zip(p) {
            assert!((*c as f64 / 30_000.0 - q).abs() < 0.015);
        }
    }

    #[test]
    fn archive_shape() {
        let a = temperature_archive(10, 3, 4, 2.0, 3.0, 0.5, &mut RngStream::new(2)).unwrap();
        assert_eq!((a.len(), a.samples(), a.classes()), (10, 4, 3));
    }
}
