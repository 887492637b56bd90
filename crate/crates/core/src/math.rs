//! Probability primitives and seeded sampling.
//!
//! Everything is `f64`. Softmax uses max subtraction so that logits of any
//! finite magnitude are safe.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1` used when validating probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Index of the largest entry. Ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_logits(z: &[f64]) -> Result<()> {
    if z.len() < 2 {
        return Err(Error::invalid_input(format!(
            "logit vector needs at least 2 classes, got {}",
            z.len()
        )));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid_input(format!("logit {i} is not finite ({})", z[i])));
    }
    Ok(())
}

/// Softmax of a finite logit vector.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    check_logits(z)?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    Ok(out)
}

/// Unchecked softmax writing into `out`. Hot-path variant of [`softmax`].
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    debug_assert_eq!(z.len(), out.len());
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log softmax(z)` computed without forming the probabilities.
pub fn log_softmax_into(z: &[f64], out: &mut [f64]) {
    debug_assert_eq!(z.len(), out.len());
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = v - lse;
    }
}

/// Check that `p` is a probability vector with at least two entries.
pub fn validate_probs(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::invalid_input(format!(
            "probability vector needs at least 2 classes, got {}",
            p.len()
        )));
    }
    if let Some(i) = p.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        return Err(Error::invalid_input(format!(
            "probability {i} outside [0, 1] ({})",
            p[i]
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::invalid_input(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Entropy divided by `log C`, which maps it onto `[0, 1]`.
pub fn normalized_entropy(p: &[f64]) -> Result<f64> {
    validate_probs(p)?;
    Ok(normalized_entropy_unchecked(p))
}

pub(crate) fn normalized_entropy_unchecked(p: &[f64]) -> f64 {
    let h = entropy(p) / (p.len() as f64).ln();
    // rounding can push a uniform vector a hair past 1
    h.clamp(0.0, 1.0)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D1_049B_B133_111E);
    x ^ (x >> 31)
}

/// Explicitly seeded random stream. Identical seeds give bit-identical
/// sequences. Streams are single-owner; use [`RngStream::derive`] to hand
/// independent streams to workers.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `(seed, index)`. Does not advance `self`.
    pub fn derive(&self, index: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(index.wrapping_add(1))))
    }

    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn standard_normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform_from_equal_logits() {
        let p = softmax(&[0.0; 4]).unwrap();
        for v in p {
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
    }

    #[test]
    fn softmax_matches_high_precision_values() {
        // e^z / Σ e^z evaluated to 8 decimals
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [0.09003057, 0.24472847, 0.66524096];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 5e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
        assert!(softmax(&[1.0]).is_err());
    }

    #[test]
    fn log_softmax_agrees_with_softmax() {
        let z = [0.3, -1.2, 4.0, 2.2];
        let p = softmax(&z).unwrap();
        let mut lp = [0.0; 4];
        log_softmax_into(&z, &mut lp);
        for (a, b) in p.iter().zip(lp) {
            assert!((a.ln() - b).abs() < 1e-14);
        }
    }

    #[test]
    fn normalized_entropy_edge_cases() {
        assert!((normalized_entropy(&[0.1; 10]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(normalized_entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let h = normalized_entropy(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        let expected = 2f64.ln() / 4f64.ln();
        assert!((h - expected).abs() < 1e-15);
        assert!((h - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalized_entropy_needs_two_classes() {
        assert!(normalized_entropy(&[1.0]).is_err());
        assert!(normalized_entropy(&[0.7, 0.2]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn normal_stream_is_deterministic() {
        let a = RngStream::new(17).standard_normal(10);
        let b = RngStream::new(17).standard_normal(10);
        assert_eq!(a, b);
        assert_ne!(a, RngStream::new(18).standard_normal(10));
    }

    #[test]
    fn normal_moments() {
        let n = 1_000_000;
        let xs = RngStream::new(3).standard_normal(n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn derived_streams_differ_and_repeat() {
        let root = RngStream::new(5);
        let mut a = root.derive(0);
        let mut b = root.derive(1);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_eq!(root.derive(7).next_u64(), root.derive(7).next_u64());
    }

    fn simplex(c: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, c).prop_map(|w| {
            let s: f64 = w.iter().sum::<f64>() + 1e-300;
            w.iter().map(|v| v / s).collect::<Vec<_>>()
        })
    }

    fn logits() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e4f64..1e4, 2..12)
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(z in logits()) {
            let p = softmax(&z).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn softmax_preserves_argmax(z in logits()) {
            let m = argmax(&z);
            prop_assume!(z.iter().enumerate().all(|(i, &v)| i == m || v < z[m]));
            let p = softmax(&z).unwrap();
            // a logit gap below ~1e-13 can collapse in exp(); skip that case
            prop_assume!(p.iter().enumerate().all(|(i, &v)| i == m || v < p[m]));
            prop_assert_eq!(argmax(&p), m);
        }

        #[test]
        fn softmax_is_shift_invariant(z in prop::collection::vec(-50f64..50.0, 2..8), c in -100f64..100.0) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let a = softmax(&z).unwrap();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn entropy_in_unit_interval(p in (2usize..12).prop_flat_map(simplex)) {
            prop_assume!(validate_probs(&p).is_ok());
            let h = normalized_entropy(&p).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
        }

        #[test]
        fn entropy_permutation_invariant(p in (2usize..10).prop_flat_map(simplex), seed in any::<u64>()) {
            prop_assume!(validate_probs(&p).is_ok());
            let mut q = p.clone();
            RngStream::new(seed).shuffle(&mut q);
            let a = normalized_entropy(&p).unwrap();
            let b = normalized_entropy(&q).unwrap();
            prop_assert!((a - b).abs() < 1e-14);
        }
    }
}
