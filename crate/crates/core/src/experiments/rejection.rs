use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionPoint {
    pub h_max: f64,
    pub retained: usize,
    pub retained_fraction: f64,
    /// Top-1 error of the retained records; `None` when nothing is retained.
    pub error: Option<f64>,
}

/// Points sorted by `h_max`, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCurve {
    pub points: Vec<RejectionPoint>,
}

/// `count` evenly spaced thresholds covering `[0, 1]`.
pub fn even_thresholds(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..count).map(|i| i as f64 / (count - 1) as f64).collect(),
    }
}

/// Keep records with normalized entropy `≤ H_max` and report what is left.
pub fn rejection_curve(records: &[EvalRecord], thresholds: &[f64]) -> Result<RejectionCurve> {
    if records.is_empty() {
        return Err(Error::invalid_input("no evaluation records"));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid_input(format!("threshold {t} is outside [0, 1]")));
    }
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = records.len() as f64;
    let points = sorted
        .into_iter()
        .map(|h_max| {
            let (kept, wrong) = records
                .iter()
                .filter(|r| r.uncertainty() <= h_max)
                .fold((0usize, 0usize), |(k, w), r| (k + 1, w + usize::from(!r.is_correct())));
            RejectionPoint {
                h_max,
                retained: kept,
                retained_fraction: kept as f64 / n,
                error: (kept > 0).then(|| wrong as f64 / kept as f64),
            }
        })
        .collect();
    Ok(RejectionCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(p: &[f64], y: usize) -> EvalRecord {
        EvalRecord::new(p.to_vec(), y).unwrap()
    }

    #[test]
    fn no_rejection_at_one() {
        let rs = vec![rec(&[0.9, 0.1], 0), rec(&[0.6, 0.4], 1), rec(&[0.5, 0.5], 0)];
        let c = rejection_curve(&rs, &[1.0]).unwrap();
        assert_eq!(c.points[0].retained_fraction, 1.0);
        assert!((c.points[0].error.unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn full_rejection_at_zero() {
        let rs = vec![rec(&[0.9, 0.1], 0), rec(&[0.6, 0.4], 1)];
        let c = rejection_curve(&rs, &[0.0]).unwrap();
        assert_eq!(c.points[0].retained_fraction, 0.0);
        assert_eq!(c.points[0].error, None);
    }

    #[test]
    fn sorted_descending_and_monotone() {
        let rs: Vec<_> = (1..20)
            .map(|i| rec(&[i as f64 / 20.0, 1.0 - i as f64 / 20.0], i % 2))
            .collect();
        let c = rejection_curve(&rs, &even_thresholds(11)).unwrap();
        for w in c.points.windows(2) {
            assert!(w[0].h_max > w[1].h_max);
            assert!(w[0].retained_fraction >= w[1].retained_fraction);
        }
        assert!(rejection_curve(&rs, &[1.5]).is_err());
        assert!(rejection_curve(&[], &[0.5]).is_err());
    }

    #[test]
    fn thresholds_grid() {
        let t = even_thresholds(51);
        assert_eq!(t.len(), 51);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[50], 1.0);
        assert!((t[1] - 0.02).abs() < 1e-15);
    }
}
