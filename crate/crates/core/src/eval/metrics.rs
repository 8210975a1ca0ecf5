//! Operating-point and ROC metrics. Scores are liveness scores; a sample is
//! flagged spoof iff its score is strictly below the threshold.

use serde::{Deserialize, Serialize};

use super::EvalError;

fn check(scores: &[f64]) -> Result<(), EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(EvalError::Domain(format!("score {s}")));
    }
    Ok(())
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// The `floor(fdr · N)`-th smallest live score (0-indexed).
pub fn threshold_at_fdr(live: &[f64], fdr_target: f64) -> Result<f64, EvalError> {
    check(live)?;
    if !(0.0..1.0).contains(&fdr_target) {
        return Err(EvalError::Domain(format!("fdr target {fdr_target} outside [0, 1)")));
    }
    let v = sorted(live);
    let k = ((fdr_target * v.len() as f64).floor() as usize).min(v.len() - 1);
    Ok(v[k])
}

/// Fraction of `scores` strictly below `threshold`.
pub fn fraction_below(scores: &[f64], threshold: f64) -> f64 {
    scores.iter().filter(|&&s| s < threshold).count() as f64 / scores.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub tdr: f64,
    pub threshold: f64,
    pub realized_fdr: f64,
}

pub fn tdr_at_fdr(live: &[f64], spoof: &[f64], fdr_target: f64) -> Result<OperatingPoint, EvalError> {
    check(spoof)?;
    let threshold = threshold_at_fdr(live, fdr_target)?;
    Ok(OperatingPoint {
        tdr: fraction_below(spoof, threshold),
        threshold,
        realized_fdr: fraction_below(live, threshold),
    })
}

/// `(fdr, tdr)` at every distinct score threshold plus one above all
/// scores, starting at `(0, 0)` and ending at `(1, 1)`.
pub fn roc_points(live: &[f64], spoof: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
    check(live)?;
    check(spoof)?;
    let l = sorted(live);
    let s = sorted(spoof);
    let mut all: Vec<f64> = l.iter().chain(&s).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let (nl, ns) = (l.len() as f64, s.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut pts = Vec::with_capacity(all.len() + 1);
    for &t in &all {
        while i < l.len() && l[i] < t {
            i += 1;
        }
        while j < s.len() && s[j] < t {
            j += 1;
        }
        pts.push((i as f64 / nl, j as f64 / ns));
    }
    pts.push((1.0, 1.0));
    Ok(pts)
}

/// Trapezoid area under a monotone ROC polyline.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Probability that a spoof scores below a live sample, ties counted half.
pub fn roc_auc(live: &[f64], spoof: &[f64]) -> Result<f64, EvalError> {
    Ok(auc(&roc_points(live, spoof)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let live = [0.1, 0.5, 0.6, 0.9];
        assert_eq!(threshold_at_fdr(&live, 0.25).unwrap(), 0.5);
        let op = tdr_at_fdr(&live, &[0.05, 0.2, 0.55], 0.25).unwrap();
        assert_eq!(op.threshold, 0.5);
        assert!((op.tdr - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(op.realized_fdr, 0.25);
    }

    #[test]
    fn small_target_takes_minimum() {
        let live: Vec<f64> = (0..100).map(|i| 0.3 + i as f64 / 1000.0).collect();
        let op = tdr_at_fdr(&live, &[0.0], 0.002).unwrap();
        assert_eq!(op.threshold, 0.3);
        assert_eq!(op.realized_fdr, 0.0);
    }

    #[test]
    fn ties_are_live() {
        let op = tdr_at_fdr(&[0.4; 10], &[0.4, 0.3], 0.5).unwrap();
        assert_eq!(op.realized_fdr, 0.0);
        assert_eq!(op.tdr, 0.5);
    }

    #[test]
    fn perfect_and_none() {
        assert_eq!(tdr_at_fdr(&[1.0; 5], &[0.0; 5], 0.1).unwrap().tdr, 1.0);
        assert_eq!(tdr_at_fdr(&[0.1, 0.2], &[0.5, 0.6], 0.0).unwrap().tdr, 0.0);
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(roc_auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        let v = [0.1, 0.5, 0.5, 0.7];
        assert_eq!(roc_auc(&v, &v).unwrap(), 0.5);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(threshold_at_fdr(&[], 0.1), Err(EvalError::EmptyScores));
        assert_eq!(tdr_at_fdr(&[0.1], &[], 0.1), Err(EvalError::EmptyScores));
    }
}
