//! Percentile bootstrap confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIResult {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
    pub seed: u64,
}

/// 95% percentile-bootstrap interval of the mean of `values`.
///
/// Endpoints are order statistics of the resampled means, so they are
/// always attainable means. They are widened to contain the point estimate.
pub fn mean_ci(values: &[f64], resamples: usize, seed: u64) -> Result<CIResult, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if resamples == 0 {
        return Err(MetricsError::InvalidValue("resamples must be positive".into()));
    }
    let n = values.len();
    let point = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let last = (resamples - 1) as f64;
    let lo = means[(0.025 * last).floor() as usize];
    let hi = means[(0.975 * last).ceil() as usize];
    Ok(CIResult {
        point,
        lo: lo.min(point),
        hi: hi.max(point),
        resamples,
        seed,
    })
}

pub fn accuracy_ci(correct: &[bool], resamples: usize, seed: u64) -> Result<CIResult, MetricsError> {
    let values: Vec<f64> = correct.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    mean_ci(&values, resamples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let ci = accuracy_ci(&[true; 10], DEFAULT_RESAMPLES, 3).unwrap();
        assert_eq!((ci.point, ci.lo, ci.hi), (1.0, 1.0, 1.0));
        assert_eq!(ci.resamples, 1000);
    }

    #[test]
    fn two_items_endpoints_are_attainable_means() {
        let ci = accuracy_ci(&[true, false], DEFAULT_RESAMPLES, 11).unwrap();
        assert_eq!(ci.point, 0.5);
        // resampling two items can only give means 0, 0.5 or 1
        for v in [ci.lo, ci.hi] {
            assert!([0.0, 0.5, 1.0].contains(&v), "{v}");
        }
        assert!(ci.lo <= ci.point && ci.point <= ci.hi);
    }

    #[test]
    fn deterministic_per_seed() {
        let flags: Vec<bool> = (0..37).map(|i| i % 3 != 0).collect();
        let a = accuracy_ci(&flags, DEFAULT_RESAMPLES, 99).unwrap();
        let b = accuracy_ci(&flags, DEFAULT_RESAMPLES, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lo.to_bits(), b.lo.to_bits());
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(accuracy_ci(&[], 1000, 0), Err(MetricsError::Empty));
    }
}
