//! Summary statistics and paired bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;

/// Mean and sample standard deviation; `None` for an empty sample.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((mean, var.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn excludes_zero(&self) -> bool {
        self.lo > 0.0 || self.hi < 0.0
    }
}

/// Percentile bootstrap interval for the mean of paired differences.
pub fn bootstrap_mean_ci(diffs: &[f64], resamples: usize, level: f64, seed: u64) -> Interval {
    let n = diffs.len();
    let estimate = diffs.iter().sum::<f64>() / n as f64;
    let mut rng = rng_from_seed(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| diffs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Interval { estimate, lo: at(alpha), hi: at(1.0 - alpha) }
}

/// Counts adjacent decreases in `ys`. Returns whether the sequence is
/// non-decreasing up to at most one inversion no larger than `tolerance`.
pub fn monotone_with_one_slip(ys: &[f64], tolerance: f64) -> bool {
    let drops: Vec<f64> = ys.windows(2).filter(|w| w[1] < w[0]).map(|w| w[0] - w[1]).collect();
    drops.is_empty() || (drops.len() == 1 && drops[0] <= tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[3.0]), Some((3.0, 0.0)));
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let diffs: Vec<f64> = (0..500).map(|k| 1.0 + ((k * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let ci = bootstrap_mean_ci(&diffs, 1000, 0.95, 3);
        assert!(ci.lo <= ci.estimate && ci.estimate <= ci.hi);
        assert!(ci.excludes_zero());
        let zero = bootstrap_mean_ci(&[0.0; 50], 200, 0.95, 3);
        assert!(!zero.excludes_zero());
        assert_eq!(bootstrap_mean_ci(&diffs, 1000, 0.95, 3), ci);
    }

    #[test]
    fn monotonicity_check() {
        assert!(monotone_with_one_slip(&[0.1, 0.2, 0.2, 0.5], 0.0));
        assert!(monotone_with_one_slip(&[0.1, 0.3, 0.29, 0.5], 0.02));
        assert!(!monotone_with_one_slip(&[0.1, 0.3, 0.2, 0.5], 0.02));
        assert!(!monotone_with_one_slip(&[0.3, 0.29, 0.5, 0.49], 0.02));
    }
}
