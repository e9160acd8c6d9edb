//! Order-fixed summation and Monte Carlo estimators.
//!
//! Every reduction in the crate goes through [`pairwise_sum`], whose grouping
//! depends only on the slice length. Results are therefore bit-identical no
//! matter how many workers produced the inputs.

use serde::{Deserialize, Serialize};

const BLOCK: usize = 8;

/// Pairwise (cascade) summation with a fixed split rule.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error of a Monte Carlo sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { mean: 0.0, stderr: 0.0 };

    /// Sample mean and `sample_std / sqrt(M)`; a single sample has zero error.
    pub fn from_samples(samples: &[f64]) -> Estimate {
        let m = samples.len();
        if m == 0 {
            return Estimate::ZERO;
        }
        let mean = pairwise_sum(samples) / m as f64;
        if m == 1 {
            return Estimate { mean, stderr: 0.0 };
        }
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (m as f64 - 1.0);
        Estimate { mean, stderr: (var / m as f64).sqrt() }
    }

    pub fn relative_error(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.stderr / self.mean.abs()
        }
    }
}

/// Summary statistics of one functional at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn from_samples(samples: &[f64]) -> Summary {
        let e = Estimate::from_samples(samples);
        let (min, max) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if samples.is_empty() {
            return Summary { mean: 0.0, stderr: 0.0, min: 0.0, max: 0.0 };
        }
        Summary { mean: e.mean, stderr: e.stderr, min, max }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate { mean: self.mean, stderr: self.stderr }
    }
}

/// Sample variance with its standard error (normal-theory approximation
/// using the fourth central moment).
pub fn variance_estimate(samples: &[f64]) -> Estimate {
    let m = samples.len();
    if m < 2 {
        return Estimate::ZERO;
    }
    let mean = pairwise_sum(samples) / m as f64;
    let d2: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let d4: Vec<f64> = samples.iter().map(|x| (x - mean).powi(4)).collect();
    let var = pairwise_sum(&d2) / (m as f64 - 1.0);
    let mu4 = pairwise_sum(&d4) / m as f64;
    let se = ((mu4 - var * var * (m as f64 - 3.0) / (m as f64 - 1.0)).max(0.0) / m as f64).sqrt();
    Estimate { mean: var, stderr: se }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn single_sample_has_zero_error() {
        let e = Estimate::from_samples(&[3.5]);
        assert_eq!(e.mean, 3.5);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn stderr_is_std_over_sqrt_m() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let e = Estimate::from_samples(&s);
        let var: f64 = s.iter().map(|x| (x - 2.5f64).powi(2)).sum::<f64>() / 3.0;
        assert!((e.stderr - (var / 4.0).sqrt()).abs() < 1e-15);
        let sm = Summary::from_samples(&s);
        assert!(sm.min <= sm.mean && sm.mean <= sm.max);
    }

    #[test]
    fn variance_of_constant_sample_is_zero() {
        let e = variance_estimate(&[2.0; 10]);
        assert_eq!(e.mean, 0.0);
    }
}
