use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Percentile bootstrap interval of the mean. Fewer than two values give
/// the degenerate interval at the point.
pub fn bootstrap_ci(values: &[f64], level: f64, resamples: usize, rng_seed: u64) -> Result<Interval> {
    if values.is_empty() {
        return Err(Error::Undefined("bootstrap of an empty sample".into()));
    }
    if !(0.0..1.0).contains(&level) || resamples == 0 {
        return Err(Error::Config(format!(
            "bootstrap needs level in [0,1) and resamples >= 1, got {level} and {resamples}"
        )));
    }
    let n = values.len();
    if n < 2 {
        return Ok(Interval {
            low: values[0],
            high: values[0],
        });
    }
    let mut rng = seed::rng(rng_seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        low: quantile_sorted(&means, tail),
        high: quantile_sorted(&means, 1.0 - tail),
    })
}

/// Smallest element with empirical CDF at least `q`.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let b = sorted.len();
    let idx = ((q * b as f64).ceil() as usize).clamp(1, b) - 1;
    sorted[idx]
}

/// Mean with its bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64], rng_seed: u64) -> Option<Self> {
        let ci = bootstrap_ci(values, 0.95, DEFAULT_RESAMPLES, rng_seed).ok()?;
        Some(Self {
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            ci_low: ci.low,
            ci_high: ci.high,
        })
    }
}
