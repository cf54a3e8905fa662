use serde::Serialize;

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub average_ns: f64,
    pub std_dev_ns: f64,
    pub max_ns: u64,
    pub min_ns: u64,
    pub iterations: usize,
}

/// Mean, sample standard deviation (n - 1 divisor), maximum and minimum.
/// Uses Welford's single-pass update.
pub fn compute_stats(samples: &[u64]) -> Result<TimingStats, BenchError> {
    if samples.len() < 2 {
        return Err(BenchError::TooFewSamples(samples.len()));
    }
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    let mut max = u64::MIN;
    let mut min = u64::MAX;
    for (i, &s) in samples.iter().enumerate() {
        let x = s as f64;
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
        max = max.max(s);
        min = min.min(s);
    }
    let variance = (m2 / (samples.len() - 1) as f64).max(0.0);
    Ok(TimingStats {
        // Rounding can push the running mean a hair outside [min, max].
        average_ns: mean.clamp(min as f64, max as f64),
        std_dev_ns: variance.sqrt(),
        max_ns: max,
        min_ns: min,
        iterations: samples.len(),
    })
}
