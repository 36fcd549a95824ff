//! Summary-statistic algebra and the sequential bootstrap oracle.
//!
//! The variance of the sample mean is recovered from the pair
//! `(m1, m2) = (mean of means, mean of squared means)` as `m2 - m1^2`,
//! using the population convention (divisor = number of means). All
//! reductions sum left to right in sequence order.

use serde::{Deserialize, Serialize};

use crate::config::{Dataset, ExperimentConfig};
use crate::error::{Error, Result};
use crate::prng::{rng_new, RngState};

/// `(m1, m2)` over `count` bootstrap sample means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    m1: f64,
    m2: f64,
    count: u64,
}

impl SummaryStats {
    /// Rebuilds stats received over the wire; `count` is known from the
    /// protocol rather than transmitted.
    pub fn from_parts(m1: f64, m2: f64, count: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Domain("summary stats need count >= 1".into()));
        }
        if !m1.is_finite() || !m2.is_finite() {
            return Err(Error::Domain(format!("non-finite summary stats ({m1}, {m2})")));
        }
        if m2 - m1 * m1 < -negative_tolerance(m2) {
            return Err(Error::Domain(format!("m2={m2} below m1^2={}", m1 * m1)));
        }
        Ok(SummaryStats { m1, m2, count })
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Wire payload: exactly two floats.
    pub fn to_payload(&self) -> [f64; 2] {
        [self.m1, self.m2]
    }
}

fn negative_tolerance(m2: f64) -> f64 {
    1e-12 * m2.abs().max(1.0)
}

/// Streaming form of [`summarize_means`]; pushing values one at a time
/// gives bit-identical results to summarizing the whole slice.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccumulator {
    sum: f64,
    sum_sq: f64,
    count: u64,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, mean: f64) {
        self.sum += mean;
        self.sum_sq += mean * mean;
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> Result<SummaryStats> {
        if self.count == 0 {
            return Err(Error::Domain("cannot summarize an empty sequence of means".into()));
        }
        let n = self.count as f64;
        Ok(SummaryStats { m1: self.sum / n, m2: self.sum_sq / n, count: self.count })
    }
}

pub fn summarize_means(means: &[f64]) -> Result<SummaryStats> {
    let mut acc = MeanAccumulator::new();
    for &m in means {
        acc.push(m);
    }
    acc.finish()
}

/// Unweighted pooling across processes. Only valid for equal shares, so
/// unequal counts are rejected.
pub fn pool_stats(parts: &[SummaryStats]) -> Result<SummaryStats> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Aggregation("no summary stats to pool".into()))?;
    if let Some(bad) = parts.iter().find(|p| p.count != first.count) {
        return Err(Error::Aggregation(format!(
            "unequal shares: count {} vs {}",
            bad.count, first.count
        )));
    }
    let k = parts.len() as f64;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for p in parts {
        m1 += p.m1;
        m2 += p.m2;
    }
    Ok(SummaryStats { m1: m1 / k, m2: m2 / k, count: first.count * parts.len() as u64 })
}

/// Estimated variance of the sample mean; never negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarianceEstimate(f64);

impl VarianceEstimate {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::Domain(format!("variance must be finite and >= 0, got {value}")));
        }
        Ok(VarianceEstimate(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

pub fn variance_from_stats(stats: &SummaryStats) -> VarianceEstimate {
    let raw = stats.m2 - stats.m1 * stats.m1;
    debug_assert!(
        raw >= -negative_tolerance(stats.m2),
        "m2 - m1^2 = {raw} beyond round-off"
    );
    VarianceEstimate(raw.max(0.0))
}

/// Two-pass population variance, used as the reference route.
pub fn population_variance(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("variance of an empty sequence".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

/// Means of `resamples` bootstrap resamples of `data`, drawing indices
/// row-major from `rng` (all of resample 0, then resample 1, ...).
pub fn bootstrap_means(data: &[f64], resamples: usize, rng: &mut RngState) -> Vec<f64> {
    let d = data.len();
    (0..resamples)
        .map(|_| {
            let mut total = 0.0;
            for _ in 0..d {
                total += data[rng.index_below(d)];
            }
            total / d as f64
        })
        .collect()
}

/// Serial bootstrap: N resamples of size D from one stream seeded with
/// `config.seed`, then the population variance of the N means.
pub fn sequential_bootstrap_oracle(data: &Dataset, config: &ExperimentConfig) -> Result<VarianceEstimate> {
    config.validate()?;
    data.check_matches(config)?;
    bootstrap_variance_from_stream(data, config.num_resamples, rng_new(config.seed))
}

/// Same as [`sequential_bootstrap_oracle`] with a caller-supplied stream.
pub fn bootstrap_variance_from_stream(data: &Dataset, resamples: usize, rng: RngState) -> Result<VarianceEstimate> {
    if resamples == 0 {
        return Err(Error::Config("resample count N must be at least 1".into()));
    }
    let mut rng = rng;
    let means = bootstrap_means(data.values(), resamples, &mut rng);
    VarianceEstimate::new(population_variance(&means)?)
}

pub fn relative_error(value: f64, reference: f64) -> f64 {
    let diff = (value - reference).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / reference.abs().max(f64::MIN_POSITIVE)
    }
}
