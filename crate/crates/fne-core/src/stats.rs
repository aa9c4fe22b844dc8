//! Streaming Gaussian models of matched-pair and mismatched-pair similarity.
//!
//! The matched-pair side only admits a similarity when it beats every
//! same-anchor mismatched similarity in the step, which keeps early noisy
//! positives from corrupting the distribution estimate. Variance uses the
//! population convention (divide by count).

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Single-pass (Welford) mean/variance accumulator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl GaussianStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild from checkpointed raw state.
    pub fn from_parts(count: u64, mean: f64, m2: f64) -> Self {
        GaussianStats { count, mean, m2 }
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Population variance (m2 / count); defined for count >= 2.
    pub fn variance(&self) -> Option<f64> {
        if self.count >= 2 {
            Some(self.m2 / self.count as f64)
        } else {
            None
        }
    }

    pub fn std_dev(&self) -> Option<f64> {
        self.variance().map(libm::sqrt)
    }

    /// Normal density at `s` with the tracked mean and `max(sigma, sigma_floor)`.
    pub fn pdf(&self, s: f64, sigma_floor: f64) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::TrackerNotReady);
        }
        let sigma = self.std_dev().unwrap().max(sigma_floor);
        Ok(normal_pdf(s, self.mean, sigma))
    }
}

pub fn normal_pdf(s: f64, mu: f64, sigma: f64) -> f64 {
    let z = (s - mu) / sigma;
    libm::exp(-0.5 * z * z) / (sigma * libm::sqrt(2.0 * core::f64::consts::PI))
}

/// A consistent view of the tracker parameters. Reported sigmas are floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub mu_pos: f64,
    pub sigma_pos: f64,
    pub mu_neg: f64,
    pub sigma_neg: f64,
    pub ready: bool,
}

/// Streaming fits of the matched and mismatched similarity distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTracker {
    positive: GaussianStats,
    negative: GaussianStats,
    min_ready_count: u64,
    sigma_floor: f64,
}

impl DistributionTracker {
    pub fn new(min_ready_count: u64, sigma_floor: f64) -> Self {
        DistributionTracker {
            positive: GaussianStats::new(),
            negative: GaussianStats::new(),
            min_ready_count,
            sigma_floor,
        }
    }

    pub fn from_parts(
        positive: GaussianStats,
        negative: GaussianStats,
        min_ready_count: u64,
        sigma_floor: f64,
    ) -> Self {
        DistributionTracker { positive, negative, min_ready_count, sigma_floor }
    }

    pub fn positive(&self) -> &GaussianStats {
        &self.positive
    }

    pub fn negative(&self) -> &GaussianStats {
        &self.negative
    }

    pub fn min_ready_count(&self) -> u64 {
        self.min_ready_count
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn ready(&self) -> bool {
        self.positive.count >= self.min_ready_count
            && self.negative.count >= self.min_ready_count
    }

    /// Drop all accumulated statistics (called at epoch boundaries so the
    /// fits track the evolving encoder).
    pub fn reset(&mut self) {
        self.positive = GaussianStats::new();
        self.negative = GaussianStats::new();
    }

    /// Feed one step of similarities. `positive_sims[i]` is anchor i's
    /// matched similarity and `negative_sims[i]` holds all of its candidate
    /// negative similarities. The matched similarity is admitted only when
    /// strictly greater than every same-anchor negative; negatives are
    /// admitted unconditionally.
    pub fn observe_batch(
        &mut self,
        positive_sims: &[f64],
        negative_sims: &[Vec<f64>],
    ) -> Result<()> {
        if positive_sims.len() != negative_sims.len() {
            return Err(Error::DimensionMismatch {
                expected: positive_sims.len(),
                found: negative_sims.len(),
            });
        }
        for (i, (pos, negs)) in positive_sims.iter().zip(negative_sims).enumerate() {
            if !pos.is_finite() || negs.iter().any(|n| !n.is_finite()) {
                return Err(Error::NonFinite { context: "observe_batch", index: i });
            }
        }
        for (pos, negs) in positive_sims.iter().zip(negative_sims) {
            if negs.iter().all(|n| pos > n) {
                self.positive.push(*pos);
            }
            for n in negs {
                self.negative.push(*n);
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let sigma = |stats: &GaussianStats| {
            stats.std_dev().unwrap_or(0.0).max(self.sigma_floor)
        };
        Snapshot {
            mu_pos: self.positive.mean,
            sigma_pos: sigma(&self.positive),
            mu_neg: self.negative.mean,
            sigma_neg: sigma(&self.negative),
            ready: self.ready(),
        }
    }
}
