//! False-negative posterior weighting and negative sampling.
//!
//! Given the two similarity distributions and a Bernoulli matching prior, the
//! posterior probability that a candidate with similarity `s` actually
//! matches the anchor is
//!
//! ```text
//! P(match | s) = p * f+(s) / (p * f+(s) + (1 - p) * f-(s))
//! ```
//!
//! Sampling weight is `exp(-posterior)`, except for easy negatives (posterior
//! at or below lambda), whose weight is cut down to
//! `exp(-alpha * (s_neg - s_pos)^2)` so they rarely enter the triplet.

use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::Snapshot;

/// Which negative-selection strategy the trainer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Posterior-weighted sampling with the cut-down rule.
    Fne,
    /// Argmax similarity (classic hard negative mining).
    Hardest,
    /// Uniform over the pool.
    Uniform,
    /// Uniform among candidates less similar than the positive, falling back
    /// to hardest when none exist.
    SemiHard,
}

impl SamplingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplingMode::Fne => "fne",
            SamplingMode::Hardest => "hardest",
            SamplingMode::Uniform => "uniform",
            SamplingMode::SemiHard => "semi-hard",
        }
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fne" => Ok(SamplingMode::Fne),
            "hardest" => Ok(SamplingMode::Hardest),
            "uniform" => Ok(SamplingMode::Uniform),
            "semi-hard" | "semihard" => Ok(SamplingMode::SemiHard),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown sampling mode `{other}`"
            ))),
        }
    }
}

impl core::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampler hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FneConfig {
    /// Prior probability that an arbitrary candidate matches the anchor.
    pub prior_p: f64,
    /// Cut-down density for easy negatives.
    pub alpha: f64,
    /// Posterior threshold below which the cut-down branch applies.
    pub lambda: f64,
    pub mode: SamplingMode,
}

impl Default for FneConfig {
    fn default() -> Self {
        FneConfig { prior_p: 1e-4, alpha: 0.5, lambda: 0.01, mode: SamplingMode::Fne }
    }
}

impl FneConfig {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(String::from(msg)))
            }
        }
        check(
            self.prior_p > 0.0 && self.prior_p < 1.0,
            "prior_p must be in (0, 1)",
        )?;
        check(self.alpha > 0.0 && self.alpha.is_finite(), "alpha must be positive")?;
        check(
            self.lambda > 0.0 && self.lambda < 1.0,
            "lambda must be in (0, 1)",
        )
    }
}

/// The negatives available to one anchor: ids, their similarities to the
/// anchor, and the anchor's positive similarity. Annotated positives must
/// already be excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub ids: Vec<u64>,
    pub similarities: Vec<f64>,
    pub positive_similarity: f64,
}

impl CandidatePool {
    pub fn new(ids: Vec<u64>, similarities: Vec<f64>, positive_similarity: f64) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyPool);
        }
        if ids.len() != similarities.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: similarities.len(),
            });
        }
        Ok(CandidatePool { ids, similarities, positive_similarity })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Posteriors, weights, and the cut-down mask for one pool.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub posterior: Vec<f64>,
    pub weight: Vec<f64>,
    pub cut_down_mask: Vec<bool>,
}

fn ln_normal_pdf(s: f64, mu: f64, sigma: f64) -> f64 {
    let z = (s - mu) / sigma;
    -0.5 * z * z - libm::log(sigma) - 0.5 * libm::log(2.0 * core::f64::consts::PI)
}

/// Posterior probability that a candidate with similarity `s` matches the
/// anchor. Computed in log space so extreme similarities never underflow to
/// 0/0: the result is `sigmoid(logit(p) + ln f+(s) - ln f-(s))`.
pub fn posterior(
    s: f64,
    mu_pos: f64,
    sigma_pos: f64,
    mu_neg: f64,
    sigma_neg: f64,
    prior_p: f64,
) -> Result<f64> {
    for (i, v) in [s, mu_pos, sigma_pos, mu_neg, sigma_neg, prior_p]
        .iter()
        .enumerate()
    {
        if !v.is_finite() {
            return Err(Error::NonFinite { context: "posterior", index: i });
        }
    }
    if sigma_pos <= 0.0 || sigma_neg <= 0.0 {
        return Err(Error::InvalidConfig(String::from("sigma must be positive")));
    }
    if prior_p <= 0.0 || prior_p >= 1.0 {
        return Err(Error::InvalidConfig(String::from("prior_p must be in (0, 1)")));
    }
    let logit = libm::log(prior_p) - libm::log(1.0 - prior_p)
        + ln_normal_pdf(s, mu_pos, sigma_pos)
        - ln_normal_pdf(s, mu_neg, sigma_neg);
    // Numerically stable logistic.
    let p = if logit >= 0.0 {
        1.0 / (1.0 + libm::exp(-logit))
    } else {
        let e = libm::exp(logit);
        e / (1.0 + e)
    };
    Ok(p)
}

/// Sampling weight before the cut-down rule: `exp(-posterior)`.
pub fn base_weight(posterior: f64) -> f64 {
    libm::exp(-posterior)
}

/// Cut-down weight for easy negatives: `exp(-alpha * (s_neg - s_pos)^2)`.
pub fn cutdown_weight(s_neg: f64, s_pos: f64, alpha: f64) -> f64 {
    let gap = s_neg - s_pos;
    libm::exp(-alpha * gap * gap)
}

/// Per-candidate posteriors and combined sampling weights. Candidates whose
/// posterior is at or below lambda take the cut-down branch.
pub fn combined_weights(
    pool: &CandidatePool,
    snapshot: &Snapshot,
    config: &FneConfig,
) -> Result<WeightReport> {
    config.validate()?;
    if !snapshot.ready {
        return Err(Error::TrackerNotReady);
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let n = pool.len();
    let mut posteriors = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for &s in &pool.similarities {
        let p = posterior(
            s,
            snapshot.mu_pos,
            snapshot.sigma_pos,
            snapshot.mu_neg,
            snapshot.sigma_neg,
            config.prior_p,
        )?;
        let cut = p <= config.lambda;
        let w = if cut {
            cutdown_weight(s, pool.positive_similarity, config.alpha)
        } else {
            base_weight(p)
        };
        posteriors.push(p);
        weights.push(w);
        mask.push(cut);
    }
    Ok(WeightReport { posterior: posteriors, weight: weights, cut_down_mask: mask })
}

/// One candidate chosen from a pool: its pool index, id, and similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub id: u64,
    pub similarity: f64,
}

fn select(pool: &CandidatePool, index: usize) -> Selection {
    Selection { index, id: pool.ids[index], similarity: pool.similarities[index] }
}

/// One categorical draw proportional to the report's weights.
pub fn sample_negative<R: Rng + ?Sized>(
    report: &WeightReport,
    pool: &CandidatePool,
    rng: &mut R,
) -> Result<Selection> {
    if pool.len() != report.weight.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            found: report.weight.len(),
        });
    }
    let total: f64 = report.weight.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeights);
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in report.weight.iter().enumerate() {
        acc += w;
        if target < acc {
            return Ok(select(pool, i));
        }
    }
    // Rounding pushed the target past the accumulated total.
    let last = report
        .weight
        .iter()
        .rposition(|w| *w > 0.0)
        .ok_or(Error::ZeroWeights)?;
    Ok(select(pool, last))
}

/// Baseline selection strategies used for comparison against FNE.
pub fn baseline_select<R: Rng + ?Sized>(
    pool: &CandidatePool,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Selection> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let hardest = || {
        let mut best = 0;
        for (i, s) in pool.similarities.iter().enumerate() {
            if *s > pool.similarities[best] {
                best = i;
            }
        }
        best
    };
    let index = match mode {
        SamplingMode::Hardest => hardest(),
        SamplingMode::Uniform => rng.random_range(0..pool.len()),
        SamplingMode::SemiHard => {
            let eligible: Vec<usize> = pool
                .similarities
                .iter()
                .enumerate()
                .filter(|(_, s)| **s < pool.positive_similarity)
                .map(|(i, _)| i)
                .collect();
            if eligible.is_empty() {
                hardest()
            } else {
                eligible[rng.random_range(0..eligible.len())]
            }
        }
        SamplingMode::Fne => {
            return Err(Error::InvalidConfig(String::from(
                "fne mode requires combined_weights + sample_negative",
            )))
        }
    };
    Ok(select(pool, index))
}
