//! Monte-Carlo verification of the top-k exclusion bounds.
//!
//! Trials are partitioned into fixed-size blocks, each drawing from its own
//! derived stream, so the estimate is identical no matter how the blocks are
//! executed or sharded.

use serde::Serialize;

use super::{closest_source, TheoryError};
use crate::numerics::RngStream;
use crate::task::GaussianTaskModel;

/// Trials per derived stream block.
const TRIAL_BLOCK: u64 = 4096;

const WILSON_Z: f64 = 1.959963984540054; // 95%

/// Wilson score interval for a binomial rate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WilsonInterval {
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl WilsonInterval {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = WILSON_Z * WILSON_Z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let spread = (WILSON_Z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Self {
            rate: p,
            lo: (center - spread).max(0.0),
            hi: (center + spread).min(1.0),
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// What the sampled inputs really come from.
#[derive(Debug, Clone)]
pub enum ExclusionTruth {
    /// In-distribution: inputs drawn from `models[index]`.
    SourceIndex(usize),
    /// Out-of-distribution: inputs drawn from `q`; the target is the
    /// KL-closest source.
    OodQ(GaussianTaskModel),
}

/// Result of one exclusion-rate estimate.
#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub target: usize,
    pub k: usize,
    pub trials: u64,
    pub exclusions: u64,
    pub interval: WilsonInterval,
}

/// Estimate `Pr(target not in top-k by score)` with `n_trials` samples from
/// the truth distribution.
pub fn monte_carlo_exclusion_rate(
    models: &[GaussianTaskModel],
    truth: &ExclusionTruth,
    k: usize,
    n_trials: u64,
    rng: &RngStream,
) -> Result<McResult, TheoryError> {
    let rates = multi_k_exclusion_rates(models, truth, &[k], n_trials, rng)?;
    Ok(rates.into_iter().next().expect("one k requested"))
}

/// Shared-trials estimate for several k at once: each trial counts how many
/// rivals outscore the target, which answers every k simultaneously.
pub fn multi_k_exclusion_rates(
    models: &[GaussianTaskModel],
    truth: &ExclusionTruth,
    ks: &[usize],
    n_trials: u64,
    rng: &RngStream,
) -> Result<Vec<McResult>, TheoryError> {
    if models.len() < 2 {
        return Err(TheoryError::TooFewModels);
    }
    if n_trials < 1000 {
        return Err(TheoryError::TooFewTrials {
            got: n_trials,
            min: 1000,
        });
    }
    let (target, sampler) = match truth {
        ExclusionTruth::SourceIndex(i) => {
            if *i >= models.len() {
                return Err(TheoryError::InvalidIndex {
                    index: *i,
                    len: models.len(),
                });
            }
            (*i, models[*i].clone())
        }
        ExclusionTruth::OodQ(q) => (closest_source(q, models)?, q.clone()),
    };
    for k in ks {
        assert!(*k >= 1, "k must be >= 1");
    }

    // beat_counts[b] = number of trials with at least b+1 rivals outscoring
    // the target.
    let max_k = *ks.iter().max().expect("nonempty ks");
    let mut at_least = vec![0u64; max_k];
    let blocks = n_trials.div_ceil(TRIAL_BLOCK);
    let mut done = 0u64;
    for block in 0..blocks {
        let mut block_rng = rng.derive(block);
        let in_block = TRIAL_BLOCK.min(n_trials - done);
        for _ in 0..in_block {
            let z = sampler.sample(&mut block_rng);
            let s_target = models[target].score(&z).map_err(to_theory)?;
            let mut beat = 0usize;
            for (j, m) in models.iter().enumerate() {
                if j == target {
                    continue;
                }
                let s = m.score(&z).map_err(to_theory)?;
                // A tie counts as a beat when the rival holds the lower
                // index, mirroring the deterministic top-k tie-break.
                if s > s_target || (s == s_target && j < target) {
                    beat += 1;
                }
            }
            for b in 0..beat.min(max_k) {
                at_least[b] += 1;
            }
        }
        done += in_block;
    }

    Ok(ks
        .iter()
        .map(|&k| {
            let exclusions = at_least[k - 1];
            McResult {
                target,
                k,
                trials: n_trials,
                exclusions,
                interval: WilsonInterval::from_counts(exclusions, n_trials),
            }
        })
        .collect())
}

fn to_theory(e: crate::task::TaskModelError) -> TheoryError {
    TheoryError::DimensionMismatch {
        context: e.to_string(),
    }
}
