//! Bootstrap majority-label simulations over annotator pools split by
//! inconsistency ratio.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::ratio::{annotator_mean_ratios, median_split, RatioRecord};
use crate::stats::SeededSampler;

/// Majority vote after binarizing each rating at `>= harm_threshold`.
pub fn majority_label(ratings: &[f64], harm_threshold: f64) -> Result<bool> {
    if ratings.is_empty() || ratings.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "majority vote needs an odd, nonzero sample size (got {})",
            ratings.len()
        )));
    }
    let harmful = ratings.iter().filter(|r| **r >= harm_threshold).count();
    Ok(2 * harmful > ratings.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolName {
    All,
    LowInconsistency,
    HighInconsistency,
}

impl PoolName {
    fn key(self) -> &'static str {
        match self {
            PoolName::All => "all",
            PoolName::LowInconsistency => "low",
            PoolName::HighInconsistency => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub name: PoolName,
    pub membership: BTreeSet<String>,
    pub split_statistic: f64,
}

/// All, low and high pools from the annotator-level mean ratios.
pub fn build_pools(ratios: &[RatioRecord]) -> Result<[PoolSpec; 3]> {
    let split = median_split(&annotator_mean_ratios(ratios))?;
    let all: BTreeSet<String> = split.low.union(&split.high).cloned().collect();
    Ok([
        PoolSpec {
            name: PoolName::All,
            membership: all,
            split_statistic: split.median,
        },
        PoolSpec {
            name: PoolName::LowInconsistency,
            membership: split.low,
            split_statistic: split.median,
        },
        PoolSpec {
            name: PoolName::HighInconsistency,
            membership: split.high,
            split_statistic: split.median,
        },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipConfig {
    pub iterations: usize,
    pub sample_size: usize,
    pub harm_threshold: f64,
    pub seed: u64,
}

impl Default for FlipConfig {
    fn default() -> Self {
        FlipConfig {
            iterations: 1000,
            sample_size: 5,
            harm_threshold: 50.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLabels {
    pub item_id: String,
    pub all: bool,
    pub low: bool,
    pub high: bool,
    /// Share of iterations with a harmful majority, per pool.
    pub harmful_share: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub per_prompt: Vec<PromptLabels>,
    pub skipped: Vec<String>,
    pub n_eligible: usize,
    pub n_flips_low: usize,
    pub n_flips_high: usize,
    /// Prompts flipping in at least one restricted pool.
    pub n_flips_any: usize,
    pub pct_flips: f64,
    pub pool_sizes: [usize; 3],
    pub median_ratio: f64,
    pub iterations: usize,
    pub sample_size: usize,
    pub harm_threshold: f64,
    pub seed: u64,
}

/// Modal majority label over `iterations` draws of `sample_size` raters
/// without replacement; ties resolve to not harmful.
pub fn modal_label(ratings: &[f64], config: &FlipConfig, sampler: &mut SeededSampler) -> Result<(bool, f64)> {
    if ratings.len() < config.sample_size {
        return Err(Error::InsufficientSupport {
            what: "pool raters".into(),
            needed: config.sample_size,
            found: ratings.len(),
        });
    }
    let mut draw = vec![0.0; config.sample_size];
    let mut harmful = 0usize;
    for _ in 0..config.iterations {
        for (slot, i) in draw.iter_mut().zip(sampler.sample_indices(ratings.len(), config.sample_size)) {
            *slot = ratings[i];
        }
        harmful += usize::from(majority_label(&draw, config.harm_threshold)?);
    }
    Ok((2 * harmful > config.iterations, harmful as f64 / config.iterations as f64))
}

pub fn pool_flip_simulation(dataset: &Dataset, ratios: &[RatioRecord], config: &FlipConfig) -> Result<FlipReport> {
    if config.iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be positive".into()));
    }
    if config.sample_size == 0 || config.sample_size.is_multiple_of(2) {
        return Err(Error::InvalidParameter("sample size must be odd".into()));
    }
    let pools = build_pools(ratios)?;
    if let Some(p) = pools.iter().find(|p| p.membership.is_empty()) {
        return Err(Error::InvalidParameter(format!("pool {} is empty", p.name.key())));
    }
    let items: Vec<&str> = dataset.items().collect();
    let results: Vec<std::result::Result<PromptLabels, String>> = items
        .par_iter()
        .map(|item| {
            let mut per_rater: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
            for r in dataset.item_records(item) {
                if let Some(v) = r.common_value() {
                    let e = per_rater.entry(r.annotator_id.as_str()).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
            }
            let mut labels = [false; 3];
            let mut shares = [0.0; 3];
            for (k, pool) in pools.iter().enumerate() {
                let ratings: Vec<f64> = per_rater
                    .iter()
                    .filter(|(a, _)| pool.membership.contains(**a))
                    .map(|(_, (s, n))| s / *n as f64)
                    .collect();
                if ratings.len() < config.sample_size {
                    return Err(item.to_string());
                }
                let mut sampler = SeededSampler::new(config.seed, &format!("flip\u{1f}{item}\u{1f}{}", pool.name.key()));
                let (label, share) = modal_label(&ratings, config, &mut sampler).map_err(|_| item.to_string())?;
                labels[k] = label;
                shares[k] = share;
            }
            Ok(PromptLabels {
                item_id: item.to_string(),
                all: labels[0],
                low: labels[1],
                high: labels[2],
                harmful_share: shares,
            })
        })
        .collect();
    let mut per_prompt = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(p) => per_prompt.push(p),
            Err(item) => skipped.push(item),
        }
    }
    if per_prompt.is_empty() {
        return Err(Error::InsufficientSupport {
            what: "prompts with enough raters in every pool".into(),
            needed: 1,
            found: 0,
        });
    }
    let n_flips_low = per_prompt.iter().filter(|p| p.low != p.all).count();
    let n_flips_high = per_prompt.iter().filter(|p| p.high != p.all).count();
    let n_flips_any = per_prompt.iter().filter(|p| p.low != p.all || p.high != p.all).count();
    Ok(FlipReport {
        n_eligible: per_prompt.len(),
        pct_flips: 100.0 * n_flips_any as f64 / per_prompt.len() as f64,
        per_prompt,
        skipped,
        n_flips_low,
        n_flips_high,
        n_flips_any,
        pool_sizes: [pools[0].membership.len(), pools[1].membership.len(), pools[2].membership.len()],
        median_ratio: pools[0].split_statistic,
        iterations: config.iterations,
        sample_size: config.sample_size,
        harm_threshold: config.harm_threshold,
        seed: config.seed,
    })
}
