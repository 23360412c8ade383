//! Per-(annotator, theme) inconsistency ratios against resampled
//! participant-specific baselines, and population-level statistics.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, ScaleKind};
use crate::stats::{self, SeededSampler, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioConfig {
    pub min_support: usize,
    pub resamples: usize,
    pub seed: u64,
    /// Drop the theme's own items from the history pool.
    pub exclude_theme_items: bool,
    /// Use the closed-form expectation instead of resampling.
    pub exact_baseline: bool,
}

impl Default for RatioConfig {
    fn default() -> Self {
        RatioConfig {
            min_support: 5,
            resamples: 1000,
            seed: 0,
            exclude_theme_items: false,
            exact_baseline: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioBand {
    LowerThanRandom,
    NearRandom,
    HigherThanRandom,
}

impl RatioBand {
    pub fn of(ratio: f64) -> Self {
        if ratio < 0.8 {
            RatioBand::LowerThanRandom
        } else if ratio <= 1.25 {
            RatioBand::NearRandom
        } else {
            RatioBand::HigherThanRandom
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub annotator_id: String,
    pub theme: String,
    pub n_items: usize,
    pub var_within: f64,
    pub baseline: f64,
    pub ratio: f64,
    pub band: RatioBand,
    /// Baseline was zero; ratio reported as 0.
    pub degenerate: bool,
    pub resamples_used: usize,
    pub seed: u64,
}

/// The annotator's rating per item (mean over repeated ratings), keyed by item.
pub fn item_ratings(dataset: &Dataset, annotator_id: &str) -> Result<BTreeMap<String, f64>> {
    if dataset.scale_kind() == ScaleKind::BinaryPair {
        return Err(Error::InvalidParameter("ratios need a numeric scale".into()));
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in dataset.annotator_records(annotator_id) {
        let e = sums.entry(r.item_id.clone()).or_default();
        e.0 += r.value().expect("numeric scale");
        e.1 += 1;
    }
    Ok(sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}

fn sorted_variance(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    stats::variance_population(values)
}

/// Population variance of the annotator's ratings on `items`.
pub fn variance_over_items(
    ratings: &BTreeMap<String, f64>,
    items: &BTreeSet<&str>,
    min_support: usize,
    what: &str,
) -> Result<(f64, usize)> {
    let mut values: Vec<f64> = items.iter().filter_map(|i| ratings.get(*i).copied()).collect();
    if values.len() < min_support {
        return Err(Error::InsufficientSupport {
            what: what.to_string(),
            needed: min_support,
            found: values.len(),
        });
    }
    let n = values.len();
    Ok((sorted_variance(&mut values), n))
}

pub fn within_theme_variance(dataset: &Dataset, annotator_id: &str, theme: &str) -> Result<(f64, usize)> {
    let ratings = item_ratings(dataset, annotator_id)?;
    variance_over_items(&ratings, &dataset.theme_items(theme), 5, &format!("{annotator_id}/{theme}"))
}

/// Mean population variance of `resamples` size-`k` samples drawn without
/// replacement from `history`.
pub fn resampled_baseline(history: &[f64], k: usize, resamples: usize, sampler: &mut SeededSampler) -> Result<f64> {
    if k == 0 || history.len() < k {
        return Err(Error::InsufficientSupport {
            what: "baseline history".into(),
            needed: k.max(1),
            found: history.len(),
        });
    }
    if resamples == 0 {
        return Err(Error::InvalidParameter("resamples must be positive".into()));
    }
    let mut buf = vec![0.0; k];
    let mut acc = 0.0;
    for i in 0..resamples {
        for (slot, idx) in buf.iter_mut().zip(sampler.sample_indices(history.len(), k)) {
            *slot = history[idx];
        }
        acc += (sorted_variance(&mut buf) - acc) / (i + 1) as f64;
    }
    Ok(acc)
}

/// Expected population variance of a size-`k` simple random sample drawn
/// without replacement from `history`.
pub fn exact_baseline(history: &[f64], k: usize) -> Result<f64> {
    let n = history.len();
    if k == 0 || n < k {
        return Err(Error::InsufficientSupport {
            what: "baseline history".into(),
            needed: k.max(1),
            found: n,
        });
    }
    if n == 1 {
        return Ok(0.0);
    }
    let sigma2 = stats::variance_population(history);
    Ok((k as f64 - 1.0) / k as f64 * n as f64 / (n as f64 - 1.0) * sigma2)
}

fn stream_key(annotator_id: &str, theme: &str) -> String {
    format!("ratio\u{1f}{annotator_id}\u{1f}{theme}")
}

/// Resampled baseline over the annotator's full rating history.
pub fn random_baseline(dataset: &Dataset, annotator_id: &str, k: usize, resamples: usize, seed: u64) -> Result<f64> {
    let mut history: Vec<f64> = item_ratings(dataset, annotator_id)?.into_values().collect();
    history.sort_by(f64::total_cmp);
    let mut sampler = SeededSampler::new(seed, &stream_key(annotator_id, ""));
    resampled_baseline(&history, k, resamples, &mut sampler)
}

/// Ratio for an arbitrary item group; `label` names the group in the output.
pub fn ratio_for_items(
    ratings: &BTreeMap<String, f64>,
    annotator_id: &str,
    label: &str,
    items: &BTreeSet<&str>,
    config: &RatioConfig,
) -> Result<RatioRecord> {
    let (var_within, n_items) = variance_over_items(ratings, items, config.min_support, &format!("{annotator_id}/{label}"))?;
    let mut history: Vec<f64> = ratings
        .iter()
        .filter(|(item, _)| !(config.exclude_theme_items && items.contains(item.as_str())))
        .map(|(_, v)| *v)
        .collect();
    history.sort_by(f64::total_cmp);
    let (baseline, resamples_used) = if config.exact_baseline {
        (exact_baseline(&history, n_items)?, 0)
    } else {
        let mut sampler = SeededSampler::new(config.seed, &stream_key(annotator_id, label));
        (resampled_baseline(&history, n_items, config.resamples, &mut sampler)?, config.resamples)
    };
    let degenerate = baseline <= 0.0;
    let ratio = if degenerate { 0.0 } else { var_within / baseline };
    Ok(RatioRecord {
        annotator_id: annotator_id.to_string(),
        theme: label.to_string(),
        n_items,
        var_within,
        baseline,
        ratio,
        band: RatioBand::of(ratio),
        degenerate,
        resamples_used,
        seed: config.seed,
    })
}

pub fn inconsistency_ratio(dataset: &Dataset, annotator_id: &str, theme: &str, config: &RatioConfig) -> Result<RatioRecord> {
    let ratings = item_ratings(dataset, annotator_id)?;
    ratio_for_items(&ratings, annotator_id, theme, &dataset.theme_items(theme), config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub annotator_id: String,
    pub theme: String,
    pub reason: String,
}

/// Ratios for every (annotator, theme) cell with enough support, ordered by
/// annotator then theme.
pub fn ratio_table(dataset: &Dataset, config: &RatioConfig) -> Result<(Vec<RatioRecord>, Vec<SkippedCell>)> {
    let themes: Vec<(&str, BTreeSet<&str>)> = dataset.themes().into_iter().map(|t| (t, dataset.theme_items(t))).collect();
    let annotators: Vec<&str> = dataset.annotators().collect();
    let per_annotator: Vec<Result<Vec<std::result::Result<RatioRecord, SkippedCell>>>> = annotators
        .par_iter()
        .map(|a| {
            let ratings = item_ratings(dataset, a)?;
            Ok(themes
                .iter()
                .filter(|(_, items)| items.iter().any(|i| ratings.contains_key(*i)))
                .map(|(t, items)| {
                    ratio_for_items(&ratings, a, t, items, config).map_err(|e| SkippedCell {
                        annotator_id: a.to_string(),
                        theme: t.to_string(),
                        reason: e.to_string(),
                    })
                })
                .collect())
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for cells in per_annotator {
        for cell in cells? {
            match cell {
                Ok(r) => records.push(r),
                Err(s) => skipped.push(s),
            }
        }
    }
    Ok((records, skipped))
}

/// Mean ratio per annotator over non-degenerate cells.
pub fn annotator_mean_ratios(ratios: &[RatioRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in ratios.iter().filter(|r| !r.degenerate) {
        let e = acc.entry(r.annotator_id.clone()).or_default();
        e.0 += r.ratio;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSplit {
    pub median: f64,
    pub low: BTreeSet<String>,
    pub high: BTreeSet<String>,
}

/// Splits annotators by mean ratio: the lower `floor(n/2)` (ties broken by id)
/// form the low pool, the rest the high pool.
pub fn median_split(means: &BTreeMap<String, f64>) -> Result<MedianSplit> {
    if means.len() < 2 {
        return Err(Error::InsufficientSupport {
            what: "median split".into(),
            needed: 2,
            found: means.len(),
        });
    }
    let mut order: Vec<(&String, f64)> = means.iter().map(|(k, v)| (k, *v)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let values: Vec<f64> = order.iter().map(|p| p.1).collect();
    let half = order.len() / 2;
    Ok(MedianSplit {
        median: stats::median(&values).expect("nonempty"),
        low: order[..half].iter().map(|p| p.0.clone()).collect(),
        high: order[half..].iter().map(|p| p.0.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationReport {
    pub n_annotators: usize,
    pub mean_ratio: f64,
    /// Mean annotator ratio tested against 1.
    pub one_sample: Option<TestResult>,
    pub median_ratio: f64,
    pub n_low: usize,
    pub n_high: usize,
    pub mean_rating_low: f64,
    pub mean_rating_high: f64,
    /// Low-pool minus high-pool mean rating.
    pub mean_difference: f64,
    pub median_split_welch: Option<TestResult>,
    pub median_split_pooled: Option<TestResult>,
    /// Correlation of annotator mean ratio with annotator mean rating.
    pub pearson_r: Option<f64>,
    pub notes: Vec<String>,
}

pub fn population_stats(ratios: &[RatioRecord], dataset: &Dataset) -> Result<PopulationReport> {
    let means = annotator_mean_ratios(ratios);
    let split = median_split(&means)?;
    let mut mean_rating = BTreeMap::new();
    for a in means.keys() {
        let values: Vec<f64> = dataset.annotator_records(a).filter_map(|r| r.value()).collect();
        mean_rating.insert(a.clone(), stats::mean(&values));
    }
    let mut notes = Vec::new();
    let mut keep = |what: &str, r: Result<TestResult>| match r {
        Ok(t) => Some(t),
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            None
        }
    };
    let ratio_values: Vec<f64> = means.values().copied().collect();
    let one_sample = keep("one-sample t", stats::one_sample_t(&ratio_values, 1.0));
    let low: Vec<f64> = split.low.iter().map(|a| mean_rating[a]).collect();
    let high: Vec<f64> = split.high.iter().map(|a| mean_rating[a]).collect();
    let welch = keep("median-split welch t", stats::welch_t(&low, &high));
    let pooled = keep("median-split pooled t", stats::pooled_t(&low, &high));
    let rating_values: Vec<f64> = means.keys().map(|a| mean_rating[a]).collect();
    let pearson_r = match stats::pearson_r(&ratio_values, &rating_values) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("pearson r: {e}"));
            None
        }
    };
    let (ml, mh) = (stats::mean(&low), stats::mean(&high));
    Ok(PopulationReport {
        n_annotators: means.len(),
        mean_ratio: stats::mean(&ratio_values),
        one_sample,
        median_ratio: split.median,
        n_low: low.len(),
        n_high: high.len(),
        mean_rating_low: ml,
        mean_rating_high: mh,
        mean_difference: ml - mh,
        median_split_welch: welch,
        median_split_pooled: pooled,
        pearson_r,
        notes,
    })
}
