//! Per-annotator consistency measures, reliability aggregation and
//! framing-effect statistics.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AnnotationRecord, Dataset, ScaleKind};
use crate::pairing::{PairKind, PromptPair};
use crate::ratio::{self, RatioConfig};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityMode {
    #[default]
    Weighted,
    Min,
    Hierarchical,
}

impl std::str::FromStr for ReliabilityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(ReliabilityMode::Weighted),
            "min" => Ok(ReliabilityMode::Min),
            "hierarchical" => Ok(ReliabilityMode::Hierarchical),
            other => Err(Error::InvalidParameter(format!("unknown reliability mode `{other}`"))),
        }
    }
}

/// Reliability aggregation settings. Weights apply to temp, frame, order, cross.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySpec {
    pub mode: ReliabilityMode,
    pub weights: [f64; 4],
    pub t_temp: f64,
    pub t_frame: f64,
}

impl Default for ReliabilitySpec {
    fn default() -> Self {
        ReliabilitySpec {
            mode: ReliabilityMode::Weighted,
            weights: [1.0; 4],
            t_temp: 0.5,
            t_frame: 0.6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    /// Consistency tolerance on the raw scale; `None` uses the scale default.
    pub tau: Option<f64>,
    /// Timestamp gap a same-session repeat must exceed to count as retest.
    pub min_gap: i64,
    /// Extra equivalent pairs for framing consistency.
    pub pairs: Vec<PromptPair>,
    pub ratio: RatioConfig,
    pub reliability: ReliabilitySpec,
}

impl DiagnosticConfig {
    pub fn tau_for(&self, scale: ScaleKind) -> f64 {
        self.tau.unwrap_or_else(|| scale.default_tau())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyProfile {
    pub annotator_id: String,
    pub temp: Option<f64>,
    pub frame: Option<f64>,
    pub order: Option<f64>,
    pub cross: Option<f64>,
    pub n_temp_pairs: usize,
    pub n_frame_pairs: usize,
    pub n_order_pairs: usize,
    pub n_cross_items: usize,
    /// Share of anchor items answered outside tau of the anchor score.
    pub artifact_rate: Option<f64>,
    pub n_anchor_items: usize,
    pub reliability: Option<f64>,
    pub tau_used: f64,
}

/// Whether two ratings agree: same choice on binary scales, within `tau` otherwise.
pub fn agrees(a: &AnnotationRecord, b: &AnnotationRecord, tau: f64) -> bool {
    match (a.value(), b.value()) {
        (Some(x), Some(y)) => (x - y).abs() <= tau,
        _ => a.score.choice() == b.score.choice(),
    }
}

fn fraction(hits: usize, n: usize, what: &str) -> Result<(f64, usize)> {
    if n == 0 {
        return Err(Error::InsufficientSupport {
            what: what.into(),
            needed: 1,
            found: 0,
        });
    }
    Ok((hits as f64 / n as f64, n))
}

fn is_retest(a: &AnnotationRecord, b: &AnnotationRecord, min_gap: i64) -> bool {
    if let (Some(x), Some(y)) = (&a.session_id, &b.session_id) {
        if x != y {
            return true;
        }
    }
    match (a.timestamp, b.timestamp) {
        (Some(x), Some(y)) => (x - y).abs() > min_gap,
        _ => false,
    }
}

/// Repeat rating pairs: same item and framing, rated at different times.
pub fn temporal_pairs<'a>(dataset: &'a Dataset, annotator_id: &str, min_gap: i64) -> Vec<(&'a AnnotationRecord, &'a AnnotationRecord)> {
    type Condition<'r> = (&'r str, Option<&'r str>, Option<&'r str>);
    let mut groups: BTreeMap<Condition, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in dataset.annotator_records(annotator_id) {
        groups
            .entry((&r.item_id, r.framing_id.as_deref(), r.condition_tag.as_deref()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for rs in groups.values() {
        for i in 0..rs.len() {
            for j in i + 1..rs.len() {
                if is_retest(rs[i], rs[j], min_gap) {
                    out.push((rs[i], rs[j]));
                }
            }
        }
    }
    out
}

pub fn temporal_consistency(dataset: &Dataset, annotator_id: &str, tau: f64, min_gap: i64) -> Result<(f64, usize)> {
    let pairs = temporal_pairs(dataset, annotator_id, min_gap);
    let hits = pairs.iter().filter(|(a, b)| agrees(a, b, tau)).count();
    fraction(hits, pairs.len(), &format!("temporal pairs for {annotator_id}"))
}

/// Equivalent-framing rating pairs: same item under different framing ids,
/// plus ratings spanning the members of each supplied equivalent pair.
pub fn framing_pairs<'a>(
    dataset: &'a Dataset,
    annotator_id: &str,
    pairs: &[PromptPair],
) -> Vec<(&'a AnnotationRecord, &'a AnnotationRecord)> {
    let mut by_item: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in dataset.annotator_records(annotator_id) {
        by_item.entry(&r.item_id).or_default().push(r);
    }
    let mut out = Vec::new();
    for rs in by_item.values() {
        for i in 0..rs.len() {
            for j in i + 1..rs.len() {
                if let (Some(x), Some(y)) = (&rs[i].framing_id, &rs[j].framing_id) {
                    if x != y {
                        out.push((rs[i], rs[j]));
                    }
                }
            }
        }
    }
    for p in pairs {
        if p.is_self_pair() || !matches!(p.kind, PairKind::Equivalent | PairKind::Identical) {
            continue;
        }
        let (Some(ra), Some(rb)) = (by_item.get(p.item_a.as_str()), by_item.get(p.item_b.as_str())) else {
            continue;
        };
        for a in ra {
            for b in rb {
                out.push((*a, *b));
            }
        }
    }
    out
}

pub fn framing_consistency(dataset: &Dataset, annotator_id: &str, tau: f64, pairs: &[PromptPair]) -> Result<(f64, usize)> {
    let fp = framing_pairs(dataset, annotator_id, pairs);
    let hits = fp.iter().filter(|(a, b)| agrees(a, b, tau)).count();
    fraction(hits, fp.len(), &format!("framing pairs for {annotator_id}"))
}

/// Fraction of AB/BA presentation pairs with the same preferred response.
pub fn order_consistency(dataset: &Dataset, annotator_id: &str) -> Result<(f64, usize)> {
    let mut by_item: BTreeMap<&str, (Vec<&AnnotationRecord>, Vec<&AnnotationRecord>)> = BTreeMap::new();
    if dataset.scale_kind() == ScaleKind::BinaryPair {
        for r in dataset.annotator_records(annotator_id) {
            let e = by_item.entry(&r.item_id).or_default();
            match r.condition_tag.as_deref() {
                Some("AB") => e.0.push(r),
                Some("BA") => e.1.push(r),
                _ => {}
            }
        }
    }
    let (mut hits, mut n) = (0, 0);
    for (ab, ba) in by_item.values() {
        for x in ab {
            for y in ba {
                n += 1;
                hits += usize::from(x.score.choice() == y.score.choice());
            }
        }
    }
    fraction(hits, n, &format!("order pairs for {annotator_id}"))
}

/// Cross-item consistency proxy `1 / (1 + ratio)` within one value dimension.
pub fn cross_item_consistency(
    dataset: &Dataset,
    annotator_id: &str,
    value_dimension: &str,
    config: &RatioConfig,
) -> Result<(f64, usize)> {
    let ratings = ratio::item_ratings(dataset, annotator_id)?;
    let items = dimension_items(dataset, value_dimension);
    let r = ratio::ratio_for_items(&ratings, annotator_id, value_dimension, &items, config)?;
    Ok((1.0 / (1.0 + r.ratio), r.n_items))
}

fn dimension_items<'a>(dataset: &'a Dataset, dimension: &str) -> BTreeSet<&'a str> {
    dataset
        .all_metadata()
        .values()
        .filter(|m| m.value_dimension.as_deref() == Some(dimension))
        .map(|m| m.item_id.as_str())
        .collect()
}

/// Failure share on items carrying an anchor score.
pub fn anchor_failure_rate(dataset: &Dataset, annotator_id: &str, tau: f64) -> Option<(f64, usize)> {
    let (mut fails, mut n) = (0, 0);
    for r in dataset.annotator_records(annotator_id) {
        let (Some(anchor), Some(v)) = (dataset.metadata(&r.item_id).and_then(|m| m.anchor_score), r.value()) else {
            continue;
        };
        n += 1;
        fails += usize::from((v - anchor).abs() > tau);
    }
    (n > 0).then(|| (fails as f64 / n as f64, n))
}

pub fn reliability(profile: &ConsistencyProfile, spec: &ReliabilitySpec) -> Result<f64> {
    let parts = [profile.temp, profile.frame, profile.order, profile.cross];
    let present: Vec<(f64, f64)> = parts
        .iter()
        .zip(spec.weights)
        .filter_map(|(s, w)| s.map(|s| (s, w)))
        .collect();
    if present.is_empty() {
        return Err(Error::InsufficientSupport {
            what: format!("reliability components for {}", profile.annotator_id),
            needed: 1,
            found: 0,
        });
    }
    if spec.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("reliability weights must be nonnegative".into()));
    }
    let weighted = || {
        let total: f64 = present.iter().map(|p| p.1).sum();
        if total == 0.0 {
            stats::mean(&present.iter().map(|p| p.0).collect::<Vec<_>>())
        } else {
            present.iter().map(|(s, w)| s * w).sum::<f64>() / total
        }
    };
    let value = match spec.mode {
        ReliabilityMode::Weighted => weighted(),
        ReliabilityMode::Min => present.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        ReliabilityMode::Hierarchical => match (profile.temp, profile.frame) {
            (Some(t), _) if t < spec.t_temp => t,
            (_, Some(f)) if f < spec.t_frame => f,
            _ => weighted(),
        },
    };
    Ok(value.clamp(0.0, 1.0))
}

pub fn profile(dataset: &Dataset, annotator_id: &str, config: &DiagnosticConfig) -> ConsistencyProfile {
    let tau = config.tau_for(dataset.scale_kind());
    let temp = temporal_consistency(dataset, annotator_id, tau, config.min_gap).ok();
    let frame = framing_consistency(dataset, annotator_id, tau, &config.pairs).ok();
    let order = order_consistency(dataset, annotator_id).ok();
    let cross = cross_component(dataset, annotator_id, config);
    let artifact = anchor_failure_rate(dataset, annotator_id, tau);
    let mut p = ConsistencyProfile {
        annotator_id: annotator_id.to_string(),
        temp: temp.map(|t| t.0),
        frame: frame.map(|t| t.0),
        order: order.map(|t| t.0),
        cross: cross.map(|t| t.0),
        n_temp_pairs: temp.map_or(0, |t| t.1),
        n_frame_pairs: frame.map_or(0, |t| t.1),
        n_order_pairs: order.map_or(0, |t| t.1),
        n_cross_items: cross.map_or(0, |t| t.1),
        artifact_rate: artifact.map(|t| t.0),
        n_anchor_items: artifact.map_or(0, |t| t.1),
        reliability: None,
        tau_used: tau,
    };
    p.reliability = reliability(&p, &config.reliability).ok();
    p
}

/// Mean cross-item proxy over every value dimension with enough support.
fn cross_component(dataset: &Dataset, annotator_id: &str, config: &DiagnosticConfig) -> Option<(f64, usize)> {
    if dataset.scale_kind() == ScaleKind::BinaryPair {
        return None;
    }
    let dimensions: BTreeSet<&str> = dataset
        .all_metadata()
        .values()
        .filter_map(|m| m.value_dimension.as_deref())
        .collect();
    let (mut sum, mut count, mut items) = (0.0, 0usize, 0usize);
    for d in dimensions {
        if let Ok((s, n)) = cross_item_consistency(dataset, annotator_id, d, &config.ratio) {
            sum += s;
            count += 1;
            items += n;
        }
    }
    (count > 0).then(|| (sum / count as f64, items))
}

/// Profiles for every annotator, ordered by annotator id.
pub fn profile_all(dataset: &Dataset, config: &DiagnosticConfig) -> Vec<ConsistencyProfile> {
    let ids: Vec<&str> = dataset.annotators().collect();
    ids.par_iter().map(|a| profile(dataset, a, config)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramingEffect {
    pub pair_id: String,
    pub per_annotator_deviation: BTreeMap<String, f64>,
    pub pair_shift: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub paired_t: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub zero_effect: bool,
    pub n_annotators: usize,
}

/// Framing shift between the two sides of a pair. Each annotator contributes
/// their mean rating on each side.
pub fn framing_effect_from_sides<'a>(
    pair_id: &str,
    side_a: impl Iterator<Item = &'a AnnotationRecord>,
    side_b: impl Iterator<Item = &'a AnnotationRecord>,
) -> Result<FramingEffect> {
    let collect = |it: &mut dyn Iterator<Item = &'a AnnotationRecord>| {
        let mut m: BTreeMap<&'a str, (f64, usize)> = BTreeMap::new();
        for r in it {
            if let Some(v) = r.common_value() {
                let e = m.entry(r.annotator_id.as_str()).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        m.into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect::<BTreeMap<_, _>>()
    };
    let (mut side_a, mut side_b) = (side_a, side_b);
    let a = collect(&mut side_a);
    let b = collect(&mut side_b);
    let shared: Vec<&str> = a.keys().filter(|k| b.contains_key(*k)).copied().collect();
    if shared.len() < 2 {
        return Err(Error::InsufficientSupport {
            what: format!("paired observations for {pair_id}"),
            needed: 2,
            found: shared.len(),
        });
    }
    let xs: Vec<f64> = shared.iter().map(|k| a[k]).collect();
    let ys: Vec<f64> = shared.iter().map(|k| b[k]).collect();
    let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x - y).collect();
    let (mean_a, mean_b) = (stats::mean(&xs), stats::mean(&ys));
    let d = stats::cohens_d(&diffs)?;
    let (t, p) = if d.zero_effect {
        (0.0, 1.0)
    } else {
        let r = stats::paired_t(&diffs)?;
        (r.statistic, r.p_value)
    };
    Ok(FramingEffect {
        pair_id: pair_id.to_string(),
        per_annotator_deviation: shared.iter().zip(&diffs).map(|(k, d)| (k.to_string(), d.abs())).collect(),
        pair_shift: (mean_a - mean_b).abs(),
        mean_a,
        mean_b,
        paired_t: t,
        p_value: p,
        cohens_d: d.value,
        zero_effect: d.zero_effect,
        n_annotators: shared.len(),
    })
}

/// Framing effect between the two items of an equivalent pair.
pub fn framing_effect_stats(dataset: &Dataset, pair: &PromptPair) -> Result<FramingEffect> {
    framing_effect_from_sides(
        &pair.pair_id,
        dataset.item_records(&pair.item_a),
        dataset.item_records(&pair.item_b),
    )
}

/// Framing effect between two framing variants of one item.
pub fn framing_effect_for_variants(dataset: &Dataset, item_id: &str, framing_a: &str, framing_b: &str) -> Result<FramingEffect> {
    framing_effect_from_sides(
        &format!("{item_id}[{framing_a}|{framing_b}]"),
        dataset.item_records(item_id).filter(|r| r.framing_id.as_deref() == Some(framing_a)),
        dataset.item_records(item_id).filter(|r| r.framing_id.as_deref() == Some(framing_b)),
    )
}

/// Framing effects for every item with exactly two framing variants, then
/// every supplied equivalent pair.
pub fn framing_effects(dataset: &Dataset, pairs: &[PromptPair]) -> Vec<Result<FramingEffect>> {
    let mut out = Vec::new();
    for item in dataset.items() {
        let variants: BTreeSet<&str> = dataset.item_records(item).filter_map(|r| r.framing_id.as_deref()).collect();
        if variants.len() == 2 {
            let mut it = variants.into_iter();
            let (a, b) = (it.next().unwrap(), it.next().unwrap());
            out.push(framing_effect_for_variants(dataset, item, a, b));
        }
    }
    for p in pairs.iter().filter(|p| !p.is_self_pair()) {
        out.push(framing_effect_stats(dataset, p));
    }
    out
}
