//! Record weights from reliability, item reliability, variance
//! decomposition and weighted export.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{agrees, temporal_pairs, ConsistencyProfile};
use crate::error::{Error, Result};
use crate::ingest::{AnnotationRecord, Dataset};
use crate::stats;

/// Mean over annotators with a repeat on the item of their share of
/// consistent repeat pairs.
pub fn item_reliability(dataset: &Dataset, item_id: &str, tau: f64, min_gap: i64) -> Result<f64> {
    item_reliability_table(dataset, tau, min_gap)
        .remove(item_id)
        .ok_or_else(|| Error::NotFound(format!("no repeats on item `{item_id}`")))
}

pub fn item_reliability_table(dataset: &Dataset, tau: f64, min_gap: i64) -> BTreeMap<String, f64> {
    let mut per_item: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for a in dataset.annotators() {
        let mut per_annotator: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (x, y) in temporal_pairs(dataset, a, min_gap) {
            let e = per_annotator.entry(x.item_id.as_str()).or_default();
            e.0 += usize::from(agrees(x, y, tau));
            e.1 += 1;
        }
        for (item, (hits, n)) in per_annotator {
            per_item.entry(item).or_default().push(hits as f64 / n as f64);
        }
    }
    per_item.into_iter().map(|(k, v)| (k.to_string(), stats::mean(&v))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Binary,
    #[default]
    Linear,
    Sigmoid,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(WeightMode::Binary),
            "linear" => Ok(WeightMode::Linear),
            "sigmoid" => Ok(WeightMode::Sigmoid),
            other => Err(Error::InvalidParameter(format!("unknown weight mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    /// Binary cut applied to each available reliability.
    pub threshold: f64,
    pub midpoint: f64,
    pub steepness: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams {
            threshold: 0.5,
            midpoint: 0.5,
            steepness: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordWeight {
    pub record_id: String,
    pub annotator_id: String,
    pub item_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub weight_mode: WeightMode,
    pub records: Vec<RecordWeight>,
    pub annotator_reliability: BTreeMap<String, f64>,
    pub item_reliability: BTreeMap<String, f64>,
}

impl WeightTable {
    pub fn weight_of(&self, record_id: &str) -> Option<f64> {
        self.records.iter().find(|r| r.record_id == record_id).map(|r| r.weight)
    }
}

/// Weight from the available reliabilities; a missing component counts as 1.
pub fn combine(mode: WeightMode, params: &WeightParams, annotator: Option<f64>, item: Option<f64>) -> f64 {
    let w = match mode {
        WeightMode::Binary => {
            let pass = |r: Option<f64>| r.is_none_or(|r| r >= params.threshold);
            if pass(annotator) && pass(item) {
                1.0
            } else {
                0.0
            }
        }
        WeightMode::Linear => annotator.unwrap_or(1.0) * item.unwrap_or(1.0),
        WeightMode::Sigmoid => {
            let x = annotator.unwrap_or(1.0) * item.unwrap_or(1.0);
            1.0 / (1.0 + (-params.steepness * (x - params.midpoint)).exp())
        }
    };
    w.clamp(0.0, 1.0)
}

pub fn build_weights(
    dataset: &Dataset,
    profiles: &[ConsistencyProfile],
    item_reliability: BTreeMap<String, f64>,
    mode: WeightMode,
    params: &WeightParams,
) -> Result<WeightTable> {
    if !(0.0..=1.0).contains(&params.threshold) || !(0.0..=1.0).contains(&params.midpoint) {
        return Err(Error::InvalidParameter("threshold and midpoint must lie in [0, 1]".into()));
    }
    if !(params.steepness > 0.0 && params.steepness.is_finite()) {
        return Err(Error::InvalidParameter("steepness must be positive".into()));
    }
    let annotator_reliability: BTreeMap<String, f64> = profiles
        .iter()
        .filter_map(|p| p.reliability.map(|r| (p.annotator_id.clone(), r)))
        .collect();
    let records = dataset
        .records()
        .iter()
        .map(|r| RecordWeight {
            record_id: r.record_id.clone(),
            annotator_id: r.annotator_id.clone(),
            item_id: r.item_id.clone(),
            weight: combine(
                mode,
                params,
                annotator_reliability.get(&r.annotator_id).copied(),
                item_reliability.get(&r.item_id).copied(),
            ),
        })
        .collect();
    Ok(WeightTable {
        weight_mode: mode,
        records,
        annotator_reliability,
        item_reliability,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub var_total: f64,
    pub var_artifact: f64,
    pub var_preference: f64,
    /// `var_total - var_artifact` before flooring at zero.
    pub var_preference_raw: f64,
    pub floored: bool,
    pub n_repeat_pairs: usize,
}

/// Splits total rating variance (0-100 scale) into test-retest error variance,
/// half the mean squared repeat difference, and the remainder.
pub fn variance_decomposition(dataset: &Dataset, min_gap: i64) -> Result<VarianceDecomposition> {
    let mut sq = Vec::new();
    for a in dataset.annotators() {
        for (x, y) in temporal_pairs(dataset, a, min_gap) {
            if let (Some(u), Some(v)) = (x.common_value(), y.common_value()) {
                sq.push((u - v).powi(2));
            }
        }
    }
    if sq.is_empty() {
        return Err(Error::InsufficientSupport {
            what: "repeat pairs".into(),
            needed: 1,
            found: 0,
        });
    }
    let all: Vec<f64> = dataset.records().iter().filter_map(|r| r.common_value()).collect();
    let var_total = stats::variance_population(&all);
    let var_artifact = 0.5 * stats::mean(&sq);
    let raw = var_total - var_artifact;
    Ok(VarianceDecomposition {
        var_total,
        var_artifact,
        var_preference: raw.max(0.0),
        var_preference_raw: raw,
        floored: raw < 0.0,
        n_repeat_pairs: sq.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExportPolicy {
    #[default]
    Weight,
    Filter,
    Both,
}

impl std::str::FromStr for ExportPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weight" => Ok(ExportPolicy::Weight),
            "filter" => Ok(ExportPolicy::Filter),
            "both" => Ok(ExportPolicy::Both),
            other => Err(Error::InvalidParameter(format!("unknown export policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub input: usize,
    pub retained: usize,
    pub dropped: usize,
}

#[derive(Serialize)]
struct WeightedRecord<'a> {
    #[serde(flatten)]
    record: &'a AnnotationRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

/// Writes the dataset as JSONL under `policy`.
pub fn write_weighted(mut w: impl Write, dataset: &Dataset, weights: &WeightTable, policy: ExportPolicy) -> Result<ExportSummary> {
    let lookup: BTreeMap<&str, f64> = weights.records.iter().map(|r| (r.record_id.as_str(), r.weight)).collect();
    let mut retained = 0;
    for r in dataset.records() {
        let weight = lookup.get(r.record_id.as_str()).copied().unwrap_or(1.0);
        if policy != ExportPolicy::Weight && weight == 0.0 {
            continue;
        }
        let row = WeightedRecord {
            record: r,
            weight: (policy != ExportPolicy::Filter).then_some(weight),
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        retained += 1;
    }
    let input = dataset.records().len();
    Ok(ExportSummary {
        input,
        retained,
        dropped: input - retained,
    })
}

pub fn export_weighted(dataset: &Dataset, weights: &WeightTable, policy: ExportPolicy, path: impl AsRef<Path>) -> Result<ExportSummary> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let summary = write_weighted(&mut w, dataset, weights, policy)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::testutil::{in_session, rec};

    #[test]
    fn item_reliability_counts_annotators() {
        let ds = Dataset::new(vec![
            in_session(rec("1", "a", "x", 50.0), "s1"),
            in_session(rec("2", "a", "x", 55.0), "s2"),
            in_session(rec("3", "b", "x", 10.0), "s1"),
            in_session(rec("4", "b", "x", 90.0), "s2"),
            rec("5", "a", "y", 20.0),
        ])
        .unwrap();
        assert_eq!(item_reliability(&ds, "x", 15.0, 0).unwrap(), 0.5);
        assert!(item_reliability(&ds, "y", 15.0, 0).is_err());
    }

    #[test]
    fn combine_examples() {
        let p = WeightParams::default();
        assert_eq!(combine(WeightMode::Linear, &p, Some(1.0), None), 1.0);
        assert_eq!(combine(WeightMode::Linear, &p, Some(0.8), Some(0.5)), 0.4);
        assert_eq!(combine(WeightMode::Binary, &p, Some(0.4), None), 0.0);
        assert_eq!(combine(WeightMode::Binary, &p, Some(0.5), Some(0.9)), 1.0);
        assert_eq!(combine(WeightMode::Sigmoid, &p, Some(0.5), None), 0.5);
    }

    #[test]
    fn decomposition_examples() {
        let ds = Dataset::new(vec![
            in_session(rec("1", "a", "x", 60.0), "s1"),
            in_session(rec("2", "a", "x", 70.0), "s2"),
        ])
        .unwrap();
        let d = variance_decomposition(&ds, 0).unwrap();
        assert_eq!(d.var_artifact, 50.0);
        assert_eq!(d.var_total, 25.0);
        assert!(d.floored);
        assert_eq!(d.var_preference, 0.0);

        let mut records = vec![
            in_session(rec("1", "a", "x", 0.0), "s1"),
            in_session(rec("2", "a", "x", 100.0), "s2"),
        ];
        records.extend((0..6).map(|i| rec(&format!("m{i}"), "b", &format!("y{i}"), 50.0)));
        let d = variance_decomposition(&Dataset::new(records).unwrap(), 0).unwrap();
        assert_eq!(d.var_artifact, 5000.0);
        assert_eq!(d.var_preference, 0.0);
    }

    #[test]
    fn export_conserves_records() {
        let ds = Dataset::new(vec![rec("1", "a", "x", 10.0), rec("2", "b", "x", 20.0)]).unwrap();
        let profiles = vec![ConsistencyProfile {
            annotator_id: "a".into(),
            temp: Some(0.2),
            frame: None,
            order: None,
            cross: None,
            n_temp_pairs: 1,
            n_frame_pairs: 0,
            n_order_pairs: 0,
            n_cross_items: 0,
            artifact_rate: None,
            n_anchor_items: 0,
            reliability: Some(0.2),
            tau_used: 15.0,
        }];
        let wt = build_weights(&ds, &profiles, BTreeMap::new(), WeightMode::Binary, &WeightParams::default()).unwrap();
        for (policy, retained) in [(ExportPolicy::Weight, 2), (ExportPolicy::Filter, 1), (ExportPolicy::Both, 1)] {
            let mut out = Vec::new();
            let s = write_weighted(&mut out, &ds, &wt, policy).unwrap();
            assert_eq!((s.retained, s.retained + s.dropped), (retained, 2));
            let text = String::from_utf8(out).unwrap();
            assert_eq!(text.lines().count(), retained);
            assert_eq!(text.contains("\"weight\""), policy != ExportPolicy::Filter);
        }
    }
}
