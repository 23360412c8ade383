//! Similar-pair discovery, score-inconsistency flags, prevalence summaries
//! and the sequential test-retest filtering ladder.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{is_header_line, AnnotationRecord, Dataset, ScaleKind};

/// Exact all-pairs search is limited to this many items; larger corpora must
/// supply candidate pairs.
pub const MAX_EXACT_ITEMS: usize = 20_000;

/// Similarity at or above which two prompts count as identical.
pub const IDENTICAL_SIMILARITY: f64 = 1.0 - 1e-9;

/// Response similarity at or above which two responses count as identical.
pub const IDENTICAL_RESPONSE_SIMILARITY: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Identical,
    Equivalent,
    Directional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AMore,
    BMore,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPair {
    pub pair_id: String,
    pub item_a: String,
    pub item_b: String,
    pub similarity: f64,
    pub kind: PairKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_tag: Option<String>,
}

impl PromptPair {
    pub fn from_similarity(item_a: &str, item_b: &str, similarity: f64) -> Self {
        let (a, b) = if item_a <= item_b { (item_a, item_b) } else { (item_b, item_a) };
        let kind = if similarity >= IDENTICAL_SIMILARITY {
            PairKind::Identical
        } else {
            PairKind::Equivalent
        };
        PromptPair {
            pair_id: format!("{a}~{b}"),
            item_a: a.to_string(),
            item_b: b.to_string(),
            similarity,
            kind,
            expected_direction: (kind == PairKind::Equivalent).then_some(Direction::Equal),
            rationale_tag: None,
        }
    }

    /// A self-pair standing for repeated ratings of one item.
    pub fn repeat_of(item: &str) -> Self {
        PromptPair {
            pair_id: format!("{item}~{item}"),
            item_a: item.to_string(),
            item_b: item.to_string(),
            similarity: 1.0,
            kind: PairKind::Identical,
            expected_direction: None,
            rationale_tag: Some("repeat".into()),
        }
    }

    pub fn is_self_pair(&self) -> bool {
        self.item_a == self.item_b
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&self.similarity) {
            return Err(format!("{}: similarity {} outside [-1, 1]", self.pair_id, self.similarity));
        }
        match (self.kind, self.expected_direction) {
            (PairKind::Identical, _) if (self.similarity - 1.0).abs() > 1e-9 => Err(format!(
                "{}: identical pair with similarity {}",
                self.pair_id, self.similarity
            )),
            (PairKind::Directional, Some(Direction::AMore | Direction::BMore)) => Ok(()),
            (PairKind::Directional, _) => Err(format!("{}: directional pair needs a_more or b_more", self.pair_id)),
            (PairKind::Equivalent, None | Some(Direction::Equal)) => Ok(()),
            (PairKind::Identical, None | Some(Direction::Equal)) => Ok(()),
            (_, Some(d)) => Err(format!("{}: {d:?} given for {:?} pair", self.pair_id, self.kind)),
        }
    }
}

/// Loads a pair catalog (JSONL of [`PromptPair`]).
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<PromptPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || is_header_line(&line) {
            continue;
        }
        let pair: PromptPair = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        pair.check().map_err(|message| Error::Malformed { line: i + 1, message })?;
        out.push(pair);
    }
    Ok(out)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn annotators_by_item(dataset: &Dataset) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut map: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in dataset.records() {
        map.entry(r.item_id.as_str()).or_default().insert(r.annotator_id.as_str());
    }
    map
}

/// All unordered pairs of distinct rated items whose prompt embeddings reach
/// `sim_threshold`, in canonical `(item_a, item_b)` order.
pub fn find_similar_pairs(dataset: &Dataset, sim_threshold: f64, same_annotator: bool) -> Result<Vec<PromptPair>> {
    let table = dataset.embeddings().ok_or(Error::MissingEmbeddings)?;
    let items: Vec<&str> = dataset.items().filter(|i| table.get(i).is_some()).collect();
    if items.len() > MAX_EXACT_ITEMS {
        return Err(Error::InvalidParameter(format!(
            "{} items exceed the exact search limit of {MAX_EXACT_ITEMS}; supply candidate pairs",
            items.len()
        )));
    }
    let raters = annotators_by_item(dataset);
    let vectors: Vec<&[f64]> = items.iter().map(|i| table.get(i).expect("filtered")).collect();
    let norms: Vec<f64> = vectors.iter().map(|v| norm(v)).collect();
    if let Some(i) = norms.iter().position(|n| *n == 0.0) {
        return Err(Error::InvalidParameter(format!("item `{}` has a zero embedding", items[i])));
    }

    let mut pairs: Vec<PromptPair> = (0..items.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let raters = &raters;
            let (items, vectors, norms) = (&items, &vectors, &norms);
            (i + 1..items.len()).filter_map(move |j| {
                if same_annotator && raters[items[i]].is_disjoint(&raters[items[j]]) {
                    return None;
                }
                let dot: f64 = vectors[i].iter().zip(vectors[j]).map(|(a, b)| a * b).sum();
                let sim = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
                (sim >= sim_threshold).then(|| PromptPair::from_similarity(items[i], items[j], sim))
            })
        })
        .collect();
    pairs.sort_by(|a, b| (&a.item_a, &a.item_b).cmp(&(&b.item_a, &b.item_b)));
    Ok(pairs)
}

/// Like [`find_similar_pairs`], restricted to precomputed candidate pairs.
pub fn find_similar_pairs_among(
    dataset: &Dataset,
    candidates: &[(String, String)],
    sim_threshold: f64,
    same_annotator: bool,
) -> Result<Vec<PromptPair>> {
    let table = dataset.embeddings().ok_or(Error::MissingEmbeddings)?;
    let raters = annotators_by_item(dataset);
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (a, b) in candidates {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if a == b || !seen.insert((a.clone(), b.clone())) {
            continue;
        }
        let (Some(ra), Some(rb)) = (raters.get(a.as_str()), raters.get(b.as_str())) else {
            continue;
        };
        if same_annotator && ra.is_disjoint(rb) {
            continue;
        }
        let (Some(u), Some(v)) = (table.get(a), table.get(b)) else {
            continue;
        };
        let sim = cosine_similarity(u, v)?;
        if sim >= sim_threshold {
            pairs.push(PromptPair::from_similarity(a, b, sim));
        }
    }
    pairs.sort_by(|a, b| (&a.item_a, &a.item_b).cmp(&(&b.item_a, &b.item_b)));
    Ok(pairs)
}

/// Self-pairs for every item some annotator rated more than once.
pub fn repeat_pairs(dataset: &Dataset) -> Vec<PromptPair> {
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in dataset.records() {
        *counts.entry((&r.item_id, &r.annotator_id)).or_default() += 1;
    }
    let items: BTreeSet<&str> = counts
        .iter()
        .filter(|(_, &c)| c >= 2)
        .map(|((item, _), _)| *item)
        .collect();
    items.into_iter().map(PromptPair::repeat_of).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyFlag {
    pub annotator_id: String,
    pub pair: PromptPair,
    pub record_a: String,
    pub record_b: String,
    pub score_a: f64,
    pub score_b: f64,
    pub delta: f64,
    pub threshold_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceSummary {
    pub delta_threshold: f64,
    /// (annotator, rating pair) units compared.
    pub n_evaluated_pairs: usize,
    pub n_inconsistent_pairs: usize,
    pub pct_inconsistent: f64,
    pub n_annotators_evaluated: usize,
    pub n_annotators_flagged: usize,
    pub pct_annotators_flagged: f64,
    /// Mean absolute difference over flagged units; 0 when nothing is flagged.
    pub mean_delta: f64,
}

/// One compared pair of ratings by the same annotator.
#[derive(Debug, Clone)]
pub struct RatingComparison<'a> {
    pub annotator_id: &'a str,
    pub pair: &'a PromptPair,
    pub a: &'a AnnotationRecord,
    pub b: &'a AnnotationRecord,
}

/// Enumerates, per pair and annotator, every pair of that annotator's ratings
/// spanning the two items. Self-pairs yield all `C(k, 2)` combinations of the
/// annotator's `k` ratings of the item.
pub fn rating_comparisons<'a>(dataset: &'a Dataset, pairs: &'a [PromptPair]) -> Vec<RatingComparison<'a>> {
    let mut out = Vec::new();
    for pair in pairs {
        let mut by_annotator_a: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for r in dataset.item_records(&pair.item_a) {
            by_annotator_a.entry(&r.annotator_id).or_default().push(r);
        }
        if pair.is_self_pair() {
            for (annotator, rs) in &by_annotator_a {
                for i in 0..rs.len() {
                    for j in i + 1..rs.len() {
                        out.push(RatingComparison {
                            annotator_id: annotator,
                            pair,
                            a: rs[i],
                            b: rs[j],
                        });
                    }
                }
            }
            continue;
        }
        let mut by_annotator_b: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for r in dataset.item_records(&pair.item_b) {
            by_annotator_b.entry(&r.annotator_id).or_default().push(r);
        }
        for (annotator, ras) in &by_annotator_a {
            let Some(rbs) = by_annotator_b.get(annotator) else {
                continue;
            };
            for ra in ras {
                for rb in rbs {
                    out.push(RatingComparison {
                        annotator_id: annotator,
                        pair,
                        a: ra,
                        b: rb,
                    });
                }
            }
        }
    }
    out
}

/// Flags every same-annotator rating pair whose difference on the 0-100 scale
/// is at least `delta_threshold`.
pub fn flag_inconsistencies(
    dataset: &Dataset,
    pairs: &[PromptPair],
    delta_threshold: f64,
) -> Result<(Vec<InconsistencyFlag>, PrevalenceSummary)> {
    if dataset.scale_kind() == ScaleKind::BinaryPair {
        return Err(Error::InvalidParameter(
            "score-difference flags need a numeric scale".into(),
        ));
    }
    let comparisons = rating_comparisons(dataset, pairs);
    let mut flags = Vec::new();
    let mut evaluated_annotators = BTreeSet::new();
    let mut flagged_annotators = BTreeSet::new();
    for c in &comparisons {
        evaluated_annotators.insert(c.annotator_id);
        let (sa, sb) = (
            c.a.common_value().expect("numeric scale"),
            c.b.common_value().expect("numeric scale"),
        );
        let delta = (sa - sb).abs();
        if delta >= delta_threshold {
            flagged_annotators.insert(c.annotator_id);
            flags.push(InconsistencyFlag {
                annotator_id: c.annotator_id.to_string(),
                pair: c.pair.clone(),
                record_a: c.a.record_id.clone(),
                record_b: c.b.record_id.clone(),
                score_a: sa,
                score_b: sb,
                delta,
                threshold_used: delta_threshold,
            });
        }
    }
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let summary = PrevalenceSummary {
        delta_threshold,
        n_evaluated_pairs: comparisons.len(),
        n_inconsistent_pairs: flags.len(),
        pct_inconsistent: pct(flags.len(), comparisons.len()),
        n_annotators_evaluated: evaluated_annotators.len(),
        n_annotators_flagged: flagged_annotators.len(),
        pct_annotators_flagged: pct(flagged_annotators.len(), evaluated_annotators.len()),
        mean_delta: if flags.is_empty() {
            0.0
        } else {
            flags.iter().map(|f| f.delta).sum::<f64>() / flags.len() as f64
        },
    };
    Ok((flags, summary))
}

type StagePredicate<'a> = Box<dyn Fn(&InconsistencyFlag, &Dataset) -> bool + Send + Sync + 'a>;

/// One named filter of a ladder.
pub struct LadderStage<'a> {
    pub name: String,
    predicate: StagePredicate<'a>,
}

impl<'a> LadderStage<'a> {
    pub fn new(
        name: impl Into<String>,
        predicate: impl Fn(&InconsistencyFlag, &Dataset) -> bool + Send + Sync + 'a,
    ) -> Self {
        LadderStage {
            name: name.into(),
            predicate: Box::new(predicate),
        }
    }
}

impl std::fmt::Debug for LadderStage<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LadderStage").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub stage: String,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub rows: Vec<LadderRow>,
    /// Indices into the input flags that pass every stage.
    pub survivors: Vec<usize>,
}

/// Applies `stages` in order; each row counts flags passing that stage and
/// every earlier one.
pub fn filter_ladder(dataset: &Dataset, flags: &[InconsistencyFlag], stages: &[LadderStage<'_>]) -> LadderReport {
    let mut alive: Vec<usize> = (0..flags.len()).collect();
    let mut rows = Vec::with_capacity(stages.len());
    for stage in stages {
        alive.retain(|&i| (stage.predicate)(&flags[i], dataset));
        rows.push(LadderRow {
            stage: stage.name.clone(),
            n_pairs: alive.len(),
        });
    }
    LadderReport { rows, survivors: alive }
}

fn flag_records<'d>(f: &InconsistencyFlag, d: &'d Dataset) -> Option<(&'d AnnotationRecord, &'d AnnotationRecord)> {
    Some((d.record(&f.record_a)?, d.record(&f.record_b)?))
}

/// True when both records show the same response: equal response text, or,
/// when text is missing, response embeddings at least 0.9999 similar.
pub fn same_response(d: &Dataset, a: &AnnotationRecord, b: &AnnotationRecord) -> bool {
    if let (Some(x), Some(y)) = (&a.response_text, &b.response_text) {
        return x == y;
    }
    if a.item_id == b.item_id {
        return true;
    }
    let Some(table) = d.response_embeddings() else {
        return false;
    };
    match (table.get(&a.item_id), table.get(&b.item_id)) {
        (Some(u), Some(v)) => cosine_similarity(u, v).is_ok_and(|s| s >= IDENTICAL_RESPONSE_SIMILARITY),
        _ => false,
    }
}

/// The test-retest ladder: similar pairs with a large score difference, then
/// identical prompts, identical responses and the same model.
pub fn test_retest_ladder(sim_threshold: f64, delta_threshold: f64) -> Vec<LadderStage<'static>> {
    vec![
        LadderStage::new(
            format!("same annotator, similarity >= {sim_threshold}, score diff >= {delta_threshold}"),
            move |f, _| f.pair.similarity >= sim_threshold && f.delta >= delta_threshold,
        ),
        LadderStage::new("identical prompts", |f, d| {
            f.pair.kind == PairKind::Identical
                || flag_records(f, d).is_some_and(|(a, b)| a.prompt_text == b.prompt_text)
        }),
        LadderStage::new("identical responses", |f, d| {
            flag_records(f, d).is_some_and(|(a, b)| same_response(d, a, b))
        }),
        LadderStage::new("same model", |f, d| {
            flag_records(f, d).is_some_and(|(a, b)| a.model_id.is_some() && a.model_id == b.model_id)
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::testutil::rec;
    use crate::ingest::EmbeddingTable;

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::new(rows.iter().map(|(k, v)| (k.to_string(), v.to_vec()))).unwrap()
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn cosine_hand_computed() {
        // dot = 4 + 10 + 18 = 32; |u| = sqrt(14); |v| = sqrt(77)
        let expected = 32.0 / (14.0f64 * 77.0).sqrt();
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.974_631_846_197_075_8).abs() < 1e-15);
    }

    #[test]
    fn identical_embeddings_form_identical_pair() {
        let ds = Dataset::new(vec![rec("1", "a", "x", 10.0), rec("2", "a", "y", 90.0)])
            .unwrap()
            .with_embeddings(table(&[("x", &[0.3, 0.4]), ("y", &[0.3, 0.4])]));
        let pairs = find_similar_pairs(&ds, 0.9, true).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].kind, PairKind::Identical);
        assert_eq!((pairs[0].item_a.as_str(), pairs[0].item_b.as_str()), ("x", "y"));
    }

    #[test]
    fn orthogonal_embeddings_form_no_pairs() {
        let ds = Dataset::new(vec![rec("1", "a", "x", 10.0), rec("2", "a", "y", 90.0)])
            .unwrap()
            .with_embeddings(table(&[("x", &[1.0, 0.0]), ("y", &[0.0, 1.0])]));
        assert!(find_similar_pairs(&ds, 0.7, false).unwrap().is_empty());
    }

    #[test]
    fn same_annotator_restriction() {
        let ds = Dataset::new(vec![rec("1", "a", "x", 10.0), rec("2", "b", "y", 90.0)])
            .unwrap()
            .with_embeddings(table(&[("x", &[1.0, 0.0]), ("y", &[1.0, 0.01])]));
        assert!(find_similar_pairs(&ds, 0.9, true).unwrap().is_empty());
        assert_eq!(find_similar_pairs(&ds, 0.9, false).unwrap().len(), 1);
    }

    #[test]
    fn missing_embeddings() {
        let ds = Dataset::new(vec![rec("1", "a", "x", 10.0)]).unwrap();
        assert!(matches!(find_similar_pairs(&ds, 0.9, true), Err(Error::MissingEmbeddings)));
    }

    #[test]
    fn flags_at_and_above_threshold() {
        let ds = Dataset::new(vec![
            rec("1", "a", "x", 80.0),
            rec("2", "a", "y", 80.0),
            rec("3", "b", "x", 50.0),
            rec("4", "b", "y", 10.0),
            rec("5", "c", "x", 40.0),
            rec("6", "c", "y", 55.0),
        ])
        .unwrap();
        let pair = PromptPair::from_similarity("x", "y", 0.95);
        let (flags, summary) = flag_inconsistencies(&ds, &[pair], 15.0).unwrap();
        assert_eq!(flags.len(), 2);
        assert_eq!(flags[0].annotator_id, "b");
        assert_eq!(flags[0].delta, 40.0);
        assert_eq!(flags[1].delta, 15.0);
        assert_eq!(summary.n_evaluated_pairs, 3);
        assert_eq!(summary.n_annotators_flagged, 2);
        assert!((summary.mean_delta - 27.5).abs() < 1e-12);
        assert!((summary.pct_annotators_flagged - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn repeat_group_of_three_yields_three_comparisons() {
        let ds = Dataset::new(vec![
            rec("1", "a", "hello", 10.0),
            rec("2", "a", "hello", 50.0),
            rec("3", "a", "hello", 100.0),
        ])
        .unwrap();
        let pairs = repeat_pairs(&ds);
        assert_eq!(pairs.len(), 1);
        let (flags, _) = flag_inconsistencies(&ds, &pairs, 15.0).unwrap();
        let mut deltas: Vec<f64> = flags.iter().map(|f| f.delta).collect();
        deltas.sort_by(f64::total_cmp);
        assert_eq!(deltas, vec![40.0, 50.0, 90.0]);
    }

    #[test]
    fn empty_ladder_is_all_zero() {
        let ds = Dataset::new(vec![]).unwrap();
        let report = filter_ladder(&ds, &[], &test_retest_ladder(0.9, 15.0));
        assert_eq!(report.rows.len(), 4);
        assert!(report.rows.iter().all(|r| r.n_pairs == 0));
    }

    #[test]
    fn pair_invariants() {
        let mut p = PromptPair::from_similarity("a", "b", 0.8);
        assert!(p.check().is_ok());
        p.kind = PairKind::Directional;
        assert!(p.check().is_err());
        p.expected_direction = Some(Direction::BMore);
        assert!(p.check().is_ok());
        let mut q = PromptPair::from_similarity("a", "b", 1.0);
        q.similarity = 0.95;
        assert!(q.check().is_err());
    }
}
