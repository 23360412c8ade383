//! Synthetic datasets with known latent annotator types, and recovery
//! scoring of the routing procedure against them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{profile_all, DiagnosticConfig};
use crate::error::{Error, Result};
use crate::ingest::{AnnotationRecord, Dataset, ItemMetadata, ScaleKind, Score};
use crate::planner::{assign_diagnostics, TaskKind, TierPlan};
use crate::stats::SeededSampler;
use crate::taxonomy::{decision_procedure, Routing, RoutingDecision, RoutingThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentType {
    Genuine,
    NonAttitude,
    Constructed,
    Artifact,
}

impl LatentType {
    pub const ALL: [LatentType; 4] = [
        LatentType::Genuine,
        LatentType::NonAttitude,
        LatentType::Constructed,
        LatentType::Artifact,
    ];

    pub fn expected_routing(self) -> Routing {
        match self {
            LatentType::Genuine => Routing::UseAsSignal,
            LatentType::NonAttitude => Routing::FilterDownweight,
            LatentType::Constructed => Routing::ElicitCarefully,
            LatentType::Artifact => Routing::FixInstrument,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub noise_sd: f64,
    pub framing_offset_sd: f64,
    pub artifact_rate: f64,
    /// Items per annotator rated under both framing variants.
    pub n_framing_pairs: usize,
    /// Attention-check items with a known correct score.
    pub n_anchors: usize,
    pub anchor_scores: (f64, f64),
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            noise_sd: 5.0,
            framing_offset_sd: 30.0,
            artifact_rate: 0.3,
            n_framing_pairs: 10,
            n_anchors: 20,
            anchor_scores: (5.0, 95.0),
        }
    }
}

impl SynthParams {
    fn check(&self) -> Result<()> {
        if !(self.noise_sd > 0.0 && self.framing_offset_sd > 0.0) {
            return Err(Error::InvalidParameter("noise and offset sd must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.artifact_rate) {
            return Err(Error::InvalidParameter("artifact rate must lie in [0, 1]".into()));
        }
        let (lo, hi) = self.anchor_scores;
        if !((0.0..=100.0).contains(&lo) && (0.0..=100.0).contains(&hi)) {
            return Err(Error::InvalidParameter("anchor scores must lie in [0, 100]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub truth: BTreeMap<String, LatentType>,
    pub item_means: BTreeMap<String, f64>,
    pub clamp_events: usize,
    pub params: SynthParams,
    pub seed: u64,
}

/// Sidecar document describing the generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub seed: u64,
    pub params: SynthParams,
    pub clamp_events: usize,
    pub truth: BTreeMap<String, LatentType>,
}

impl SyntheticDataset {
    pub fn sidecar(&self) -> TruthSidecar {
        TruthSidecar {
            seed: self.seed,
            params: self.params.clone(),
            clamp_events: self.clamp_events,
            truth: self.truth.clone(),
        }
    }

    pub fn write_sidecar(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.sidecar())?;
        w.write_all(b"\n").map_err(|e| Error::io("<sidecar>", e))
    }
}

fn item_id(i: usize) -> String {
    format!("item_{i:05}")
}

fn anchor_id(i: usize) -> String {
    format!("anchor_{i:03}")
}

struct Rater<'a> {
    kind: LatentType,
    annotator: &'a str,
    params: &'a SynthParams,
    seed: u64,
    draws: SeededSampler,
    clamps: usize,
}

impl Rater<'_> {
    fn clamp(&mut self, v: f64) -> f64 {
        if !(0.0..=100.0).contains(&v) {
            self.clamps += 1;
        }
        v.clamp(0.0, 100.0)
    }

    /// A draw fixed per (annotator, item, purpose), independent of call order.
    fn fixed(&self, item: &str, purpose: &str) -> SeededSampler {
        SeededSampler::new(self.seed, &format!("synth\u{1f}{}\u{1f}{item}\u{1f}{purpose}", self.annotator))
    }

    fn rate(&mut self, item: &str, mu: f64, variant: &str) -> f64 {
        let noise_sd = self.params.noise_sd;
        let raw = match self.kind {
            LatentType::Genuine => mu + self.draws.normal(0.0, noise_sd),
            LatentType::NonAttitude => self.draws.uniform(0.0, 100.0),
            LatentType::Constructed => {
                let offset = self.fixed(item, variant).normal(0.0, self.params.framing_offset_sd);
                mu + offset + self.draws.normal(0.0, noise_sd)
            }
            LatentType::Artifact => {
                let mut lapse = self.fixed(item, "lapse");
                if lapse.bernoulli(self.params.artifact_rate) {
                    lapse.uniform(0.0, 100.0)
                } else {
                    mu + self.draws.normal(0.0, noise_sd)
                }
            }
        };
        self.clamp(raw)
    }
}

/// Generates `n_per_type` annotators of each latent type. `plan` describes one
/// annotator's workload (its item count, repeats and spacing); each annotator
/// follows it on a seeded draw from a pool of `n_items` items, then rates
/// `n_framing_pairs` of those items under a second framing and every anchor.
pub fn generate(n_per_type: usize, n_items: usize, plan: &TierPlan, params: &SynthParams, seed: u64) -> Result<SyntheticDataset> {
    params.check()?;
    if plan.n_annotators != 1 {
        return Err(Error::InvalidParameter("synthetic plans describe a single annotator's workload".into()));
    }
    let per = plan.items_per_annotator;
    if n_items < per {
        return Err(Error::Infeasible(format!("plan needs {per} items but the pool has {n_items}")));
    }
    if per < plan.n_repeats_per_annotator + params.n_framing_pairs {
        return Err(Error::Infeasible("too few items for repeats plus framing pairs".into()));
    }
    let mut mu_sampler = SeededSampler::new(seed, "synth/items");
    let mut item_means: BTreeMap<String, f64> = (0..n_items).map(|i| (item_id(i), mu_sampler.uniform(10.0, 90.0))).collect();
    let pool: Vec<String> = item_means.keys().cloned().collect();
    let (lo, hi) = params.anchor_scores;
    let anchors: Vec<(String, f64)> = (0..params.n_anchors)
        .map(|i| (anchor_id(i), if i % 2 == 0 { lo } else { hi }))
        .collect();
    item_means.extend(anchors.iter().cloned());

    let annotators: Vec<(String, LatentType)> = LatentType::ALL
        .iter()
        .flat_map(|t| std::iter::repeat_n(*t, n_per_type))
        .enumerate()
        .map(|(i, t)| (format!("ann_{i:04}"), t))
        .collect();

    let generated: Vec<Result<(Vec<AnnotationRecord>, usize)>> = annotators
        .par_iter()
        .map(|(aid, kind)| annotator_records(aid, *kind, &pool, &item_means, &anchors, plan, params, seed))
        .collect();
    let mut records = Vec::new();
    let mut clamp_events = 0;
    for g in generated {
        let (r, c) = g?;
        records.extend(r);
        clamp_events += c;
    }
    let metadata = anchors.iter().map(|(a, s)| ItemMetadata {
        item_id: a.clone(),
        anchor_score: Some(*s),
        ..Default::default()
    });
    Ok(SyntheticDataset {
        dataset: Dataset::new(records)?.with_metadata(metadata),
        truth: annotators.into_iter().collect(),
        item_means,
        clamp_events,
        params: params.clone(),
        seed,
    })
}

#[allow(clippy::too_many_arguments)]
fn annotator_records(
    aid: &str,
    kind: LatentType,
    pool: &[String],
    means: &BTreeMap<String, f64>,
    anchors: &[(String, f64)],
    plan: &TierPlan,
    params: &SynthParams,
    seed: u64,
) -> Result<(Vec<AnnotationRecord>, usize)> {
    let per = plan.items_per_annotator;
    let mut pick = SeededSampler::new(seed, &format!("synth/pick/{aid}"));
    let mut mine: Vec<String> = if per == pool.len() {
        pool.to_vec()
    } else {
        pick.sample_indices(pool.len(), per).into_iter().map(|i| pool[i].clone()).collect()
    };
    mine.sort();
    let schedule = assign_diagnostics(plan, &mine, &[aid.to_string()], seed, None)?;
    let tasks = &schedule.annotators[0].tasks;
    let repeated: BTreeSet<usize> = tasks
        .iter()
        .filter_map(|t| match t.kind {
            TaskKind::Repeat { of_position } | TaskKind::Retest { of_position } => Some(of_position),
            _ => None,
        })
        .collect();
    let candidates: Vec<usize> = tasks
        .iter()
        .filter(|t| t.kind == TaskKind::Original && t.variant.is_none() && !repeated.contains(&t.position))
        .map(|t| t.position)
        .collect();
    let framed: BTreeSet<usize> = pick
        .sample_indices(candidates.len(), params.n_framing_pairs.min(candidates.len()))
        .into_iter()
        .map(|i| candidates[i])
        .collect();

    let mut rater = Rater {
        kind,
        annotator: aid,
        params,
        seed,
        draws: SeededSampler::new(seed, &format!("synth/draws/{aid}")),
        clamps: 0,
    };
    let mut out = Vec::with_capacity(tasks.len() + framed.len() + anchors.len());
    let mut push = |rater: &mut Rater, item: &str, variant: Option<&str>, session: u32| {
        let pos = out.len();
        let score = rater.rate(item, means[item], variant.unwrap_or("v0"));
        out.push(AnnotationRecord {
            record_id: format!("{aid}-{pos:05}"),
            annotator_id: aid.to_string(),
            item_id: item.to_string(),
            prompt_text: match variant {
                Some(v) => format!("synthetic prompt {item} ({v})"),
                None => format!("synthetic prompt {item}"),
            },
            response_text: None,
            model_id: None,
            score: Score::Value(score),
            scale_kind: ScaleKind::Continuous,
            session_id: Some(format!("s{session}")),
            timestamp: Some(pos as i64),
            position_index: Some(pos as u32),
            framing_id: variant.map(str::to_string),
            condition_tag: None,
        });
    };
    for t in tasks {
        let variant = if framed.contains(&t.position) { Some("v0") } else { t.variant.as_deref() };
        push(&mut rater, &t.item_id, variant, t.session);
    }
    for p in &framed {
        push(&mut rater, &tasks[*p].item_id, Some("v1"), 3);
    }
    for (a, _) in anchors {
        push(&mut rater, a, None, 1);
    }
    Ok((out, rater.clamps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Latent type to routing counts.
    pub confusion: BTreeMap<LatentType, BTreeMap<Routing, usize>>,
    pub n_annotators: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

/// Compares routings with the expected routing of each latent type.
pub fn score_recovery(truth: &BTreeMap<String, LatentType>, routings: &[RoutingDecision]) -> Result<RecoveryReport> {
    if truth.is_empty() || routings.is_empty() {
        return Err(Error::InvalidParameter("nothing to score".into()));
    }
    if routings.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} routings for {} annotators",
            routings.len(),
            truth.len()
        )));
    }
    let mut confusion: BTreeMap<LatentType, BTreeMap<Routing, usize>> = BTreeMap::new();
    let mut n_correct = 0;
    for r in routings {
        let t = *truth
            .get(&r.annotator_id)
            .ok_or_else(|| Error::NotFound(format!("annotator `{}` has no latent type", r.annotator_id)))?;
        *confusion.entry(t).or_default().entry(r.routing).or_default() += 1;
        n_correct += usize::from(t.expected_routing() == r.routing);
    }
    Ok(RecoveryReport {
        confusion,
        n_annotators: routings.len(),
        n_correct,
        accuracy: n_correct as f64 / routings.len() as f64,
    })
}

/// Profiles, routes and scores a synthetic dataset.
pub fn run_recovery(
    synthetic: &SyntheticDataset,
    config: &DiagnosticConfig,
    thresholds: &RoutingThresholds,
) -> Result<(Vec<RoutingDecision>, RecoveryReport)> {
    let routings: Vec<RoutingDecision> = profile_all(&synthetic.dataset, config)
        .iter()
        .map(|p| decision_procedure(p, thresholds))
        .collect();
    let report = score_recovery(&synthetic.truth, &routings)?;
    Ok((routings, report))
}
