//! Tiered diagnostic plans, cost accounting, assignment schedules and
//! threshold calibration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScaleKind;
use crate::stats::{self, SeededSampler};

pub const MIN_REPEATS_PER_ANNOTATOR: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub repeat_rate: f64,
    pub min_spacing: usize,
    pub framing_rate: f64,
    /// Tier 2: share of framing pairs also rated by the same annotator.
    pub within_framing_subset: Option<f64>,
    /// Tier 3: share of items whose other framing variant the annotator also rates.
    pub within_annotator_framing_rate: f64,
    pub retest_rate: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            repeat_rate: 0.05,
            min_spacing: 20,
            framing_rate: 0.125,
            within_framing_subset: None,
            within_annotator_framing_rate: 0.125,
            retest_rate: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierPlan {
    pub tier: u8,
    pub n_items: usize,
    pub n_annotators: usize,
    pub items_per_annotator: usize,
    pub repeat_rate: f64,
    pub n_repeats_per_annotator: usize,
    pub min_spacing: usize,
    pub framing_rate: Option<f64>,
    pub within_framing_subset: Option<f64>,
    pub within_annotator_framing_rate: Option<f64>,
    pub retest_rate: Option<f64>,
    pub base_annotations: usize,
    pub extra_repeats: usize,
    pub extra_framing: usize,
    pub extra_retest: usize,
    pub extra_annotations: usize,
    pub overhead_pct: f64,
    pub cost_per_annotation: f64,
    pub extra_cost: f64,
}

fn in_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if (lo - 1e-12..=hi + 1e-12).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} {v} outside [{lo}, {hi}]")))
    }
}

/// Items per annotator when `n_items` are split as evenly as possible.
pub fn chunk_sizes(n_items: usize, n_annotators: usize) -> Vec<usize> {
    (0..n_annotators)
        .map(|i| n_items / n_annotators + usize::from(i < n_items % n_annotators))
        .collect()
}

fn count(rate: f64, n: usize) -> usize {
    (rate * n as f64).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct ChunkCounts {
    repeats: usize,
    framing: usize,
    within: usize,
    retest: usize,
}

fn chunk_counts(tier: u8, size: usize, o: &PlanOptions) -> ChunkCounts {
    let framing = if tier >= 2 { count(o.framing_rate, size) } else { 0 };
    let within = match tier {
        2 => o.within_framing_subset.map_or(0, |s| count(s * o.framing_rate, size)),
        3 => count(o.within_annotator_framing_rate, size).min(framing),
        _ => 0,
    };
    ChunkCounts {
        repeats: count(o.repeat_rate, size),
        framing,
        within,
        retest: if tier == 3 { count(o.retest_rate, size) } else { 0 },
    }
}

pub fn plan_tier(tier: u8, n_items: usize, n_annotators: usize, cost_per_annotation: f64, options: &PlanOptions) -> Result<TierPlan> {
    if !(1..=3).contains(&tier) {
        return Err(Error::InvalidParameter(format!("tier must be 1, 2 or 3 (got {tier})")));
    }
    if n_items == 0 || n_annotators == 0 || n_annotators > n_items {
        return Err(Error::InvalidParameter("need positive items and no more annotators than items".into()));
    }
    if !(cost_per_annotation >= 0.0 && cost_per_annotation.is_finite()) {
        return Err(Error::InvalidParameter("cost per annotation must be nonnegative".into()));
    }
    in_range("repeat rate", options.repeat_rate, 0.05, 0.08)?;
    if options.min_spacing < 20 {
        return Err(Error::InvalidParameter(format!("min spacing {} below 20", options.min_spacing)));
    }
    if tier >= 2 {
        in_range("framing rate", options.framing_rate, 0.10, 0.15)?;
        if let Some(s) = options.within_framing_subset {
            in_range("within-annotator framing subset", s, 0.0, 1.0)?;
        }
    }
    if tier == 3 {
        in_range("retest rate", options.retest_rate, 0.20, 0.30)?;
        in_range("within-annotator framing rate", options.within_annotator_framing_rate, 0.10, 0.15)?;
    }
    let sizes = chunk_sizes(n_items, n_annotators);
    let smallest = *sizes.iter().min().expect("n_annotators > 0");
    let min_counts = chunk_counts(tier, smallest, options);
    if min_counts.repeats < MIN_REPEATS_PER_ANNOTATOR {
        return Err(Error::Infeasible(format!(
            "{:.1}% of {smallest} items per annotator gives {} repeats, below the minimum of {MIN_REPEATS_PER_ANNOTATOR}",
            options.repeat_rate * 100.0,
            min_counts.repeats
        )));
    }
    if smallest <= options.min_spacing || smallest - options.min_spacing < min_counts.repeats {
        return Err(Error::Infeasible(format!(
            "{smallest} items per annotator cannot hold {} repeats spaced at least {} apart",
            min_counts.repeats, options.min_spacing
        )));
    }
    let totals = sizes.iter().fold(ChunkCounts::default(), |acc, s| {
        let c = chunk_counts(tier, *s, options);
        ChunkCounts {
            repeats: acc.repeats + c.repeats,
            framing: acc.framing + c.framing,
            within: acc.within + c.within,
            retest: acc.retest + c.retest,
        }
    });
    let extra = totals.repeats + totals.within + totals.retest;
    Ok(TierPlan {
        tier,
        n_items,
        n_annotators,
        items_per_annotator: *sizes.iter().max().expect("nonempty"),
        repeat_rate: options.repeat_rate,
        n_repeats_per_annotator: min_counts.repeats,
        min_spacing: options.min_spacing,
        framing_rate: (tier >= 2).then_some(options.framing_rate),
        within_framing_subset: if tier == 2 { options.within_framing_subset } else { None },
        within_annotator_framing_rate: (tier == 3).then_some(options.within_annotator_framing_rate),
        retest_rate: (tier == 3).then_some(options.retest_rate),
        base_annotations: n_items,
        extra_repeats: totals.repeats,
        extra_framing: totals.within,
        extra_retest: totals.retest,
        extra_annotations: extra,
        overhead_pct: 100.0 * extra as f64 / n_items as f64,
        cost_per_annotation,
        extra_cost: extra as f64 * cost_per_annotation,
    })
}

fn options_of(plan: &TierPlan) -> PlanOptions {
    let d = PlanOptions::default();
    PlanOptions {
        repeat_rate: plan.repeat_rate,
        min_spacing: plan.min_spacing,
        framing_rate: plan.framing_rate.unwrap_or(d.framing_rate),
        within_framing_subset: plan.within_framing_subset,
        within_annotator_framing_rate: plan.within_annotator_framing_rate.unwrap_or(d.within_annotator_framing_rate),
        retest_rate: plan.retest_rate.unwrap_or(d.retest_rate),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Original,
    Repeat { of_position: usize },
    Retest { of_position: usize },
    WithinFraming { of_position: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub position: usize,
    pub session: u32,
    pub item_id: String,
    /// Framing variant shown, for framing items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(flatten)]
    pub kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorSchedule {
    pub annotator_id: String,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub seed: u64,
    pub min_spacing: usize,
    pub annotators: Vec<AnnotatorSchedule>,
}

impl Schedule {
    pub fn extra_annotations(&self) -> usize {
        self.annotators
            .iter()
            .flat_map(|a| &a.tasks)
            .filter(|t| t.kind != TaskKind::Original)
            .count()
    }
}

/// Picks `k` of `candidates`, allocating proportionally across strata when
/// given and uniformly otherwise.
fn stratified_pick(
    candidates: &[usize],
    k: usize,
    stratum_of: impl Fn(usize) -> Option<String>,
    sampler: &mut SeededSampler,
) -> Vec<usize> {
    let mut strata: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
    for &c in candidates {
        strata.entry(stratum_of(c)).or_default().push(c);
    }
    if strata.len() <= 1 || k == 0 {
        let mut idx = sampler.sample_indices(candidates.len(), k.min(candidates.len()));
        idx.sort_unstable();
        return idx.into_iter().map(|i| candidates[i]).collect();
    }
    let n = candidates.len() as f64;
    let mut quotas: Vec<(usize, f64, &Option<String>)> = strata
        .iter()
        .map(|(s, members)| {
            let exact = k as f64 * members.len() as f64 / n;
            (exact.floor() as usize, exact - exact.floor(), s)
        })
        .collect();
    let mut left = k - quotas.iter().map(|q| q.0).sum::<usize>();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|a, b| quotas[*b].1.total_cmp(&quotas[*a].1).then(a.cmp(b)));
    for i in order {
        if left == 0 {
            break;
        }
        if quotas[i].0 < strata[quotas[i].2].len() {
            quotas[i].0 += 1;
            left -= 1;
        }
    }
    let mut picked = Vec::with_capacity(k);
    for (q, _, s) in quotas {
        let members = &strata[s];
        for i in sampler.sample_indices(members.len(), q.min(members.len())) {
            picked.push(members[i]);
        }
    }
    picked.sort_unstable();
    picked
}

/// Builds per-annotator task lists: originals in session 1, spaced repeats in
/// session 2, within-annotator framing variants in session 3 and retests in
/// session 4. `strata` optionally maps item ids to a content stratum.
pub fn assign_diagnostics(
    plan: &TierPlan,
    item_ids: &[String],
    annotator_ids: &[String],
    seed: u64,
    strata: Option<&BTreeMap<String, String>>,
) -> Result<Schedule> {
    if item_ids.len() != plan.n_items || annotator_ids.len() != plan.n_annotators {
        return Err(Error::InvalidParameter(format!(
            "plan expects {} items and {} annotators, got {} and {}",
            plan.n_items,
            plan.n_annotators,
            item_ids.len(),
            annotator_ids.len()
        )));
    }
    let unique: BTreeSet<&String> = item_ids.iter().collect();
    if unique.len() != item_ids.len() {
        return Err(Error::InvalidParameter("item ids must be unique".into()));
    }
    let options = options_of(plan);
    let mut items: Vec<&String> = item_ids.iter().collect();
    items.sort();
    SeededSampler::new(seed, "schedule/items").shuffle(&mut items);

    let mut annotators = Vec::with_capacity(annotator_ids.len());
    let mut start = 0;
    for (ai, (annotator, size)) in annotator_ids
        .iter()
        .zip(chunk_sizes(plan.n_items, plan.n_annotators))
        .enumerate()
    {
        let chunk = &items[start..start + size];
        start += size;
        let counts = chunk_counts(plan.tier, size, &options);
        if size <= plan.min_spacing || size - plan.min_spacing < counts.repeats {
            return Err(Error::Infeasible(format!(
                "spacing {} infeasible for {size} items with {} repeats",
                plan.min_spacing, counts.repeats
            )));
        }
        let mut sampler = SeededSampler::new(seed, &format!("schedule/{annotator}"));
        let stratum = |p: usize| strata.and_then(|s| s.get(chunk[p].as_str()).cloned());

        let framing_positions: BTreeSet<usize> = stratified_pick(&(0..size).collect::<Vec<_>>(), counts.framing, stratum, &mut sampler)
            .into_iter()
            .collect();
        let variant_of = |p: usize| (ai + p) % 2;
        let mut tasks: Vec<Task> = chunk
            .iter()
            .enumerate()
            .map(|(p, item)| Task {
                position: p,
                session: 1,
                item_id: item.to_string(),
                variant: framing_positions.contains(&p).then(|| format!("v{}", variant_of(p))),
                kind: TaskKind::Original,
            })
            .collect();

        // Only items early enough that any later slot keeps the spacing.
        let eligible: Vec<usize> = (0..size - plan.min_spacing).collect();
        let mut repeats = stratified_pick(&eligible, counts.repeats, stratum, &mut sampler);
        sampler.shuffle(&mut repeats);
        for p in repeats {
            let position = tasks.len();
            tasks.push(Task {
                position,
                session: 2,
                item_id: chunk[p].to_string(),
                variant: tasks[p].variant.clone(),
                kind: TaskKind::Repeat { of_position: p },
            });
        }

        let framed: Vec<usize> = framing_positions.iter().copied().collect();
        let mut within: Vec<usize> = sampler
            .sample_indices(framed.len(), counts.within.min(framed.len()))
            .into_iter()
            .map(|i| framed[i])
            .collect();
        within.sort_unstable();
        for p in within {
            let position = tasks.len();
            tasks.push(Task {
                position,
                session: 3,
                item_id: chunk[p].to_string(),
                variant: Some(format!("v{}", 1 - variant_of(p))),
                kind: TaskKind::WithinFraming { of_position: p },
            });
        }

        let mut retest: Vec<usize> = sampler.sample_indices(size, counts.retest);
        sampler.shuffle(&mut retest);
        for p in retest {
            let position = tasks.len();
            tasks.push(Task {
                position,
                session: 4,
                item_id: chunk[p].to_string(),
                variant: tasks[p].variant.clone(),
                kind: TaskKind::Retest { of_position: p },
            });
        }
        annotators.push(AnnotatorSchedule {
            annotator_id: annotator.clone(),
            tasks,
        });
    }
    Ok(Schedule {
        seed,
        min_spacing: plan.min_spacing,
        annotators,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Empirical,
    ScaleRelative,
    Consequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub method: CalibrationMethod,
    pub scale_kind: ScaleKind,
    /// Largest difference still counted consistent.
    pub consistent_max: f64,
    /// Largest difference counted marginal; absent when there is no marginal band.
    pub marginal_max: Option<f64>,
    pub basis: String,
}

/// Consistent band at mean + k standard deviations of clear-case differences;
/// marginal band up to twice that.
pub fn calibrate_empirical(clear_case_diffs: &[f64], k: f64, scale_kind: ScaleKind) -> Result<ThresholdCalibration> {
    if clear_case_diffs.len() < 10 {
        return Err(Error::InsufficientSupport {
            what: "clear-case differences".into(),
            needed: 10,
            found: clear_case_diffs.len(),
        });
    }
    in_range("k", k, 1.5, 2.0)?;
    let m = stats::mean(clear_case_diffs);
    let sd = stats::std_sample(clear_case_diffs);
    let consistent = m + k * sd;
    Ok(ThresholdCalibration {
        method: CalibrationMethod::Empirical,
        scale_kind,
        consistent_max: consistent,
        marginal_max: (consistent > 0.0).then_some(2.0 * consistent),
        basis: format!("mean {m:.4} + {k} x sd {sd:.4} over {} clear cases", clear_case_diffs.len()),
    })
}

pub fn calibrate_scale(scale_kind: ScaleKind) -> ThresholdCalibration {
    let (consistent, marginal, basis) = match scale_kind {
        ScaleKind::Continuous => (15.0, Some(30.0), "0-100 scale: <=15 consistent, 16-30 marginal, >30 inconsistent"),
        ScaleKind::Likert5 => (1.0, Some(2.0), "5-point scale: <=1 consistent, 2 marginal, >=3 inconsistent"),
        ScaleKind::BinaryPair => (0.0, None, "binary choice: any disagreement is inconsistent"),
    };
    ThresholdCalibration {
        method: CalibrationMethod::ScaleRelative,
        scale_kind,
        consistent_max: consistent,
        marginal_max: marginal,
        basis: basis.into(),
    }
}

/// Differences up to `flip_margin` cannot flip a downstream decision.
pub fn calibrate_consequence(scale_kind: ScaleKind, flip_margin: f64) -> Result<ThresholdCalibration> {
    if !(flip_margin >= 0.0 && flip_margin.is_finite()) {
        return Err(Error::InvalidParameter("flip margin must be nonnegative".into()));
    }
    Ok(ThresholdCalibration {
        method: CalibrationMethod::Consequence,
        scale_kind,
        consistent_max: flip_margin,
        marginal_max: None,
        basis: format!("differences above {flip_margin} can flip the preference ordering"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:05}")).collect()
    }

    #[test]
    fn worked_example_tier1() {
        let p = plan_tier(1, 10_000, 5, 0.5, &PlanOptions::default()).unwrap();
        assert_eq!(p.items_per_annotator, 2000);
        assert_eq!(p.n_repeats_per_annotator, 100);
        assert_eq!(p.extra_annotations, 500);
        assert_eq!(p.extra_cost, 250.0);
        assert_eq!(p.overhead_pct, 5.0);
    }

    #[test]
    fn tier2_cross_annotator_framing_is_free() {
        let p = plan_tier(2, 10_000, 5, 0.5, &PlanOptions::default()).unwrap();
        assert_eq!(p.extra_framing, 0);
        assert_eq!(p.extra_annotations, 500);
        let o = PlanOptions {
            framing_rate: 0.10,
            within_framing_subset: Some(0.2),
            ..Default::default()
        };
        let p = plan_tier(2, 10_000, 5, 0.5, &o).unwrap();
        assert_eq!(p.extra_framing, 200);
        assert_eq!(p.extra_annotations, 700);
        assert_eq!(p.overhead_pct, 7.0);
    }

    #[test]
    fn too_few_items_is_infeasible() {
        let err = plan_tier(1, 100, 1, 0.5, &PlanOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(ref m) if m.contains("5 repeats")));
    }

    #[test]
    fn rates_outside_tier_ranges_are_rejected() {
        let o = PlanOptions {
            repeat_rate: 0.2,
            ..Default::default()
        };
        assert!(plan_tier(1, 10_000, 5, 0.5, &o).is_err());
    }

    #[test]
    fn schedule_matches_plan_and_spacing() {
        let o = PlanOptions {
            within_framing_subset: Some(0.2),
            ..Default::default()
        };
        let plan = plan_tier(2, 2000, 4, 1.0, &o).unwrap();
        let s = assign_diagnostics(&plan, &ids("i", 2000), &ids("a", 4), 9, None).unwrap();
        assert_eq!(s.extra_annotations(), plan.extra_annotations);
        for a in &s.annotators {
            for t in &a.tasks {
                if let TaskKind::Repeat { of_position } = t.kind {
                    assert!(t.position - of_position > plan.min_spacing);
                    assert_eq!(a.tasks[of_position].item_id, t.item_id);
                }
            }
        }
        let again = assign_diagnostics(&plan, &ids("i", 2000), &ids("a", 4), 9, None).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn large_spacing_is_infeasible() {
        let o = PlanOptions {
            min_spacing: 200,
            repeat_rate: 0.05,
            ..Default::default()
        };
        assert!(matches!(plan_tier(1, 100, 1, 1.0, &o), Err(Error::Infeasible(_))));
    }

    #[test]
    fn calibrations() {
        let diffs = [1.0, 9.0, 1.0, 9.0, 1.0, 9.0, 1.0, 9.0, 5.0, 5.0];
        let m = stats::mean(&diffs);
        let sd = stats::std_sample(&diffs);
        let c = calibrate_empirical(&diffs, 2.0, ScaleKind::Continuous).unwrap();
        assert_eq!(c.consistent_max, m + 2.0 * sd);
        assert!(calibrate_empirical(&diffs[..9], 2.0, ScaleKind::Continuous).is_err());
        let l = calibrate_scale(ScaleKind::Likert5);
        assert_eq!((l.consistent_max, l.marginal_max), (1.0, Some(2.0)));
        let b = calibrate_scale(ScaleKind::BinaryPair);
        assert_eq!((b.consistent_max, b.marginal_max), (0.0, None));
        assert_eq!(calibrate_consequence(ScaleKind::Continuous, 25.0).unwrap().consistent_max, 25.0);
    }
}
