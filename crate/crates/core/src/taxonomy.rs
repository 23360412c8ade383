//! Pair-level classification schemes, the rule cascade assigning taxonomy
//! labels to flags, and annotator routing.

use serde::{Deserialize, Serialize};

use crate::diagnostics::ConsistencyProfile;
use crate::ingest::{ContentType, EvalComplexity, ItemMetadata, PlausiblePreference, ResponseQuality};
use crate::pairing::{Direction, InconsistencyFlag, PairKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCategory {
    Consistent,
    Marginal,
    Excessive,
    Violation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeBasis {
    EquivalentScheme,
    DirectionalScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairClassification {
    pub category: PairCategory,
    pub basis: SchemeBasis,
}

/// Band edges for the pair schemes on the 0-100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeBands {
    pub consistent_max: f64,
    pub marginal_max: f64,
}

impl Default for SchemeBands {
    fn default() -> Self {
        SchemeBands {
            consistent_max: 15.0,
            marginal_max: 30.0,
        }
    }
}

pub fn classify_equivalent_pair(score_a: f64, score_b: f64) -> PairClassification {
    classify_equivalent_with(score_a, score_b, SchemeBands::default())
}

pub fn classify_equivalent_with(score_a: f64, score_b: f64, bands: SchemeBands) -> PairClassification {
    let delta = (score_a - score_b).abs();
    let category = if delta <= bands.consistent_max {
        PairCategory::Consistent
    } else if delta <= bands.marginal_max {
        PairCategory::Marginal
    } else {
        PairCategory::Excessive
    };
    PairClassification {
        category,
        basis: SchemeBasis::EquivalentScheme,
    }
}

/// `expected` names the item that should score higher.
pub fn classify_directional_pair(score_a: f64, score_b: f64, expected: Direction) -> PairClassification {
    classify_directional_with(score_a, score_b, expected, SchemeBands::default().consistent_max)
}

pub fn classify_directional_with(score_a: f64, score_b: f64, expected: Direction, margin: f64) -> PairClassification {
    let signed = match expected {
        Direction::BMore => score_b - score_a,
        Direction::AMore => score_a - score_b,
        Direction::Equal => return classify_equivalent_pair(score_a, score_b),
    };
    let category = if signed > margin {
        PairCategory::Consistent
    } else if signed < -margin {
        PairCategory::Violation
    } else {
        PairCategory::Marginal
    };
    PairClassification {
        category,
        basis: SchemeBasis::DirectionalScheme,
    }
}

/// Classifies a flag under the scheme its pair kind calls for.
pub fn classify_pair_of(flag: &InconsistencyFlag) -> PairClassification {
    match (flag.pair.kind, flag.pair.expected_direction) {
        (PairKind::Directional, Some(d)) => classify_directional_pair(flag.score_a, flag.score_b, d),
        _ => classify_equivalent_pair(flag.score_a, flag.score_b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoreCode {
    /// One score at most 20, the other at least 80.
    C1,
    /// One extreme score, one in 21-79.
    C2,
    /// Both scores in 21-79.
    C3,
    /// Both on one side of 50, at least 15 apart.
    C4,
}

fn extreme(s: f64) -> bool {
    s <= 20.0 || s >= 80.0
}

fn moderate(s: f64) -> bool {
    s > 20.0 && s < 80.0
}

/// Every score-pattern code matching a pair of 0-100 scores.
pub fn score_pattern(a: f64, b: f64) -> Vec<ScoreCode> {
    let mut codes = Vec::new();
    let (lo, hi) = (a.min(b), a.max(b));
    if lo <= 20.0 && hi >= 80.0 {
        codes.push(ScoreCode::C1);
    }
    if (extreme(a) && moderate(b)) || (extreme(b) && moderate(a)) {
        codes.push(ScoreCode::C2);
    }
    if moderate(a) && moderate(b) {
        codes.push(ScoreCode::C3);
    }
    if ((a > 50.0 && b > 50.0) || (a < 50.0 && b < 50.0)) && (a - b).abs() >= 15.0 {
        codes.push(ScoreCode::C4);
    }
    codes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonAttitude,
    ConstructedPreference,
    MeasurementArtifact,
    GenuineUncrystallized,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonAttitude => "non_attitude",
            Label::ConstructedPreference => "constructed_preference",
            Label::MeasurementArtifact => "measurement_artifact",
            Label::GenuineUncrystallized => "genuine_uncrystallized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    /// A clearly bad response scored above this suggests an artifact.
    pub artifact_floor: f64,
    /// Inclusive score band counted as moderate for the uncrystallized rule.
    pub genuine_band: (f64, f64),
    pub genuine_max_delta: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            artifact_floor: 40.0,
            genuine_band: (21.0, 89.0),
            genuine_max_delta: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyLabel {
    pub annotator_id: String,
    pub pair_id: String,
    pub record_a: String,
    pub record_b: String,
    pub delta: f64,
    pub label: Label,
    pub pair_category: PairClassification,
    pub score_codes: Vec<ScoreCode>,
    pub rule_trace: Vec<String>,
}

/// Assigns one taxonomy label to a flag by a fixed rule cascade over item
/// codes, the pair category and the score pattern.
pub fn classify_flag(
    flag: &InconsistencyFlag,
    metadata: Option<&ItemMetadata>,
    pair: PairClassification,
    config: &RuleConfig,
) -> TaxonomyLabel {
    let codes = score_pattern(flag.score_a, flag.score_b);
    let mut trace = vec![format!("score_codes={codes:?}"), format!("pair={:?}", pair.category)];
    let m = metadata.cloned().unwrap_or_default();
    if metadata.is_none() {
        trace.push("no item codes".into());
    }
    let content = m.content_type;
    let label = if m.response_quality == Some(ResponseQuality::Bad)
        && (flag.score_a > config.artifact_floor || flag.score_b > config.artifact_floor)
    {
        trace.push(format!("rule1: B2 response scored above {}", config.artifact_floor));
        Label::MeasurementArtifact
    } else if matches!(content, Some(ContentType::Generic | ContentType::Factual))
        && m.plausible_pref == Some(PlausiblePreference::Implausible)
    {
        trace.push("rule2: A1/A2 content with E1 preference".into());
        Label::NonAttitude
    } else if pair.category == PairCategory::Violation {
        trace.push("rule3: direction violation".into());
        Label::NonAttitude
    } else if pair.category == PairCategory::Excessive {
        trace.push("rule4: excessive sensitivity".into());
        Label::ConstructedPreference
    } else if matches!(
        content,
        Some(ContentType::Subjective | ContentType::ValueLaden | ContentType::TaskBased)
    ) && m.eval_complexity == Some(EvalComplexity::MultiConflicting)
    {
        trace.push("rule4: A3-A5 content with D3 complexity".into());
        Label::ConstructedPreference
    } else if content == Some(ContentType::ValueLaden)
        && m.plausible_pref == Some(PlausiblePreference::Plausible)
        && [flag.score_a, flag.score_b]
            .iter()
            .all(|s| (config.genuine_band.0..=config.genuine_band.1).contains(s))
        && flag.delta <= config.genuine_max_delta
    {
        trace.push("rule5: A4/E3 with moderate scores and difference".into());
        Label::GenuineUncrystallized
    } else {
        trace.push("rule6: fallback".into());
        Label::ConstructedPreference
    };
    TaxonomyLabel {
        annotator_id: flag.annotator_id.clone(),
        pair_id: flag.pair.pair_id.clone(),
        record_a: flag.record_a.clone(),
        record_b: flag.record_b.clone(),
        delta: flag.delta,
        label,
        pair_category: pair,
        score_codes: codes,
        rule_trace: trace,
    }
}

/// Pair classification plus taxonomy label for each flag. Item codes come
/// from the first item of the pair, else the second.
pub fn classify_flags(
    dataset: &crate::ingest::Dataset,
    flags: &[InconsistencyFlag],
    config: &RuleConfig,
) -> Vec<TaxonomyLabel> {
    flags
        .iter()
        .map(|f| {
            let md = dataset.metadata(&f.pair.item_a).or_else(|| dataset.metadata(&f.pair.item_b));
            classify_flag(f, md, classify_pair_of(f), config)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    FilterDownweight,
    ElicitCarefully,
    FixInstrument,
    UseAsSignal,
}

impl Routing {
    pub fn as_str(self) -> &'static str {
        match self {
            Routing::FilterDownweight => "filter_downweight",
            Routing::ElicitCarefully => "elicit_carefully",
            Routing::FixInstrument => "fix_instrument",
            Routing::UseAsSignal => "use_as_signal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingThresholds {
    pub t_temp: f64,
    pub t_frame: f64,
    pub t_order: f64,
    /// Anchor failure share above which the instrument is suspect.
    pub t_artifact: f64,
}

impl Default for RoutingThresholds {
    fn default() -> Self {
        RoutingThresholds {
            t_temp: 0.5,
            t_frame: 0.6,
            t_order: 0.6,
            t_artifact: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub annotator_id: String,
    pub routing: Routing,
    pub reason: String,
}

/// First failing check wins: temporal, framing, then order or anchor failures.
pub fn decision_procedure(profile: &ConsistencyProfile, t: &RoutingThresholds) -> RoutingDecision {
    let decide = |routing, reason: String| RoutingDecision {
        annotator_id: profile.annotator_id.clone(),
        routing,
        reason,
    };
    if let Some(v) = profile.temp.filter(|v| *v < t.t_temp) {
        return decide(Routing::FilterDownweight, format!("temp {v:.3} < {}", t.t_temp));
    }
    if let Some(v) = profile.frame.filter(|v| *v < t.t_frame) {
        return decide(Routing::ElicitCarefully, format!("frame {v:.3} < {}", t.t_frame));
    }
    if let Some(v) = profile.order.filter(|v| *v < t.t_order) {
        return decide(Routing::FixInstrument, format!("order {v:.3} < {}", t.t_order));
    }
    if let Some(v) = profile.artifact_rate.filter(|v| *v > t.t_artifact) {
        return decide(Routing::FixInstrument, format!("anchor failures {v:.3} > {}", t.t_artifact));
    }
    decide(Routing::UseAsSignal, "all checks passed".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: Label,
    pub count: usize,
    pub pct: f64,
    pub mean_delta: f64,
}

/// Label distribution, ordered by count descending then label.
pub fn classification_summary(labels: &[TaxonomyLabel]) -> Vec<SummaryRow> {
    let mut acc: std::collections::BTreeMap<Label, (usize, f64)> = Default::default();
    for l in labels {
        let e = acc.entry(l.label).or_default();
        e.0 += 1;
        e.1 += l.delta;
    }
    let total = labels.len() as f64;
    let mut rows: Vec<SummaryRow> = acc
        .into_iter()
        .map(|(label, (count, sum))| SummaryRow {
            label,
            count,
            pct: 100.0 * count as f64 / total,
            mean_delta: sum / count as f64,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.label.cmp(&b.label)));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::PromptPair;

    fn flag(a: f64, b: f64) -> InconsistencyFlag {
        InconsistencyFlag {
            annotator_id: "a".into(),
            pair: PromptPair::repeat_of("x"),
            record_a: "1".into(),
            record_b: "2".into(),
            score_a: a,
            score_b: b,
            delta: (a - b).abs(),
            threshold_used: 15.0,
        }
    }

    fn md(c: ContentType, q: Option<ResponseQuality>, d: Option<EvalComplexity>, e: PlausiblePreference) -> ItemMetadata {
        ItemMetadata {
            item_id: "x".into(),
            content_type: Some(c),
            response_quality: q,
            eval_complexity: d,
            plausible_pref: Some(e),
            ..Default::default()
        }
    }

    #[test]
    fn equivalent_examples() {
        assert_eq!(classify_equivalent_pair(55.0, 55.0).category, PairCategory::Consistent);
        assert_eq!(classify_equivalent_pair(100.0, 0.0).category, PairCategory::Excessive);
        assert_eq!(classify_equivalent_pair(40.0, 68.0).category, PairCategory::Marginal);
    }

    #[test]
    fn directional_examples() {
        let c = |a, b| classify_directional_pair(a, b, Direction::BMore).category;
        assert_eq!(c(30.0, 60.0), PairCategory::Consistent);
        assert_eq!(c(100.0, 6.0), PairCategory::Violation);
        assert_eq!(c(50.0, 58.0), PairCategory::Marginal);
    }

    #[test]
    fn score_codes() {
        assert_eq!(score_pattern(10.0, 100.0), vec![ScoreCode::C1]);
        assert_eq!(score_pattern(60.0, 75.0), vec![ScoreCode::C3, ScoreCode::C4]);
        assert_eq!(score_pattern(47.0, 1.0), vec![ScoreCode::C2, ScoreCode::C4]);
        assert!(score_pattern(10.0, 15.0).is_empty());
    }

    #[test]
    fn hello_is_non_attitude() {
        let f = flag(10.0, 100.0);
        let m = md(
            ContentType::Generic,
            Some(ResponseQuality::Good),
            Some(EvalComplexity::Unidimensional),
            PlausiblePreference::Implausible,
        );
        let l = classify_flag(&f, Some(&m), classify_pair_of(&f), &RuleConfig::default());
        assert_eq!(l.label, Label::NonAttitude);
        assert!(l.rule_trace.iter().any(|r| r.starts_with("rule2")));
    }

    #[test]
    fn echo_is_artifact() {
        let f = flag(47.0, 1.0);
        let m = md(
            ContentType::TaskBased,
            Some(ResponseQuality::Bad),
            None,
            PlausiblePreference::Moderate,
        );
        let l = classify_flag(&f, Some(&m), classify_pair_of(&f), &RuleConfig::default());
        assert_eq!(l.label, Label::MeasurementArtifact);
    }

    #[test]
    fn insurrection_is_genuine_uncrystallized() {
        let f = flag(63.0, 85.0);
        let m = md(
            ContentType::ValueLaden,
            Some(ResponseQuality::Mixed),
            Some(EvalComplexity::MultiAligned),
            PlausiblePreference::Plausible,
        );
        let l = classify_flag(&f, Some(&m), classify_pair_of(&f), &RuleConfig::default());
        assert_eq!(l.label, Label::GenuineUncrystallized);
    }

    #[test]
    fn missing_codes_fall_back() {
        let f = flag(40.0, 60.0);
        let l = classify_flag(&f, None, classify_pair_of(&f), &RuleConfig::default());
        assert_eq!(l.label, Label::ConstructedPreference);
        assert!(l.rule_trace.last().unwrap().contains("fallback"));
    }

    fn profile(temp: Option<f64>, frame: Option<f64>) -> ConsistencyProfile {
        ConsistencyProfile {
            annotator_id: "a".into(),
            temp,
            frame,
            order: None,
            cross: None,
            n_temp_pairs: 0,
            n_frame_pairs: 0,
            n_order_pairs: 0,
            n_cross_items: 0,
            artifact_rate: None,
            n_anchor_items: 0,
            reliability: None,
            tau_used: 15.0,
        }
    }

    #[test]
    fn routing_examples() {
        let t = RoutingThresholds::default();
        assert_eq!(decision_procedure(&profile(Some(0.3), None), &t).routing, Routing::FilterDownweight);
        assert_eq!(decision_procedure(&profile(Some(0.9), Some(0.3)), &t).routing, Routing::ElicitCarefully);
        assert_eq!(decision_procedure(&profile(Some(1.0), Some(1.0)), &t).routing, Routing::UseAsSignal);
        let mut p = profile(Some(1.0), Some(1.0));
        p.artifact_rate = Some(0.2);
        assert_eq!(decision_procedure(&p, &t).routing, Routing::FixInstrument);
    }

    #[test]
    fn summary_orders_by_count() {
        let mk = |l, d| TaxonomyLabel {
            annotator_id: "a".into(),
            pair_id: "p".into(),
            record_a: "1".into(),
            record_b: "2".into(),
            delta: d,
            label: l,
            pair_category: classify_equivalent_pair(0.0, d),
            score_codes: vec![],
            rule_trace: vec!["x".into()],
        };
        let rows = classification_summary(&[
            mk(Label::MeasurementArtifact, 46.0),
            mk(Label::NonAttitude, 90.0),
            mk(Label::NonAttitude, 20.0),
        ]);
        assert_eq!(rows[0].label, Label::NonAttitude);
        assert_eq!(rows[0].count, 2);
        assert!((rows[0].pct - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(rows[0].mean_delta, 55.0);
        assert!(classification_summary(&[]).is_empty());
    }
}
