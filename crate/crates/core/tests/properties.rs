use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use prefaudit_core::diagnostics::{reliability, ConsistencyProfile, ReliabilityMode, ReliabilitySpec};
use prefaudit_core::pairing::{cosine_similarity, filter_ladder, test_retest_ladder, InconsistencyFlag, PromptPair};
use prefaudit_core::planner::{assign_diagnostics, plan_tier, PlanOptions};
use prefaudit_core::ratio::{exact_baseline, ratio_for_items, RatioConfig};
use prefaudit_core::stats;
use prefaudit_core::taxonomy::{classify_equivalent_pair, PairCategory};
use prefaudit_core::weighting::{combine, write_weighted, ExportPolicy, RecordWeight, WeightMode, WeightParams, WeightTable};
use prefaudit_core::{AnnotationRecord, Dataset, ScaleKind, Score};

fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0f64..100.0, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

fn spread(xs: &[f64]) -> bool {
    stats::variance_sample(xs) > 1e-6
}

fn record(i: usize, annotator: &str, item: &str, score: f64) -> AnnotationRecord {
    AnnotationRecord {
        record_id: format!("r{i}"),
        annotator_id: annotator.into(),
        item_id: item.into(),
        prompt_text: format!("prompt {item}"),
        response_text: None,
        model_id: None,
        score: Score::Value(score),
        scale_kind: ScaleKind::Continuous,
        session_id: None,
        timestamp: None,
        position_index: None,
        framing_id: None,
        condition_tag: None,
    }
}

fn profile(temp: Option<f64>, frame: Option<f64>, order: Option<f64>, cross: Option<f64>) -> ConsistencyProfile {
    let mut p: ConsistencyProfile = serde_json::from_value(serde_json::json!({
        "annotator_id": "a",
        "temp": null, "frame": null, "order": null, "cross": null,
        "n_temp_pairs": 0, "n_frame_pairs": 0, "n_order_pairs": 0, "n_cross_items": 0,
        "artifact_rate": null, "n_anchor_items": 0, "reliability": null, "tau_used": 15.0
    }))
    .expect("profile template");
    p.temp = temp;
    p.frame = frame;
    p.order = order;
    p.cross = cross;
    p
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded((u, v) in vec_pair()) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-6) && v.iter().any(|x| x.abs() > 1e-6));
        let a = cosine_similarity(&u, &v).unwrap();
        let b = cosine_similarity(&v, &u).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn equivalent_bands_are_monotone_in_delta(a in 0.0f64..100.0, d1 in 0.0f64..100.0, d2 in 0.0f64..100.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let rank = |c: PairCategory| match c {
            PairCategory::Consistent => 0,
            PairCategory::Marginal => 1,
            _ => 2,
        };
        prop_assert!(rank(classify_equivalent_pair(a, a + lo).category) <= rank(classify_equivalent_pair(a, a + hi).category));
    }

    #[test]
    fn min_reliability_never_exceeds_weighted(
        parts in prop::collection::vec(prop::option::of(0.0f64..1.0), 4),
        weights in prop::array::uniform4(0.0f64..5.0),
    ) {
        prop_assume!(parts.iter().any(Option::is_some));
        let p = profile(parts[0], parts[1], parts[2], parts[3]);
        let spec = |mode| ReliabilitySpec { mode, weights, ..Default::default() };
        let min = reliability(&p, &spec(ReliabilityMode::Min)).unwrap();
        let weighted = reliability(&p, &spec(ReliabilityMode::Weighted)).unwrap();
        prop_assert!(min <= weighted + 1e-12);
    }

    #[test]
    fn ratio_is_invariant_to_shift_and_scale(
        values in prop::collection::vec(0.0f64..100.0, 8..20),
        theme_len in 5usize..8,
        shift in -50.0f64..50.0,
        scale in 0.1f64..10.0,
    ) {
        prop_assume!(spread(&values));
        let config = RatioConfig { exact_baseline: true, ..Default::default() };
        let build = |f: &dyn Fn(f64) -> f64| -> BTreeMap<String, f64> {
            values.iter().enumerate().map(|(i, v)| (format!("i{i:02}"), f(*v))).collect()
        };
        let base = build(&|v| v);
        let moved = build(&|v| v * scale + shift);
        let theme: BTreeSet<&str> = base.keys().take(theme_len).map(String::as_str).collect();
        let r1 = ratio_for_items(&base, "a", "t", &theme, &config).unwrap().ratio;
        let r2 = ratio_for_items(&moved, "a", "t", &theme, &config).unwrap().ratio;
        prop_assert!((r1 - r2).abs() <= 1e-9 * r1.abs().max(1.0));
    }

    #[test]
    fn exact_baseline_matches_the_closed_form(values in prop::collection::vec(0.0f64..100.0, 2..15), k in 1usize..15) {
        prop_assume!(k <= values.len());
        let n = values.len() as f64;
        let expected = (k as f64 - 1.0) / k as f64 * n / (n - 1.0) * stats::variance_population(&values);
        prop_assert!((exact_baseline(&values, k).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn welch_t_is_antisymmetric((a, b) in vec_pair()) {
        prop_assume!(spread(&a) && spread(&b));
        let ab = stats::welch_t(&a, &b).unwrap();
        let ba = stats::welch_t(&b, &a).unwrap();
        prop_assert!((ab.statistic + ba.statistic).abs() < 1e-9);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
    }

    #[test]
    fn pearson_is_invariant_to_positive_affine_maps((x, y) in vec_pair(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
        prop_assume!(spread(&x) && spread(&y));
        let mapped: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r1 = stats::pearson_r(&x, &y).unwrap();
        let r2 = stats::pearson_r(&mapped, &y).unwrap();
        prop_assert!((r1 - r2).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&r1));
    }

    #[test]
    fn p_value_decreases_in_abs_t(t1 in 0.0f64..20.0, t2 in 0.0f64..20.0, df in 1.0f64..200.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(stats::t_two_sided_p(hi, df) <= stats::t_two_sided_p(lo, df) + 1e-12);
        prop_assert!((stats::t_two_sided_p(-lo, df) - stats::t_two_sided_p(lo, df)).abs() < 1e-12);
    }

    #[test]
    fn weights_are_monotone_in_reliability(
        r1 in 0.0f64..1.0, r2 in 0.0f64..1.0, item in prop::option::of(0.0f64..1.0),
        mode in prop::sample::select(vec![WeightMode::Binary, WeightMode::Linear, WeightMode::Sigmoid]),
    ) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let params = WeightParams::default();
        let wl = combine(mode, &params, Some(lo), item);
        let wh = combine(mode, &params, Some(hi), item);
        prop_assert!(wl <= wh + 1e-12);
        prop_assert!((0.0..=1.0).contains(&wl));
    }

    #[test]
    fn export_conserves_records(weights in prop::collection::vec(0.0f64..1.0, 1..30), policy in prop::sample::select(vec![ExportPolicy::Weight, ExportPolicy::Filter, ExportPolicy::Both])) {
        let records: Vec<AnnotationRecord> = weights.iter().enumerate().map(|(i, _)| record(i, "a", &format!("i{i}"), 50.0)).collect();
        let ds = Dataset::new(records).unwrap();
        let mut weights = weights;
        for w in weights.iter_mut().step_by(3) {
            *w = 0.0;
        }
        let table = WeightTable {
            weight_mode: WeightMode::Linear,
            records: weights.iter().enumerate().map(|(i, w)| RecordWeight {
                record_id: format!("r{i}"),
                annotator_id: "a".into(),
                item_id: format!("i{i}"),
                weight: *w,
            }).collect(),
            annotator_reliability: BTreeMap::new(),
            item_reliability: BTreeMap::new(),
        };
        let mut out = Vec::new();
        let summary = write_weighted(&mut out, &ds, &table, policy).unwrap();
        prop_assert_eq!(summary.input, weights.len());
        prop_assert_eq!(summary.retained + summary.dropped, summary.input);
        let rows: Vec<serde_json::Value> = String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        prop_assert_eq!(rows.len(), summary.retained);
        let zeros = weights.iter().filter(|w| **w == 0.0).count();
        prop_assert_eq!(summary.dropped, if policy == ExportPolicy::Weight { 0 } else { zeros });
        if policy != ExportPolicy::Filter {
            let exported: f64 = rows.iter().map(|r| r["weight"].as_f64().unwrap()).sum();
            prop_assert!((exported - weights.iter().sum::<f64>()).abs() < 1e-9);
        }
    }

    #[test]
    fn ladder_counts_never_increase(deltas in prop::collection::vec((0.0f64..100.0, 0.8f64..1.0, any::<bool>()), 0..40)) {
        let mut records = Vec::new();
        let mut flags = Vec::new();
        for (i, (delta, sim, same_prompt)) in deltas.iter().enumerate() {
            let (ia, ib) = (format!("x{i}"), format!("y{i}"));
            let mut a = record(2 * i, "a", &ia, 0.0);
            let mut b = record(2 * i + 1, "a", &ib, *delta);
            if *same_prompt {
                a.prompt_text = "same".into();
                b.prompt_text = "same".into();
            }
            records.push(a);
            records.push(b);
            flags.push(InconsistencyFlag {
                annotator_id: "a".into(),
                pair: PromptPair::from_similarity(&ia, &ib, *sim),
                record_a: format!("r{}", 2 * i),
                record_b: format!("r{}", 2 * i + 1),
                score_a: 0.0,
                score_b: *delta,
                delta: *delta,
                threshold_used: 15.0,
            });
        }
        let ds = Dataset::new(records).unwrap();
        let report = filter_ladder(&ds, &flags, &test_retest_ladder(0.9, 15.0));
        let counts: Vec<usize> = report.rows.iter().map(|r| r.n_pairs).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(counts[0] <= flags.len());
        prop_assert_eq!(report.survivors.len(), *counts.last().unwrap());
    }

    #[test]
    fn band_edges_are_exact(base in 0u32..60) {
        let b = base as f64;
        prop_assert_eq!(classify_equivalent_pair(b, b + 15.0).category, PairCategory::Consistent);
        prop_assert_eq!(classify_equivalent_pair(b, b + 16.0).category, PairCategory::Marginal);
        prop_assert_eq!(classify_equivalent_pair(b + 30.0, b).category, PairCategory::Marginal);
        prop_assert_eq!(classify_equivalent_pair(b + 31.0, b).category, PairCategory::Excessive);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schedules_keep_repeat_spacing(n_items in 400usize..1200, n_annotators in 1usize..4, seed in any::<u64>(), tier in 1u8..4) {
        let plan = plan_tier(tier, n_items, n_annotators, 0.5, &PlanOptions::default());
        prop_assume!(plan.is_ok());
        let plan = plan.unwrap();
        let items: Vec<String> = (0..n_items).map(|i| format!("i{i}")).collect();
        let anns: Vec<String> = (0..n_annotators).map(|i| format!("a{i}")).collect();
        let s = assign_diagnostics(&plan, &items, &anns, seed, None).unwrap();
        prop_assert_eq!(s.extra_annotations(), plan.extra_annotations);
        for a in &s.annotators {
            for t in &a.tasks {
                if let prefaudit_core::planner::TaskKind::Repeat { of_position } = t.kind {
                    prop_assert!(t.position - of_position > plan.min_spacing);
                    prop_assert_eq!(&a.tasks[of_position].item_id, &t.item_id);
                }
            }
        }
    }
}
