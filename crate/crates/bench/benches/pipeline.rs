use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use prefaudit_bench::fixture;
use prefaudit_core::aggregation::{pool_flip_simulation, FlipConfig};
use prefaudit_core::diagnostics::{profile_all, DiagnosticConfig};
use prefaudit_core::pairing::{cosine_similarity, find_similar_pairs};
use prefaudit_core::planner::{plan_tier, PlanOptions};
use prefaudit_core::ratio::{exact_baseline, ratio_table, RatioConfig};
use prefaudit_core::synth::{generate, SynthParams};

fn pairing(c: &mut Criterion) {
    let u: Vec<f64> = (0..768).map(|i| (i as f64).sin()).collect();
    let v: Vec<f64> = (0..768).map(|i| (i as f64).cos()).collect();
    c.bench_function("cosine_768", |b| b.iter(|| cosine_similarity(black_box(&u), black_box(&v))));
    let data = fixture(2, 400, 64);
    c.bench_function("find_similar_pairs_420_items", |b| b.iter(|| find_similar_pairs(&data, 0.9, true).unwrap()));
}

fn diagnostics(c: &mut Criterion) {
    let data = fixture(10, 400, 8);
    let config = DiagnosticConfig::default();
    c.bench_function("profile_all_40_annotators", |b| b.iter(|| profile_all(&data, &config)));
}

fn ratio(c: &mut Criterion) {
    let data = fixture(5, 400, 8);
    let config = RatioConfig { resamples: 1000, seed: 7, ..RatioConfig::default() };
    c.bench_function("ratio_table_1000_resamples", |b| b.iter(|| ratio_table(&data, &config).unwrap()));
    let history: Vec<f64> = (0..400).map(|i| ((i * 37) % 101) as f64).collect();
    c.bench_function("exact_baseline_400", |b| b.iter(|| exact_baseline(black_box(&history), 100).unwrap()));
}

fn flips(c: &mut Criterion) {
    let data = fixture(5, 400, 8);
    let (ratios, _) = ratio_table(&data, &RatioConfig { resamples: 200, seed: 7, ..RatioConfig::default() }).unwrap();
    let config = FlipConfig { iterations: 200, seed: 7, ..FlipConfig::default() };
    c.bench_function("pool_flip_simulation_200_iter", |b| b.iter(|| pool_flip_simulation(&data, &ratios, &config).unwrap()));
}

fn synth(c: &mut Criterion) {
    let plan = plan_tier(1, 400, 1, 0.5, &PlanOptions::default()).unwrap();
    c.bench_function("synth_generate_200_annotators", |b| {
        b.iter(|| generate(50, 400, &plan, &SynthParams::default(), 42).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = pairing, diagnostics, ratio, flips, synth
}
criterion_main!(benches);
