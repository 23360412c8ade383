//! Shared fixtures for the benchmarks.

use std::collections::BTreeSet;

use prefaudit_core::planner::{plan_tier, PlanOptions};
use prefaudit_core::synth::{generate, SynthParams};
use prefaudit_core::{Dataset, EmbeddingTable, ItemMetadata};

/// A seeded synthetic dataset with `n_per_type` annotators of each latent
/// type, theme labels on every item and deterministic embeddings.
pub fn fixture(n_per_type: usize, n_items: usize, dim: usize) -> Dataset {
    let plan = plan_tier(1, n_items, 1, 0.5, &PlanOptions::default()).expect("plan");
    let synthetic = generate(n_per_type, n_items, &plan, &SynthParams::default(), 42).expect("synth");
    let items: Vec<String> = synthetic.dataset.items().map(str::to_owned).collect();
    let metadata = items.iter().enumerate().map(|(i, id)| ItemMetadata {
        item_id: id.clone(),
        theme_labels: Some(BTreeSet::from([format!("theme{}", i % 4)])),
        ..synthetic.dataset.metadata(id).cloned().unwrap_or_default()
    });
    let embeddings = EmbeddingTable::new(items.iter().enumerate().map(|(i, id)| {
        let v = (0..dim).map(|d| (((i * 31 + d * 17) % 97) as f64 / 97.0) - 0.5).collect();
        (id.clone(), v)
    }))
    .expect("embeddings");
    synthetic.dataset.clone().with_metadata(metadata).with_embeddings(embeddings)
}
