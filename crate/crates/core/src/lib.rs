//! Validity auditing for human preference-annotation datasets.

pub mod aggregation;
pub mod diagnostics;
pub mod error;
pub mod ingest;
pub mod pairing;
pub mod planner;
pub mod ratio;
pub mod stats;
pub mod synth;
pub mod taxonomy;
pub mod themes;
pub mod weighting;

pub use error::{Error, Result};
pub use ingest::{AnnotationRecord, Dataset, EmbeddingTable, ItemMetadata, ScaleKind, Score};
