use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "prefaudit", version, about = "Validity audits for preference-annotation datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
    Report,
}

/// Options shared by every subcommand.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML file of settings; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Abort on the first malformed input row.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Inputs {
    /// Annotation records (JSONL, or CSV by extension).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Prompt embeddings (JSONL: item_id, vector)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Item metadata: coding, theme labels, anchor scores (JSONL)
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Prompt pairs (JSONL).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a dataset and report what diagnostics it supports.
    Validate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        common: Common,
    },
    /// Flag same-annotator rating differences on similar prompt pairs.
    Pairs {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        sim_threshold: Option<f64>,
        #[arg(long)]
        delta_threshold: Option<f64>,
        /// Only pair prompts the same annotator rated.
        #[arg(long)]
        same_annotator: bool,
        /// Also run the test-retest filtering ladder.
        #[arg(long)]
        ladder: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Flag inconsistent repeated ratings of the same item.
    Repeats {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        delta_threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-annotator consistency profiles and routing.
    Diagnose {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        diag: DiagArgs,
        #[command(flatten)]
        routing: RoutingArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Assign taxonomy labels to flagged pairs.
    Classify {
        #[command(flatten)]
        inputs: Inputs,
        /// Flags written by `pairs` or `repeats`.
        #[arg(long)]
        flags: Option<PathBuf>,
        #[arg(long)]
        artifact_floor: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-theme inconsistency ratios and population statistics.
    Ratio {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        ratio: RatioArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Majority-label flips when restricting to low or high inconsistency pools.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        ratio: RatioArgs,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        harm_threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Reliability weights and weighted export.
    Weights {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        diag: DiagArgs,
        /// binary, linear or sigmoid.
        #[arg(long)]
        weight_mode: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        /// weight, filter or both.
        #[arg(long)]
        policy: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Diagnostic budget for a tier, optionally with task schedules.
    Plan {
        #[arg(long)]
        tier: Option<u8>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        annotators: Option<usize>,
        #[arg(long)]
        cost: Option<f64>,
        #[arg(long)]
        repeat_rate: Option<f64>,
        #[arg(long)]
        min_spacing: Option<usize>,
        /// Emit per-annotator task schedules.
        #[arg(long)]
        schedule: bool,
        /// Item ids, one per line, for the schedule.
        #[arg(long)]
        item_ids: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Consistency thresholds for a rating scale.
    Calibrate {
        #[command(flatten)]
        inputs: Inputs,
        /// empirical, scale or consequence.
        #[arg(long)]
        method: Option<String>,
        /// continuous_0_100, likert_5 or binary_pair.
        #[arg(long)]
        scale_kind: Option<String>,
        /// Multiplier on the clear-case spread (empirical).
        #[arg(long)]
        k: Option<f64>,
        /// Score margin that flips a downstream decision (consequence).
        #[arg(long)]
        margin: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic dataset with known latent annotator types.
    Synth {
        #[arg(long)]
        n_per_type: Option<usize>,
        /// Size of the item pool.
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        items_per_annotator: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the latent-type sidecar.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Theme labels from a panel of model endpoints.
    Themes {
        #[command(flatten)]
        inputs: Inputs,
        /// Theme names, one per line.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Label cache (JSONL); read before and rewritten after the run
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Maximum concurrent endpoint requests
        #[arg(long)]
        concurrency: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Human-readable tables from earlier outputs.
    Report {
        /// Output files of pairs, repeats, classify, ratio, simulate or diagnose.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct DiagArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub min_gap: Option<i64>,
    /// weighted, min or hierarchical.
    #[arg(long)]
    pub reliability_mode: Option<String>,
    /// Four comma-separated weights for temp, frame, order, cross.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RoutingArgs {
    #[arg(long)]
    pub t_temp: Option<f64>,
    #[arg(long)]
    pub t_frame: Option<f64>,
    #[arg(long)]
    pub t_order: Option<f64>,
    #[arg(long)]
    pub t_artifact: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RatioArgs {
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_support: Option<usize>,
    /// Closed-form baseline instead of resampling.
    #[arg(long)]
    pub exact: bool,
}
