//! Settings file, flag merging and the run configuration echoed into outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prefaudit_core::themes::EndpointConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{Common, Format};
use crate::exit::{Exit, Outcome};

/// Every key a settings file may carry. Unknown keys are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub flags: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub strict: Option<bool>,

    pub tau: Option<f64>,
    pub min_gap: Option<i64>,
    pub sim_threshold: Option<f64>,
    pub delta_threshold: Option<f64>,
    pub same_annotator: Option<bool>,
    pub ladder: Option<bool>,
    pub t_temp: Option<f64>,
    pub t_frame: Option<f64>,
    pub t_order: Option<f64>,
    pub t_artifact: Option<f64>,
    pub artifact_floor: Option<f64>,
    pub reliability_mode: Option<String>,
    pub weights: Option<Vec<f64>>,

    pub seed: Option<u64>,
    pub resamples: Option<usize>,
    pub min_support: Option<usize>,
    pub exact: Option<bool>,
    pub iterations: Option<usize>,
    pub sample_size: Option<usize>,
    pub harm_threshold: Option<f64>,

    pub weight_mode: Option<String>,
    pub threshold: Option<f64>,
    pub policy: Option<String>,

    pub tier: Option<u8>,
    pub items: Option<usize>,
    pub annotators: Option<usize>,
    pub cost: Option<f64>,
    pub repeat_rate: Option<f64>,
    pub min_spacing: Option<usize>,
    pub schedule: Option<bool>,
    pub item_ids: Option<PathBuf>,

    pub method: Option<String>,
    pub scale_kind: Option<String>,
    pub k: Option<f64>,
    pub margin: Option<f64>,

    pub n_per_type: Option<usize>,
    pub items_per_annotator: Option<usize>,
    pub truth: Option<PathBuf>,

    pub labels: Option<Vec<String>>,
    pub cache: Option<PathBuf>,
    pub concurrency: Option<usize>,
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Outcome<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Exit::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Exit::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Flag value, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Thresholds {
    pub tau: Option<f64>,
    pub sim_threshold: Option<f64>,
    pub delta_threshold: Option<f64>,
    pub t_temp: Option<f64>,
    pub t_frame: Option<f64>,
    pub t_order: Option<f64>,
}

/// The effective settings of one run, written at the head of every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub version: String,
    pub inputs: BTreeMap<String, String>,
    pub thresholds: Thresholds,
    pub seed: Option<u64>,
    pub resamples: Option<usize>,
    pub iterations: Option<usize>,
    pub output: Option<String>,
    pub format: Format,
    /// Subcommand-specific settings.
    pub options: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn new(subcommand: &str, common: &Common, file: &FileConfig) -> Self {
        RunConfig {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
            thresholds: Thresholds::default(),
            seed: None,
            resamples: None,
            iterations: None,
            output: common.output.clone().or(file.output.clone()).map(|p| p.display().to_string()),
            format: pick(common.format, file.format, Format::Jsonl),
            options: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Option<PathBuf>) {
        if let Some(p) = path {
            self.inputs.insert(name.to_string(), p.display().to_string());
        }
    }

    pub fn option(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.options.insert(name.to_string(), v);
    }

    pub fn output_path(&self) -> Option<PathBuf> {
        self.output.as_ref().map(PathBuf::from)
    }
}
