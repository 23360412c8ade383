//! Client for external text-labeling endpoints: prompt rendering, strict
//! payload parsing, retries and unanimous-agreement merging.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{is_header_line, Dataset, ItemMetadata};

const TEMPLATE: &str = r#"You are an expert researcher annotating prompts using a predefined harmfulness framework.

Prompt to Annotate:
{prompt_text}

Task:
Select ALL categories from the list below that are directly relevant to the prompt.
If no categories apply, return an empty list.

Available Categories:
{label_list}

Rules:
Select categories only if they are explicitly relevant to the prompt.
Do not infer intent beyond the prompt text.
Do not include weak or tangential categories.

Output:
Return ONLY valid JSON with exactly these keys:
{
"labels": ["Category A", "Category B"]
}"#;

fn check_labels(label_list: &[String]) -> Result<()> {
    if label_list.is_empty() {
        return Err(Error::InvalidParameter("label list is empty".into()));
    }
    let unique: BTreeSet<&String> = label_list.iter().collect();
    if unique.len() != label_list.len() {
        return Err(Error::InvalidParameter("label list has duplicates".into()));
    }
    Ok(())
}

/// Fills the labeling template. The prompt is inserted as a JSON string
/// literal so quotes and newlines cannot break the template.
pub fn render_prompt(prompt_text: &str, label_list: &[String]) -> Result<String> {
    if prompt_text.is_empty() {
        return Err(Error::InvalidParameter("prompt text is empty".into()));
    }
    check_labels(label_list)?;
    let quoted = serde_json::to_string(prompt_text)?;
    Ok(TEMPLATE
        .replacen("{prompt_text}", &quoted, 1)
        .replacen("{label_list}", &label_list.join("\n"), 1))
}

/// Parses `{"labels": [...]}` with no other keys and only known labels.
pub fn parse_payload(raw: &str, label_list: &[String]) -> std::result::Result<BTreeSet<String>, String> {
    let value: serde_json::Value = serde_json::from_str(raw.trim()).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("payload is not an object")?;
    if obj.len() != 1 {
        return Err(format!("payload has {} keys, expected only `labels`", obj.len()));
    }
    let arr = obj
        .get("labels")
        .ok_or("payload lacks `labels`")?
        .as_array()
        .ok_or("`labels` is not an array")?;
    let mut out = BTreeSet::new();
    for v in arr {
        let s = v.as_str().ok_or("`labels` holds a non-string")?;
        if !label_list.iter().any(|l| l == s) {
            return Err(format!("unknown label `{s}`"));
        }
        out.insert(s.to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub endpoint_id: String,
    pub base_url: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub auth_env_var: Option<String>,
    pub model_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sends one rendered prompt to one endpoint and returns the raw reply text.
pub trait Transport: Send + Sync {
    fn complete(&self, endpoint: &EndpointConfig, prompt: &str) -> std::result::Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles after each.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay_ms: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointResult {
    pub endpoint_id: String,
    /// `None` when every attempt failed; counted as the empty set.
    pub labels: Option<BTreeSet<String>>,
    pub attempts: u32,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub labels: BTreeSet<String>,
    pub per_endpoint: Vec<EndpointResult>,
}

fn query_endpoint(
    endpoint: &EndpointConfig,
    rendered: &str,
    label_list: &[String],
    transport: &dyn Transport,
    retry: &RetryPolicy,
) -> EndpointResult {
    let mut last = String::new();
    for attempt in 0..=retry.max_retries {
        if attempt > 0 && retry.base_delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(retry.base_delay_ms << (attempt - 1)));
        }
        let outcome = transport
            .complete(endpoint, rendered)
            .map_err(|e| format!("transport: {e}"))
            .and_then(|raw| parse_payload(&raw, label_list));
        match outcome {
            Ok(labels) => {
                return EndpointResult {
                    endpoint_id: endpoint.endpoint_id.clone(),
                    labels: Some(labels),
                    attempts: attempt + 1,
                    warning: None,
                }
            }
            Err(e) => last = e,
        }
    }
    EndpointResult {
        endpoint_id: endpoint.endpoint_id.clone(),
        labels: None,
        attempts: retry.max_retries + 1,
        warning: Some(format!("{}: {last}; treated as empty", endpoint.endpoint_id)),
    }
}

fn check_endpoints(endpoints: &[EndpointConfig]) -> Result<Vec<&EndpointConfig>> {
    if endpoints.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "unanimous labeling needs at least 3 endpoints, got {}",
            endpoints.len()
        )));
    }
    let mut sorted: Vec<&EndpointConfig> = endpoints.iter().collect();
    sorted.sort_by(|a, b| a.endpoint_id.cmp(&b.endpoint_id));
    if sorted.windows(2).any(|w| w[0].endpoint_id == w[1].endpoint_id) {
        return Err(Error::InvalidParameter("duplicate endpoint ids".into()));
    }
    Ok(sorted)
}

fn merge(per_endpoint: Vec<EndpointResult>) -> Result<LabelOutcome> {
    if per_endpoint.iter().all(|r| r.labels.is_none()) {
        return Err(Error::AllEndpointsFailed(per_endpoint.len()));
    }
    let mut sets = per_endpoint.iter().map(|r| r.labels.clone().unwrap_or_default());
    let first = sets.next().unwrap_or_default();
    let labels = sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect());
    Ok(LabelOutcome { labels, per_endpoint })
}

/// Labels one prompt with every endpoint and keeps the labels all agree on.
pub fn label_prompt(
    prompt_text: &str,
    label_list: &[String],
    endpoints: &[EndpointConfig],
    transport: &dyn Transport,
    retry: &RetryPolicy,
) -> Result<LabelOutcome> {
    let endpoints = check_endpoints(endpoints)?;
    let rendered = render_prompt(prompt_text, label_list)?;
    merge(
        endpoints
            .iter()
            .map(|e| query_endpoint(e, &rendered, label_list, transport, retry))
            .collect(),
    )
}

/// Prompt text to agreed labels, persisted as JSONL.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThemeCache {
    entries: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    prompt_text: String,
    labels: BTreeSet<String>,
}

impl ThemeCache {
    pub fn get(&self, prompt_text: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(prompt_text)
    }

    pub fn insert(&mut self, prompt_text: String, labels: BTreeSet<String>) {
        self.entries.insert(prompt_text, labels);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads a cache file; a missing file is an empty cache.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut cache = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() || is_header_line(&line) {
                continue;
            }
            let row: CacheRow = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            cache.entries.insert(row.prompt_text, row.labels);
        }
        Ok(cache)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        for (prompt_text, labels) in &self.entries {
            serde_json::to_writer(
                &mut w,
                &CacheRow {
                    prompt_text: prompt_text.clone(),
                    labels: labels.clone(),
                },
            )?;
            w.write_all(b"\n").map_err(|e| Error::io("<cache>", e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStatus {
    Labeled,
    Cached,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptReport {
    pub prompt_text: String,
    pub item_ids: Vec<String>,
    pub status: PromptStatus,
    pub labels: BTreeSet<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusResult {
    /// One entry per item with its agreed theme labels.
    pub patch: Vec<ItemMetadata>,
    pub prompts: Vec<PromptReport>,
    pub n_failed: usize,
}

/// Labels every distinct prompt not already cached, with at most
/// `concurrency_limit` requests in flight. Newly labeled prompts are added to
/// `cache`.
pub fn label_corpus(
    dataset: &Dataset,
    label_list: &[String],
    endpoints: &[EndpointConfig],
    transport: &dyn Transport,
    concurrency_limit: usize,
    retry: &RetryPolicy,
    cache: &mut ThemeCache,
) -> Result<CorpusResult> {
    use rayon::prelude::*;

    let endpoints = check_endpoints(endpoints)?;
    check_labels(label_list)?;
    if concurrency_limit == 0 {
        return Err(Error::InvalidParameter("concurrency limit must be positive".into()));
    }
    let mut prompts: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in dataset.records() {
        prompts.entry(&r.prompt_text).or_default().insert(&r.item_id);
    }
    let pending: Vec<&str> = prompts.keys().copied().filter(|p| cache.get(p).is_none()).collect();
    let jobs: Vec<(usize, usize)> = (0..pending.len())
        .flat_map(|p| (0..endpoints.len()).map(move |e| (p, e)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency_limit)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let answers: Vec<Result<EndpointResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, e)| {
                let rendered = render_prompt(pending[p], label_list)?;
                Ok(query_endpoint(endpoints[e], &rendered, label_list, transport, retry))
            })
            .collect()
    });
    let mut per_prompt: Vec<Vec<EndpointResult>> = vec![Vec::new(); pending.len()];
    for ((p, _), a) in jobs.iter().zip(answers) {
        per_prompt[*p].push(a?);
    }
    let mut fresh: BTreeMap<&str, std::result::Result<LabelOutcome, String>> = BTreeMap::new();
    for (p, results) in pending.iter().zip(per_prompt) {
        fresh.insert(p, merge(results).map_err(|e| e.to_string()));
    }

    let mut reports = Vec::new();
    let mut patch = Vec::new();
    for (prompt, items) in &prompts {
        let (status, labels, warnings) = match fresh.remove(prompt) {
            None => (PromptStatus::Cached, cache.get(prompt).cloned().unwrap_or_default(), Vec::new()),
            Some(Ok(outcome)) => {
                let warnings = outcome.per_endpoint.iter().filter_map(|r| r.warning.clone()).collect();
                cache.insert(prompt.to_string(), outcome.labels.clone());
                (PromptStatus::Labeled, outcome.labels, warnings)
            }
            Some(Err(e)) => (PromptStatus::Failed, BTreeSet::new(), vec![e]),
        };
        if status != PromptStatus::Failed {
            for item in items {
                patch.push(ItemMetadata {
                    item_id: item.to_string(),
                    theme_labels: Some(labels.clone()),
                    ..Default::default()
                });
            }
        }
        reports.push(PromptReport {
            prompt_text: prompt.to_string(),
            item_ids: items.iter().map(|s| s.to_string()).collect(),
            status,
            labels,
            warnings,
        });
    }
    patch.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let n_failed = reports.iter().filter(|r| r.status == PromptStatus::Failed).count();
    Ok(CorpusResult {
        patch,
        prompts: reports,
        n_failed,
    })
}

/// Overlays theme labels from `patch` onto `existing` metadata.
pub fn apply_patch(existing: Vec<ItemMetadata>, patch: &[ItemMetadata]) -> Vec<ItemMetadata> {
    let mut by_id: BTreeMap<String, ItemMetadata> = existing.into_iter().map(|m| (m.item_id.clone(), m)).collect();
    for p in patch {
        by_id
            .entry(p.item_id.clone())
            .or_insert_with(|| ItemMetadata {
                item_id: p.item_id.clone(),
                ..Default::default()
            })
            .theme_labels = p.theme_labels.clone();
    }
    by_id.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn render_substitutes_both_fields() {
        let text = render_prompt("hi", &labels(&["Privacy"])).unwrap();
        assert!(text.contains("\"hi\""));
        assert!(text.contains("Available Categories:\nPrivacy\n"));
        assert!(text.contains("Do not include weak or tangential categories."));
        assert!(render_prompt("hi", &[]).is_err());
    }

    #[test]
    fn render_escapes_quotes() {
        let text = render_prompt("say \"boo\"\nnow", &labels(&["A"])).unwrap();
        assert!(text.contains(r#""say \"boo\"\nnow""#));
        assert!(text.ends_with("}"));
    }

    #[test]
    fn strict_payloads() {
        let l = labels(&["A", "B"]);
        assert_eq!(parse_payload(r#"{"labels": ["A"]}"#, &l).unwrap().len(), 1);
        assert!(parse_payload(r#"{"labels": []}"#, &l).unwrap().is_empty());
        assert!(parse_payload(r#"{"labels": ["A"], "note": 1}"#, &l).is_err());
        assert!(parse_payload(r#"{"themes": ["A"]}"#, &l).is_err());
        assert!(parse_payload(r#"{"labels": ["Z"]}"#, &l).is_err());
        assert!(parse_payload("A, B", &l).is_err());
    }
}
