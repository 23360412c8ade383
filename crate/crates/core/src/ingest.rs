//! Canonical data model and loaders for annotation records, embeddings and
//! item metadata.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScaleKind {
    #[serde(rename = "continuous_0_100")]
    Continuous,
    #[serde(rename = "likert_5")]
    Likert5,
    #[serde(rename = "binary_pair")]
    BinaryPair,
}

impl ScaleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleKind::Continuous => "continuous_0_100",
            ScaleKind::Likert5 => "likert_5",
            ScaleKind::BinaryPair => "binary_pair",
        }
    }

    /// Default consistency tolerance in raw scale units.
    pub fn default_tau(self) -> f64 {
        match self {
            ScaleKind::Continuous => 15.0,
            ScaleKind::Likert5 => 1.0,
            ScaleKind::BinaryPair => 0.0,
        }
    }
}

impl std::str::FromStr for ScaleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous_0_100" | "continuous" => Ok(ScaleKind::Continuous),
            "likert_5" | "likert" => Ok(ScaleKind::Likert5),
            "binary_pair" | "binary" => Ok(ScaleKind::BinaryPair),
            other => Err(Error::InvalidParameter(format!("unknown scale kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

/// A rating: a number on a continuous or Likert scale, or a pairwise choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Score {
    Value(f64),
    Choice(Choice),
}

impl Score {
    pub fn value(self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(v),
            Score::Choice(_) => None,
        }
    }

    pub fn choice(self) -> Option<Choice> {
        match self {
            Score::Choice(c) => Some(c),
            Score::Value(_) => None,
        }
    }
}

/// One observed response of an annotator to an item under some condition.
///
/// The condition is spread over `session_id`, `framing_id` and
/// `position_index`; `condition_tag` is free-form and, for `binary_pair`
/// records, carries the presentation order (`AB` or `BA`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub record_id: String,
    pub annotator_id: String,
    pub item_id: String,
    pub prompt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub score: Score,
    pub scale_kind: ScaleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framing_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_tag: Option<String>,
}

impl AnnotationRecord {
    /// Checks the score against the bounds of the record's scale.
    pub fn check_score(&self) -> std::result::Result<(), String> {
        match (self.scale_kind, self.score) {
            (ScaleKind::Continuous, Score::Value(v)) if v.is_finite() && (0.0..=100.0).contains(&v) => Ok(()),
            (ScaleKind::Continuous, Score::Value(v)) => {
                Err(format!("score {v} outside [0, 100] for continuous_0_100"))
            }
            (ScaleKind::Likert5, Score::Value(v)) if v.is_finite() && (1.0..=5.0).contains(&v) => Ok(()),
            (ScaleKind::Likert5, Score::Value(v)) => Err(format!("score {v} outside [1, 5] for likert_5")),
            (ScaleKind::BinaryPair, Score::Choice(_)) => Ok(()),
            (ScaleKind::BinaryPair, Score::Value(v)) => {
                Err(format!("score {v} is not a choice (A or B) for binary_pair"))
            }
            (kind, Score::Choice(c)) => Err(format!("choice {c:?} given for numeric scale {}", kind.as_str())),
        }
    }

    /// Raw numeric rating, `None` for pairwise choices.
    pub fn value(&self) -> Option<f64> {
        self.score.value()
    }

    /// Numeric rating mapped onto 0-100 (`(s - 1) * 25` for Likert-5).
    pub fn common_value(&self) -> Option<f64> {
        let v = self.score.value()?;
        Some(match self.scale_kind {
            ScaleKind::Likert5 => (v - 1.0) * 25.0,
            _ => v,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut dimension = None;
        let mut map = BTreeMap::new();
        for (item_id, vector) in entries {
            let expected = *dimension.get_or_insert(vector.len());
            if vector.len() != expected {
                return Err(Error::DimensionMismatch {
                    item_id,
                    expected,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { item_id });
            }
            map.insert(item_id, vector);
        }
        match dimension {
            Some(d) if d > 0 => Ok(EmbeddingTable {
                dimension: d,
                entries: map,
            }),
            _ => Err(Error::InvalidParameter(
                "embedding table needs at least one non-empty vector".into(),
            )),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, item_id: &str) -> Option<&[f64]> {
        self.entries.get(item_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContentType {
    #[serde(rename = "A1_generic", alias = "A1")]
    Generic,
    #[serde(rename = "A2_factual", alias = "A2")]
    Factual,
    #[serde(rename = "A3_subjective", alias = "A3")]
    Subjective,
    #[serde(rename = "A4_value_laden", alias = "A4")]
    ValueLaden,
    #[serde(rename = "A5_task_based", alias = "A5")]
    TaskBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResponseQuality {
    #[serde(rename = "B1_good", alias = "B1")]
    Good,
    #[serde(rename = "B2_bad", alias = "B2")]
    Bad,
    #[serde(rename = "B3_mixed", alias = "B3")]
    Mixed,
    #[serde(rename = "B4_subjective", alias = "B4")]
    Subjective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvalComplexity {
    #[serde(rename = "D1_uni", alias = "D1")]
    Unidimensional,
    #[serde(rename = "D2_multi_aligned", alias = "D2")]
    MultiAligned,
    #[serde(rename = "D3_multi_conflicting", alias = "D3")]
    MultiConflicting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlausiblePreference {
    #[serde(rename = "E1_implausible", alias = "E1")]
    Implausible,
    #[serde(rename = "E2_moderate", alias = "E2")]
    Moderate,
    #[serde(rename = "E3_plausible", alias = "E3")]
    Plausible,
}

/// Analyst-supplied coding and theme labels for one item.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemMetadata {
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<ContentType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_quality: Option<ResponseQuality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_complexity: Option<EvalComplexity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_pref: Option<PlausiblePreference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theme_labels: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_dimension: Option<String>,
    /// Known correct rating for attention-check ("anchor") items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_score: Option<f64>,
}

/// An immutable, indexed collection of annotation records.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<AnnotationRecord>,
    scale_kind: ScaleKind,
    embeddings: Option<EmbeddingTable>,
    response_embeddings: Option<EmbeddingTable>,
    metadata: BTreeMap<String, ItemMetadata>,
    by_annotator: BTreeMap<String, Vec<usize>>,
    by_item: BTreeMap<String, Vec<usize>>,
    by_record: HashMap<String, usize>,
}

impl Dataset {
    /// Builds a dataset. All records must share one scale kind.
    pub fn new(records: Vec<AnnotationRecord>) -> Result<Self> {
        let scale_kind = records
            .first()
            .map(|r| r.scale_kind)
            .unwrap_or(ScaleKind::Continuous);
        Self::with_scale(records, scale_kind)
    }

    pub fn with_scale(records: Vec<AnnotationRecord>, scale_kind: ScaleKind) -> Result<Self> {
        let mut by_annotator: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_item: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_record = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.scale_kind != scale_kind {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: format!(
                        "record `{}` uses {} in a {} dataset",
                        r.record_id,
                        r.scale_kind.as_str(),
                        scale_kind.as_str()
                    ),
                });
            }
            r.check_score().map_err(|message| Error::Malformed {
                line: i + 1,
                message,
            })?;
            by_annotator.entry(r.annotator_id.clone()).or_default().push(i);
            by_item.entry(r.item_id.clone()).or_default().push(i);
            if by_record.insert(r.record_id.clone(), i).is_some() {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: format!("duplicate record_id `{}`", r.record_id),
                });
            }
        }
        Ok(Dataset {
            records,
            scale_kind,
            embeddings: None,
            response_embeddings: None,
            metadata: BTreeMap::new(),
            by_annotator,
            by_item,
            by_record,
        })
    }

    pub fn with_embeddings(mut self, table: EmbeddingTable) -> Self {
        self.embeddings = Some(table);
        self
    }

    pub fn with_response_embeddings(mut self, table: EmbeddingTable) -> Self {
        self.response_embeddings = Some(table);
        self
    }

    pub fn with_metadata(mut self, metadata: impl IntoIterator<Item = ItemMetadata>) -> Self {
        for m in metadata {
            self.metadata.insert(m.item_id.clone(), m);
        }
        self
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn scale_kind(&self) -> ScaleKind {
        self.scale_kind
    }

    pub fn embeddings(&self) -> Option<&EmbeddingTable> {
        self.embeddings.as_ref()
    }

    pub fn response_embeddings(&self) -> Option<&EmbeddingTable> {
        self.response_embeddings.as_ref()
    }

    pub fn metadata(&self, item_id: &str) -> Option<&ItemMetadata> {
        self.metadata.get(item_id)
    }

    pub fn all_metadata(&self) -> &BTreeMap<String, ItemMetadata> {
        &self.metadata
    }

    pub fn annotators(&self) -> impl Iterator<Item = &str> {
        self.by_annotator.keys().map(String::as_str)
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.by_item.keys().map(String::as_str)
    }

    pub fn n_annotators(&self) -> usize {
        self.by_annotator.len()
    }

    pub fn n_items(&self) -> usize {
        self.by_item.len()
    }

    /// Records of one annotator, in input order.
    pub fn annotator_records(&self, annotator_id: &str) -> impl Iterator<Item = &AnnotationRecord> {
        self.by_annotator
            .get(annotator_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.records[i])
    }

    pub fn item_records(&self, item_id: &str) -> impl Iterator<Item = &AnnotationRecord> {
        self.by_item
            .get(item_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.records[i])
    }

    pub fn record(&self, record_id: &str) -> Option<&AnnotationRecord> {
        self.by_record.get(record_id).map(|&i| &self.records[i])
    }

    /// Item ids carrying `theme` in their metadata.
    pub fn theme_items(&self, theme: &str) -> BTreeSet<&str> {
        self.metadata
            .values()
            .filter(|m| m.theme_labels.as_ref().is_some_and(|t| t.contains(theme)))
            .map(|m| m.item_id.as_str())
            .collect()
    }

    /// All theme labels present in metadata.
    pub fn themes(&self) -> BTreeSet<&str> {
        self.metadata
            .values()
            .filter_map(|m| m.theme_labels.as_ref())
            .flatten()
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    /// Guess from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Abort on the first malformed row instead of collecting it.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadedRecords {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub rejected: Vec<RejectedRow>,
}

/// Lines of the form `{"run_config": ...}` head every JSONL file this crate
/// writes; readers skip them.
pub(crate) fn is_header_line(line: &str) -> bool {
    line.trim_start().starts_with("{\"run_config\"")
}

/// Loads records from JSONL or CSV (header names equal the record field names).
pub fn load_records(path: impl AsRef<Path>, format: InputFormat, opts: LoadOptions) -> Result<LoadedRecords> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<(usize, std::result::Result<AnnotationRecord, String>)> = match format {
        InputFormat::Jsonl => read_jsonl_rows(BufReader::new(file), path)?,
        InputFormat::Csv => read_csv_rows(file)?,
    };
    let rows_read = rows.len();
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut scale = None;
    let mut seen_ids = HashSet::new();
    for (line, row) in rows {
        let checked = row.and_then(|r| {
            r.check_score()?;
            let expected = *scale.get_or_insert(r.scale_kind);
            if r.scale_kind != expected {
                return Err(format!(
                    "scale_kind {} differs from dataset scale {}",
                    r.scale_kind.as_str(),
                    expected.as_str()
                ));
            }
            if !seen_ids.insert(r.record_id.clone()) {
                return Err(format!("duplicate record_id `{}`", r.record_id));
            }
            Ok(r)
        });
        match checked {
            Ok(r) => records.push(r),
            Err(message) if opts.strict => return Err(Error::Malformed { line, message }),
            Err(message) => rejected.push(RejectedRow { line, message }),
        }
    }
    if records.is_empty() {
        return Err(Error::NoValidRows {
            path: path.to_path_buf(),
        });
    }
    let dataset = Dataset::new(records)?;
    Ok(LoadedRecords {
        dataset,
        rows_read,
        rejected,
    })
}

type Row<T> = (usize, std::result::Result<T, String>);

fn read_jsonl_rows<T: serde::de::DeserializeOwned>(reader: impl BufRead, path: &Path) -> Result<Vec<Row<T>>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || is_header_line(&line) {
            continue;
        }
        out.push((i + 1, serde_json::from_str(&line).map_err(|e| e.to_string())));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    record_id: String,
    annotator_id: String,
    item_id: String,
    prompt_text: String,
    #[serde(default)]
    response_text: Option<String>,
    #[serde(default)]
    model_id: Option<String>,
    score: String,
    scale_kind: ScaleKind,
    #[serde(default)]
    session_id: Option<String>,
    #[serde(default)]
    timestamp: Option<i64>,
    #[serde(default)]
    position_index: Option<u32>,
    #[serde(default)]
    framing_id: Option<String>,
    #[serde(default)]
    condition_tag: Option<String>,
}

fn nonempty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.is_empty())
}

impl TryFrom<CsvRecord> for AnnotationRecord {
    type Error = String;

    fn try_from(c: CsvRecord) -> std::result::Result<Self, String> {
        let score = match c.score.trim() {
            "A" => Score::Choice(Choice::A),
            "B" => Score::Choice(Choice::B),
            s => Score::Value(s.parse::<f64>().map_err(|_| format!("unparseable score `{s}`"))?),
        };
        Ok(AnnotationRecord {
            record_id: c.record_id,
            annotator_id: c.annotator_id,
            item_id: c.item_id,
            prompt_text: c.prompt_text,
            response_text: nonempty(c.response_text),
            model_id: nonempty(c.model_id),
            score,
            scale_kind: c.scale_kind,
            session_id: nonempty(c.session_id),
            timestamp: c.timestamp,
            position_index: c.position_index,
            framing_id: nonempty(c.framing_id),
            condition_tag: nonempty(c.condition_tag),
        })
    }
}

fn read_csv_rows(file: File) -> Result<Vec<Row<AnnotationRecord>>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let parsed = row
            .deserialize::<CsvRecord>(Some(&headers))
            .map_err(|e| e.to_string())
            .and_then(AnnotationRecord::try_from);
        out.push((line, parsed));
    }
    Ok(out)
}

pub fn write_records_jsonl(mut w: impl Write, records: &[AnnotationRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub const CSV_HEADER: [&str; 13] = [
    "record_id",
    "annotator_id",
    "item_id",
    "prompt_text",
    "response_text",
    "model_id",
    "score",
    "scale_kind",
    "session_id",
    "timestamp",
    "position_index",
    "framing_id",
    "condition_tag",
];

pub fn write_records_csv(w: impl Write, records: &[AnnotationRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    let opt = |s: &Option<String>| s.clone().unwrap_or_default();
    for r in records {
        let score = match r.score {
            Score::Value(v) => v.to_string(),
            Score::Choice(Choice::A) => "A".into(),
            Score::Choice(Choice::B) => "B".into(),
        };
        wtr.write_record([
            r.record_id.clone(),
            r.annotator_id.clone(),
            r.item_id.clone(),
            r.prompt_text.clone(),
            opt(&r.response_text),
            opt(&r.model_id),
            score,
            r.scale_kind.as_str().to_string(),
            opt(&r.session_id),
            r.timestamp.map(|t| t.to_string()).unwrap_or_default(),
            r.position_index.map(|t| t.to_string()).unwrap_or_default(),
            opt(&r.framing_id),
            opt(&r.condition_tag),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct EmbeddingRow {
    item_id: String,
    vector: Vec<f64>,
}

/// Loads an embedding table from JSONL (`{"item_id", "vector"}`) or, for a
/// `.csv` path, from headerless rows `item_id,v0,v1,...`.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    match InputFormat::from_path(path) {
        InputFormat::Jsonl => {
            for (line, row) in read_jsonl_rows::<EmbeddingRow>(BufReader::new(file), path)? {
                let row = row.map_err(|message| Error::Malformed { line, message })?;
                entries.push((row.item_id, row.vector));
            }
        }
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .from_reader(file);
            for row in rdr.records() {
                let row = row?;
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                let mut fields = row.iter();
                let item_id = fields
                    .next()
                    .ok_or_else(|| Error::Malformed {
                        line,
                        message: "empty row".into(),
                    })?
                    .to_string();
                let vector = fields
                    .map(|f| f.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Malformed {
                        line,
                        message: format!("`{item_id}`: {e}"),
                    })?;
                entries.push((item_id, vector));
            }
        }
    }
    EmbeddingTable::new(entries)
}

pub fn load_metadata(path: impl AsRef<Path>) -> Result<Vec<ItemMetadata>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl_rows::<ItemMetadata>(BufReader::new(file), path)?
        .into_iter()
        .map(|(line, row)| row.map_err(|message| Error::Malformed { line, message }))
        .collect()
}

/// Structured summary of what a dataset supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_records: usize,
    pub n_annotators: usize,
    pub n_items: usize,
    /// (annotator, item, framing) groups rated more than once.
    pub n_repeat_groups: usize,
    /// Items rated under at least two distinct framing variants.
    pub n_framing_pairs: usize,
    pub n_sessions: usize,
    /// Share of items carrying any framing_id, in percent.
    pub framing_coverage_pct: f64,
    pub warnings: Vec<String>,
}

pub fn validate(dataset: &Dataset) -> ValidationReport {
    let records = dataset.records();
    let mut groups: BTreeMap<(&str, &str, Option<&str>), usize> = BTreeMap::new();
    let mut framings: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut sessions: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut framed_items: BTreeSet<&str> = BTreeSet::new();
    let mut last_ts: BTreeMap<(&str, &str), i64> = BTreeMap::new();
    let mut ts_regressions = 0usize;
    let mut repeats_without_time = 0usize;

    for r in records {
        *groups
            .entry((&r.annotator_id, &r.item_id, r.framing_id.as_deref()))
            .or_default() += 1;
        if let Some(f) = &r.framing_id {
            framings.entry(&r.item_id).or_default().insert(f);
            framed_items.insert(&r.item_id);
        }
        if let Some(s) = &r.session_id {
            sessions.insert((&r.annotator_id, s));
            if let Some(ts) = r.timestamp {
                let prev = last_ts.entry((&r.annotator_id, s)).or_insert(ts);
                if ts < *prev {
                    ts_regressions += 1;
                }
                *prev = ts;
            }
        }
    }
    let n_repeat_groups = groups.values().filter(|&&c| c >= 2).count();
    for r in records {
        if groups[&(r.annotator_id.as_str(), r.item_id.as_str(), r.framing_id.as_deref())] >= 2
            && r.session_id.is_none()
            && r.timestamp.is_none()
        {
            repeats_without_time += 1;
        }
    }
    let n_framing_pairs = framings.values().filter(|f| f.len() >= 2).count();

    let mut warnings = Vec::new();
    if n_repeat_groups == 0 {
        warnings.push("temporal diagnostics unavailable: no repeated (annotator, item) ratings".to_string());
    } else if repeats_without_time > 0 {
        warnings.push(format!(
            "{repeats_without_time} repeated ratings lack both session_id and timestamp and cannot form temporal pairs"
        ));
    }
    if n_framing_pairs == 0 {
        warnings.push("framing diagnostics unavailable: no item rated under two framing variants".to_string());
    }
    if dataset.scale_kind() == ScaleKind::BinaryPair {
        let ordered = records.iter().filter(|r| r.condition_tag.is_some()).count();
        if ordered == 0 {
            warnings.push("order diagnostics unavailable: no presentation-order tags".to_string());
        }
    } else {
        warnings.push("order diagnostics unavailable: scale is not binary_pair".to_string());
    }
    if dataset.themes().is_empty() {
        warnings.push("inconsistency-ratio diagnostics unavailable: no theme labels in metadata".to_string());
    }
    match dataset.embeddings() {
        None => warnings.push("pair discovery unavailable: no embeddings".to_string()),
        Some(t) => {
            let missing = dataset.items().filter(|i| t.get(i).is_none()).count();
            if missing > 0 {
                warnings.push(format!("{missing} items have no embedding"));
            }
        }
    }
    if ts_regressions > 0 {
        warnings.push(format!("{ts_regressions} timestamps decrease within an annotator session"));
    }

    let n_items = dataset.n_items();
    ValidationReport {
        n_records: records.len(),
        n_annotators: dataset.n_annotators(),
        n_items,
        n_repeat_groups,
        n_framing_pairs,
        n_sessions: sessions.len(),
        framing_coverage_pct: if n_items == 0 {
            0.0
        } else {
            100.0 * framed_items.len() as f64 / n_items as f64
        },
        warnings,
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const ROW: &str = r#"{"record_id":"r{N}","annotator_id":"a1","item_id":"i{N}","prompt_text":"p","score":{S},"scale_kind":"continuous_0_100"}"#;

    fn row(n: usize, s: &str) -> String {
        ROW.replace("{N}", &n.to_string()).replace("{S}", s)
    }

    #[test]
    fn loads_three_jsonl_rows() {
        let f = write_tmp(&[row(1, "10"), row(2, "20"), row(3, "30")].join("\n"), ".jsonl");
        let loaded = load_records(f.path(), InputFormat::Jsonl, LoadOptions::default()).unwrap();
        assert_eq!(loaded.dataset.records().len(), 3);
        assert!(loaded.rejected.is_empty());
    }

    #[test]
    fn out_of_bounds_score_is_rejected_with_line() {
        let f = write_tmp(&[row(1, "10"), row(2, "150")].join("\n"), ".jsonl");
        let loaded = load_records(f.path(), InputFormat::Jsonl, LoadOptions::default()).unwrap();
        assert_eq!(loaded.dataset.records().len(), 1);
        assert_eq!(loaded.rejected.len(), 1);
        assert_eq!(loaded.rejected[0].line, 2);
        assert!(loaded.rejected[0].message.contains("[0, 100]"));

        let err = load_records(f.path(), InputFormat::Jsonl, LoadOptions { strict: true }).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
    }

    #[test]
    fn zero_valid_rows_is_an_error() {
        let f = write_tmp(&row(1, "-3"), ".jsonl");
        assert!(matches!(
            load_records(f.path(), InputFormat::Jsonl, LoadOptions::default()),
            Err(Error::NoValidRows { .. })
        ));
    }

    #[test]
    fn unreadable_file() {
        assert!(matches!(
            load_records("/nonexistent/x.jsonl", InputFormat::Jsonl, LoadOptions::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_with_header_contract() {
        let csv = "record_id,annotator_id,item_id,prompt_text,score,scale_kind,session_id,framing_id\n\
                   r1,a1,i1,\"hello, world\",55,continuous_0_100,s1,\n\
                   r2,a1,i1,\"hello, world\",70,continuous_0_100,s2,f2\n\
                   r3,a2,i2,x,A,binary_pair,,\n";
        let f = write_tmp(csv, ".csv");
        let loaded = load_records(f.path(), InputFormat::Csv, LoadOptions::default()).unwrap();
        assert_eq!(loaded.dataset.records().len(), 2);
        // binary row conflicts with the dataset scale
        assert_eq!(loaded.rejected.len(), 1);
        let r = &loaded.dataset.records()[1];
        assert_eq!(r.framing_id.as_deref(), Some("f2"));
        assert_eq!(r.response_text, None);
        assert_eq!(loaded.dataset.records()[0].prompt_text, "hello, world");
    }

    #[test]
    fn embeddings_dimension_and_finiteness() {
        let ok = write_tmp(
            "{\"item_id\":\"a\",\"vector\":[1,0,0,0]}\n{\"item_id\":\"b\",\"vector\":[0,1,0,0]}\n",
            ".jsonl",
        );
        let t = load_embeddings(ok.path()).unwrap();
        assert_eq!(t.dimension(), 4);
        assert_eq!(t.len(), 2);

        let bad = write_tmp(
            "{\"item_id\":\"a\",\"vector\":[1,0,0,0]}\n{\"item_id\":\"b\",\"vector\":[0,1,0,0,0]}\n",
            ".jsonl",
        );
        assert!(matches!(
            load_embeddings(bad.path()),
            Err(Error::DimensionMismatch { found: 5, .. })
        ));

        let nan = write_tmp("a,1,0\nb,NaN,1\n", ".csv");
        match load_embeddings(nan.path()) {
            Err(Error::NonFinite { item_id }) => assert_eq!(item_id, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_flags_missing_temporal_support() {
        let ds = Dataset::new(vec![rec("1", "a", "x", 10.0), rec("2", "a", "y", 20.0)]).unwrap();
        let report = validate(&ds);
        assert_eq!(report.n_repeat_groups, 0);
        assert!(report.warnings.iter().any(|w| w.contains("temporal diagnostics unavailable")));
        assert_eq!(report, validate(&ds));
    }

    #[test]
    fn validation_counts_framing_coverage() {
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(rec(&format!("r{i}"), "a", &format!("i{i}"), 50.0));
        }
        records[0].framing_id = Some("f1".into());
        records.push(framed(rec("extra", "b", "i0", 40.0), "f2"));
        let report = validate(&Dataset::new(records).unwrap());
        assert!((report.framing_coverage_pct - 10.0).abs() < 1e-12);
        assert_eq!(report.n_framing_pairs, 1);
    }

    #[test]
    fn validation_of_empty_dataset() {
        let report = validate(&Dataset::new(vec![]).unwrap());
        assert_eq!(report.n_records, 0);
        assert_eq!(report.n_annotators, 0);
        assert_eq!(report.n_items, 0);
        assert_eq!(report.framing_coverage_pct, 0.0);
    }

    #[test]
    fn likert_maps_to_common_scale() {
        let mut r = rec("1", "a", "x", 3.0);
        r.scale_kind = ScaleKind::Likert5;
        assert_eq!(r.value(), Some(3.0));
        assert_eq!(r.common_value(), Some(50.0));
        r.score = Score::Value(6.0);
        assert!(r.check_score().is_err());
    }

    #[test]
    fn binary_scores_parse_from_json() {
        let r: AnnotationRecord = serde_json::from_str(
            r#"{"record_id":"1","annotator_id":"a","item_id":"x","prompt_text":"p","score":"B","scale_kind":"binary_pair","condition_tag":"BA"}"#,
        )
        .unwrap();
        assert_eq!(r.score, Score::Choice(Choice::B));
        assert!(r.check_score().is_ok());
    }

    #[test]
    fn metadata_accepts_short_codes() {
        let m: ItemMetadata =
            serde_json::from_str(r#"{"item_id":"x","content_type":"A1","plausible_pref":"E1_implausible"}"#).unwrap();
        assert_eq!(m.content_type, Some(ContentType::Generic));
        assert_eq!(m.plausible_pref, Some(PlausiblePreference::Implausible));
        assert!(serde_json::from_str::<ItemMetadata>(r#"{"item_id":"x","content_type":"A9"}"#).is_err());
    }
}
