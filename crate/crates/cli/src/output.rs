//! Output documents: a run-config header, an optional summary and rows.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::Format;
use crate::config::RunConfig;
use crate::exit::{runtime, Exit, Outcome};
use crate::report;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub summary: Option<Value>,
    pub rows: Vec<Value>,
}

impl Document {
    pub fn new<T: Serialize>(summary: Option<Value>, rows: &[T]) -> Outcome<Self> {
        let rows = rows.iter().map(to_value).collect::<Outcome<Vec<_>>>()?;
        Ok(Document { summary, rows })
    }
}

pub fn to_value<T: Serialize + ?Sized>(v: &T) -> Outcome<Value> {
    serde_json::to_value(v).map_err(runtime)
}

fn header(cfg: &RunConfig, summary: &Option<Value>) -> Outcome<Value> {
    let mut h = Map::new();
    h.insert("run_config".into(), to_value(cfg)?);
    if let Some(s) = summary {
        h.insert("summary".into(), s.clone());
    }
    Ok(Value::Object(h))
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render_csv(cfg: &RunConfig, doc: &Document) -> Outcome<String> {
    let mut out = format!("# run_config: {}\n", serde_json::to_string(cfg).map_err(runtime)?);
    if let Some(s) = &doc.summary {
        out += &format!("# summary: {s}\n");
    }
    let mut columns: Vec<String> = Vec::new();
    for row in &doc.rows {
        if let Value::Object(m) = row {
            for k in m.keys() {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    if !columns.is_empty() {
        w.write_record(&columns).map_err(runtime)?;
    }
    for row in &doc.rows {
        let record: Vec<String> = match row {
            Value::Object(m) => columns.iter().map(|c| m.get(c).map(cell).unwrap_or_default()).collect(),
            other => vec![cell(other)],
        };
        w.write_record(&record).map_err(runtime)?;
    }
    let bytes = w.into_inner().map_err(runtime)?;
    out += &String::from_utf8(bytes).map_err(runtime)?;
    Ok(out)
}

pub fn render(cfg: &RunConfig, doc: &Document) -> Outcome<String> {
    match cfg.format {
        Format::Jsonl => {
            let mut out = serde_json::to_string(&header(cfg, &doc.summary)?).map_err(runtime)? + "\n";
            for row in &doc.rows {
                out += &serde_json::to_string(row).map_err(runtime)?;
                out.push('\n');
            }
            Ok(out)
        }
        Format::Csv => render_csv(cfg, doc),
        Format::Report => Ok(format!(
            "run_config: {}\n\n{}",
            serde_json::to_string(cfg).map_err(runtime)?,
            report::render(&cfg.subcommand, doc)
        )),
    }
}

pub fn write_text(path: Option<&Path>, text: &str) -> Outcome<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Exit::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(runtime)
        }
    }
}

pub fn emit(cfg: &RunConfig, doc: &Document) -> Outcome<()> {
    write_text(cfg.output_path().as_deref(), &render(cfg, doc)?)
}

/// Reads a JSONL document written by this tool: the header's run config and
/// summary, then the rows.
pub fn read_document(path: &Path) -> Outcome<(Value, Document)> {
    let file = File::open(path).map_err(|e| Exit::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .transpose()
        .map_err(|e| Exit::Data(format!("{}: {e}", path.display())))?
        .ok_or_else(|| Exit::Data(format!("{}: empty file", path.display())))?;
    let head: Value = serde_json::from_str(&first)
        .map_err(|_| Exit::Data(format!("{}: not a JSONL output of this tool", path.display())))?;
    let run_config = head.get("run_config").cloned().ok_or_else(|| Exit::Data(format!("{}: missing run_config header", path.display())))?;
    let mut doc = Document {
        summary: head.get("summary").cloned(),
        rows: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Exit::Data(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        doc.rows.push(serde_json::from_str(&line).map_err(|e| Exit::Data(format!("{} line {}: {e}", path.display(), i + 2)))?);
    }
    Ok((run_config, doc))
}

/// Rows of a document deserialized as `T`.
pub fn rows_as<T: serde::de::DeserializeOwned>(doc: &Document, what: &str) -> Outcome<Vec<T>> {
    doc.rows
        .iter()
        .enumerate()
        .map(|(i, r)| serde_json::from_value(r.clone()).map_err(|e| Exit::Data(format!("{what} row {}: {e}", i + 1))))
        .collect()
}

pub fn object(pairs: &[(&str, Value)]) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        m.insert(k.to_string(), v.clone());
    }
    Value::Object(m)
}
