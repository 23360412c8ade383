//! Plain-text tables for each subcommand's output document.

use serde_json::Value;

use crate::output::Document;

pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(headers.iter().map(|h| h.to_string()).collect());
    out += &format!("|{}|\n", widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|"));
    for r in rows {
        out += &line(r.clone());
    }
    out
}

fn num(v: &Value, places: usize) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.places$}"),
        None if v.is_null() => "-".into(),
        None => text(v),
    }
}

fn text(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn count_pct(n: &Value, pct: &Value) -> String {
    format!("{} ({}%)", text(n), num(pct, 2))
}

fn key_values(title: &str, v: Option<&Value>) -> String {
    let rows: Vec<Vec<String>> = match v {
        Some(Value::Object(m)) => m
            .iter()
            .filter(|(_, v)| !v.is_object() && !v.is_array())
            .map(|(k, v)| vec![k.clone(), if v.is_f64() { num(v, 4) } else { text(v) }])
            .collect(),
        _ => Vec::new(),
    };
    format!("{title}\n\n{}", table(&["Field", "Value"], &rows))
}

fn prevalence(doc: &Document) -> String {
    let s = doc.summary.as_ref().and_then(|s| s.get("prevalence"));
    let rows = match s {
        Some(p) => vec![vec![
            count_pct(&p["n_inconsistent_pairs"], &p["pct_inconsistent"]),
            count_pct(&p["n_annotators_flagged"], &p["pct_annotators_flagged"]),
            num(&p["mean_delta"], 2),
        ]],
        None => Vec::new(),
    };
    let mut out = format!(
        "Preference inconsistency\n\n{}",
        table(&["Inconsistencies", "Annotators", "Mean Pref. Score Δ"], &rows)
    );
    if let Some(Value::Array(ladder)) = doc.summary.as_ref().and_then(|s| s.get("ladder")) {
        let rows: Vec<Vec<String>> = ladder.iter().map(|r| vec![text(&r["stage"]), text(&r["n_pairs"])]).collect();
        out += &format!("\nFiltering ladder\n\n{}", table(&["Stage", "Pairs"], &rows));
    }
    out
}

fn classification(doc: &Document) -> String {
    let rows: Vec<Vec<String>> = match doc.summary.as_ref().and_then(|s| s.get("table")) {
        Some(Value::Array(t)) => t
            .iter()
            .map(|r| vec![text(&r["label"]), text(&r["count"]), num(&r["pct"], 1), num(&r["mean_delta"], 2)])
            .collect(),
        _ => Vec::new(),
    };
    format!("Inconsistency classification\n\n{}", table(&["Label", "Count", "%", "Mean Δ"], &rows))
}

fn diagnose(doc: &Document) -> String {
    let rows: Vec<Vec<String>> = doc
        .rows
        .iter()
        .map(|r| {
            vec![
                text(&r["annotator_id"]),
                num(&r["temp"], 3),
                num(&r["frame"], 3),
                num(&r["order"], 3),
                num(&r["cross"], 3),
                num(&r["reliability"], 3),
                text(&r["routing"]),
            ]
        })
        .collect();
    format!(
        "Annotator consistency\n\n{}",
        table(&["Annotator", "Temp", "Frame", "Order", "Cross", "Reliability", "Routing"], &rows)
    )
}

fn ratio(doc: &Document) -> String {
    let p = doc.summary.as_ref().and_then(|s| s.get("population"));
    let stat = |name: &str, t: Option<&Value>| -> Vec<String> {
        match t {
            Some(t) if !t.is_null() => vec![name.into(), num(&t["statistic"], 2), num(&t["df"], 2), num(&t["p_value"], 4)],
            _ => vec![name.into(), "-".into(), "-".into(), "-".into()],
        }
    };
    let rows = match p {
        Some(p) => vec![
            stat("one-sample t (ratio vs 1)", p.get("one_sample")),
            stat("median-split Welch t", p.get("median_split_welch")),
            stat("median-split pooled t", p.get("median_split_pooled")),
        ],
        None => Vec::new(),
    };
    let mut out = format!("Inconsistency ratio tests\n\n{}", table(&["Test", "t", "df", "p"], &rows));
    if let Some(p) = p {
        let rows = vec![
            vec!["annotators".into(), text(&p["n_annotators"])],
            vec!["mean ratio".into(), num(&p["mean_ratio"], 4)],
            vec!["median ratio".into(), num(&p["median_ratio"], 4)],
            vec!["low / high pool".into(), format!("{} / {}", text(&p["n_low"]), text(&p["n_high"]))],
            vec!["mean difference (low - high)".into(), num(&p["mean_difference"], 2)],
            vec!["Pearson r (ratio, mean rating)".into(), num(&p["pearson_r"], 2)],
        ];
        out += &format!("\n{}", table(&["Statistic", "Value"], &rows));
    }
    out
}

fn flips(doc: &Document) -> String {
    let rows = match &doc.summary {
        Some(s) => vec![
            vec!["low inconsistency".into(), text(&s["pool_sizes"][1]), text(&s["n_flips_low"])],
            vec!["high inconsistency".into(), text(&s["pool_sizes"][2]), text(&s["n_flips_high"])],
            vec!["either".into(), text(&s["pool_sizes"][0]), format!("{} ({}%)", text(&s["n_flips_any"]), num(&s["pct_flips"], 2))],
        ],
        None => Vec::new(),
    };
    format!("Majority-label flips against the full pool\n\n{}", table(&["Pool", "Annotators", "Flipped prompts"], &rows))
}

pub fn render(subcommand: &str, doc: &Document) -> String {
    match subcommand {
        "pairs" | "repeats" => prevalence(doc),
        "classify" => classification(doc),
        "diagnose" => diagnose(doc),
        "ratio" => ratio(doc),
        "simulate" => flips(doc),
        "weights" => {
            let s = doc.summary.as_ref();
            format!(
                "{}\n{}",
                key_values("Weighted export", s.and_then(|s| s.get("export"))),
                key_values("Variance decomposition", s.and_then(|s| s.get("variance")))
            )
        }
        other => key_values(other, doc.summary.as_ref()),
    }
}
