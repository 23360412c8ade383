use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prefaudit"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn prefaudit")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Small synthetic dataset plus theme metadata in `dir`.
fn fixture(dir: &Path) {
    ok(dir, &["synth", "--n-per-type", "3", "--items", "300", "--items-per-annotator", "300", "--seed", "5", "-o", "d.jsonl", "--truth", "truth.json"]);
    let meta: String = (0..300)
        .map(|i| format!("{{\"item_id\":\"item_{i:05}\",\"theme_labels\":[\"theme{}\"]}}\n", i % 4))
        .collect();
    std::fs::write(dir.join("meta.jsonl"), meta).unwrap();
}

fn header(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["diagnose", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(dir.path(), &["--help"])), 0);
}

#[test]
fn missing_or_malformed_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(dir.path(), &["validate", "--input", "absent.jsonl"])), 2);
    std::fs::write(dir.path().join("bad.jsonl"), "{\"record_id\": 1}\nnot json\n").unwrap();
    assert_eq!(code(&run_in(dir.path(), &["validate", "--input", "bad.jsonl"])), 2);
    assert_eq!(code(&run_in(dir.path(), &["validate", "--input", "bad.jsonl", "--strict"])), 2);
}

#[test]
fn bad_parameter_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    assert_eq!(code(&run_in(dir.path(), &["diagnose", "--input", "d.jsonl", "--weights", "1,1,1"])), 1);
    assert_eq!(code(&run_in(dir.path(), &["weights", "--input", "d.jsonl", "--weight-mode", "cubic"])), 1);
    assert_eq!(code(&run_in(dir.path(), &["plan", "--items", "100", "--annotators", "1"])), 1);
}

#[test]
fn diagnose_writes_profiles_with_routing() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    ok(dir.path(), &["diagnose", "--input", "d.jsonl", "--tau", "15", "-o", "p.jsonl"]);
    let text = std::fs::read_to_string(dir.path().join("p.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r["routing"].is_string() && r["temp"].is_number()));
    assert_eq!(header(&dir.path().join("p.jsonl"))["run_config"]["thresholds"]["tau"], 15.0);
}

#[test]
fn seeded_subcommands_are_byte_identical() {
    let runs: [&[&str]; 8] = [
        &["synth", "--n-per-type", "2", "--items", "300", "--items-per-annotator", "300", "--seed", "3", "-o", "out"],
        &["ratio", "--input", "d.jsonl", "--metadata", "meta.jsonl", "--seed", "7", "--resamples", "200", "-o", "out"],
        &["simulate", "--input", "d.jsonl", "--metadata", "meta.jsonl", "--seed", "7", "--resamples", "100", "--iterations", "100", "-o", "out"],
        &["plan", "--tier", "3", "--items", "1200", "--annotators", "3", "--cost", "0.4", "--schedule", "--seed", "9", "-o", "out"],
        &["diagnose", "--input", "d.jsonl", "-o", "out"],
        &["weights", "--input", "d.jsonl", "--policy", "both", "-o", "out"],
        &["repeats", "--input", "d.jsonl", "-o", "out"],
        &["calibrate", "--method", "empirical", "--input", "d.jsonl", "-o", "out"],
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    fixture(a.path());
    fixture(b.path());
    assert_eq!(std::fs::read(a.path().join("d.jsonl")).unwrap(), std::fs::read(b.path().join("d.jsonl")).unwrap());
    for args in runs {
        ok(a.path(), args);
        ok(b.path(), args);
        let x = std::fs::read(a.path().join("out")).unwrap();
        let y = std::fs::read(b.path().join("out")).unwrap();
        assert!(x == y, "{} differs between runs", args[0]);
    }
}

#[test]
fn seed_changes_seeded_output() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    ok(dir.path(), &["ratio", "--input", "d.jsonl", "--metadata", "meta.jsonl", "--seed", "1", "--resamples", "50", "-o", "a"]);
    ok(dir.path(), &["ratio", "--input", "d.jsonl", "--metadata", "meta.jsonl", "--seed", "2", "--resamples", "50", "-o", "b"]);
    assert_ne!(std::fs::read(dir.path().join("a")).unwrap(), std::fs::read(dir.path().join("b")).unwrap());
}

#[test]
fn every_format_carries_the_run_config() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    for (format, prefix) in [("jsonl", "{\"run_config\""), ("csv", "# run_config: "), ("report", "run_config: ")] {
        let out = ok(dir.path(), &["repeats", "--input", "d.jsonl", "--format", format]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with(prefix), "{format}: {}", &text[..40.min(text.len())]);
        assert!(text.contains("\"delta_threshold\":15.0"), "{format}");
    }
}

#[test]
fn csv_output_loads_back_as_records() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--n-per-type", "1", "--items", "300", "--items-per-annotator", "300", "--format", "csv", "-o", "d.csv"]);
    let out = ok(dir.path(), &["validate", "--input", "d.csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let head: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(head["summary"]["n_annotators"], 4);
    assert_eq!(head["summary"]["n_rejected_rows"], 0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    std::fs::write(dir.path().join("run.toml"), "input = \"d.jsonl\"\ntau = 10.0\nt_temp = 0.4\n").unwrap();
    ok(dir.path(), &["diagnose", "--config", "run.toml", "-o", "a.jsonl"]);
    let h = header(&dir.path().join("a.jsonl"));
    assert_eq!(h["run_config"]["thresholds"]["tau"], 10.0);
    assert_eq!(h["run_config"]["thresholds"]["t_temp"], 0.4);
    assert_eq!(h["run_config"]["inputs"]["input"], "d.jsonl");
    ok(dir.path(), &["diagnose", "--config", "run.toml", "--tau", "20", "-o", "b.jsonl"]);
    let h = header(&dir.path().join("b.jsonl"));
    assert_eq!(h["run_config"]["thresholds"]["tau"], 20.0);
    assert_eq!(h["run_config"]["thresholds"]["t_temp"], 0.4);

    std::fs::write(dir.path().join("typo.toml"), "tua = 10.0\n").unwrap();
    assert_eq!(code(&run_in(dir.path(), &["diagnose", "--config", "typo.toml", "--input", "d.jsonl"])), 1);
}

#[test]
fn classify_and_report_tables() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    ok(dir.path(), &["repeats", "--input", "d.jsonl", "-o", "flags.jsonl"]);
    ok(dir.path(), &["classify", "--input", "d.jsonl", "--flags", "flags.jsonl", "-o", "labels.jsonl"]);
    let h = header(&dir.path().join("labels.jsonl"));
    let table = h["summary"]["table"].as_array().unwrap();
    let counts: Vec<u64> = table.iter().map(|r| r["count"].as_u64().unwrap()).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    let out = ok(dir.path(), &["report", "flags.jsonl", "labels.jsonl"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("| Inconsistencies"));
    assert!(text.contains("| Label"));
}

#[test]
fn report_of_empty_output_keeps_headers() {
    let dir = tempfile::tempdir().unwrap();
    let record = |id: &str, item: &str, s: f64| {
        format!("{{\"record_id\":\"{id}\",\"annotator_id\":\"a\",\"item_id\":\"{item}\",\"prompt_text\":\"p\",\"score\":{s},\"scale_kind\":\"continuous_0_100\"}}\n")
    };
    std::fs::write(dir.path().join("d.jsonl"), record("1", "x", 10.0) + &record("2", "y", 20.0)).unwrap();
    ok(dir.path(), &["repeats", "--input", "d.jsonl", "-o", "f.jsonl"]);
    let out = ok(dir.path(), &["report", "f.jsonl"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("| Inconsistencies | Annotators | Mean Pref. Score Δ |"));
}

#[test]
fn plan_reports_the_tier_one_budget() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["plan", "--tier", "1", "--items", "10000", "--annotators", "5", "--cost", "0.5", "-o", "plan.jsonl"]);
    let s = &header(&dir.path().join("plan.jsonl"))["summary"];
    assert_eq!(s["extra_annotations"], 500);
    assert_eq!(s["extra_cost"], 250.0);
    assert_eq!(s["overhead_pct"], 5.0);
}

#[test]
fn synth_writes_truth_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["truth"].as_object().unwrap().len(), 12);
    assert_eq!(truth["seed"], 5);
}

#[test]
fn themes_from_a_complete_cache_make_no_requests() {
    let dir = tempfile::tempdir().unwrap();
    let record = |id: &str, item: &str, prompt: &str| {
        format!("{{\"record_id\":\"{id}\",\"annotator_id\":\"a\",\"item_id\":\"{item}\",\"prompt_text\":\"{prompt}\",\"score\":50,\"scale_kind\":\"continuous_0_100\"}}\n")
    };
    std::fs::write(dir.path().join("d.jsonl"), record("1", "x", "first") + &record("2", "y", "second")).unwrap();
    std::fs::write(
        dir.path().join("cache.jsonl"),
        "{\"prompt_text\":\"first\",\"labels\":[\"health\"]}\n{\"prompt_text\":\"second\",\"labels\":[]}\n",
    )
    .unwrap();
    // Unroutable endpoints: any request would fail the run.
    let endpoints: String = ["e1", "e2", "e3"]
        .iter()
        .map(|e| format!("[[endpoints]]\nendpoint_id = \"{e}\"\nbase_url = \"http://127.0.0.1:9\"\nmodel_name = \"m\"\n"))
        .collect();
    std::fs::write(dir.path().join("t.toml"), format!("labels = [\"health\", \"finance\"]\n{endpoints}")).unwrap();
    let before = std::fs::read(dir.path().join("cache.jsonl")).unwrap();
    ok(dir.path(), &["themes", "--config", "t.toml", "--input", "d.jsonl", "--cache", "cache.jsonl", "-o", "patch.jsonl"]);
    let h = header(&dir.path().join("patch.jsonl"));
    assert_eq!(h["summary"]["n_failed"], 0);
    assert!(h["summary"]["prompts"].as_array().unwrap().iter().all(|p| p["status"] == "cached"));
    assert_eq!(std::fs::read(dir.path().join("cache.jsonl")).unwrap(), before);

    std::fs::write(dir.path().join("two.toml"), format!("labels = [\"health\"]\n{}", endpoints.split("[[endpoints]]").take(3).collect::<Vec<_>>().join("[[endpoints]]"))).unwrap();
    assert_eq!(code(&run_in(dir.path(), &["themes", "--config", "two.toml", "--input", "d.jsonl"])), 1);
}
