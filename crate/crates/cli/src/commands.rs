use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prefaudit_core::aggregation::{pool_flip_simulation, FlipConfig};
use prefaudit_core::diagnostics::{profile_all, temporal_pairs, DiagnosticConfig, ReliabilityMode, ReliabilitySpec};
use prefaudit_core::ingest::{load_embeddings, load_metadata, load_records, validate, InputFormat, LoadOptions};
use prefaudit_core::pairing::{filter_ladder, find_similar_pairs, flag_inconsistencies, load_pairs, repeat_pairs, test_retest_ladder, InconsistencyFlag};
use prefaudit_core::planner::{
    assign_diagnostics, calibrate_consequence, calibrate_empirical, calibrate_scale, plan_tier, PlanOptions,
};
use prefaudit_core::ratio::{population_stats, ratio_table, RatioBand, RatioConfig, RatioRecord};
use prefaudit_core::synth::{generate, SynthParams};
use prefaudit_core::taxonomy::{classification_summary, classify_flags, decision_procedure, Routing, RoutingThresholds, RuleConfig};
use prefaudit_core::themes::{label_corpus, RetryPolicy, ThemeCache, Transport};
use prefaudit_core::weighting::{build_weights, item_reliability_table, variance_decomposition, write_weighted, ExportPolicy, WeightMode, WeightParams};
use prefaudit_core::{Dataset, ScaleKind};
use serde::Serialize;
use serde_json::Value;

use crate::args::{Command, Common, DiagArgs, Format, Inputs, RatioArgs, RoutingArgs};
use crate::config::{pick, FileConfig, RunConfig};
use crate::exit::{runtime, Exit, Outcome};
use crate::output::{emit, object, read_document, rows_as, to_value, write_text, Document};
use crate::report;

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> Outcome<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| Exit::Usage(format!("--{what}: {e}")))
}

/// Input paths after merging flags over the settings file.
struct Paths {
    input: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    metadata: Option<PathBuf>,
    pairs: Option<PathBuf>,
}

impl Paths {
    fn new(inputs: &Inputs, file: &FileConfig, cfg: &mut RunConfig) -> Self {
        let p = Paths {
            input: inputs.input.clone().or(file.input.clone()),
            embeddings: inputs.embeddings.clone().or(file.embeddings.clone()),
            metadata: inputs.metadata.clone().or(file.metadata.clone()),
            pairs: inputs.pairs.clone().or(file.pairs.clone()),
        };
        cfg.input("input", &p.input);
        cfg.input("embeddings", &p.embeddings);
        cfg.input("metadata", &p.metadata);
        cfg.input("pairs", &p.pairs);
        p
    }

    fn dataset(&self, strict: bool) -> Outcome<(Dataset, Vec<Value>)> {
        let path = self.input.as_ref().ok_or_else(|| Exit::Usage("--input is required".into()))?;
        let loaded = load_records(path, InputFormat::from_path(path), LoadOptions { strict })?;
        let mut ds = loaded.dataset;
        if let Some(e) = &self.embeddings {
            ds = ds.with_embeddings(load_embeddings(e)?);
        }
        if let Some(m) = &self.metadata {
            ds = ds.with_metadata(load_metadata(m)?);
        }
        let rejected = loaded.rejected.iter().map(to_value).collect::<Outcome<Vec<_>>>()?;
        Ok((ds, rejected))
    }
}

fn strict(common: &Common, file: &FileConfig) -> bool {
    common.strict || file.strict.unwrap_or(false)
}

fn diagnostic_config(args: &DiagArgs, file: &FileConfig, cfg: &mut RunConfig, scale: ScaleKind) -> Outcome<DiagnosticConfig> {
    let tau = pick(args.tau, file.tau, scale.default_tau());
    let min_gap = pick(args.min_gap, file.min_gap, 0);
    let mode_name = pick(args.reliability_mode.clone(), file.reliability_mode.clone(), "weighted".into());
    let mode: ReliabilityMode = parse("reliability-mode", &mode_name)?;
    let weights = pick(args.weights.clone(), file.weights.clone(), vec![1.0; 4]);
    let weights: [f64; 4] = weights
        .try_into()
        .map_err(|w: Vec<f64>| Exit::Usage(format!("--weights needs 4 values, got {}", w.len())))?;
    cfg.thresholds.tau = Some(tau);
    cfg.option("min_gap", min_gap);
    cfg.option("reliability_mode", &mode_name);
    cfg.option("weights", weights);
    Ok(DiagnosticConfig {
        tau: Some(tau),
        min_gap,
        reliability: ReliabilitySpec {
            mode,
            weights,
            ..Default::default()
        },
        ..Default::default()
    })
}

fn ratio_config(args: &RatioArgs, file: &FileConfig, cfg: &mut RunConfig) -> RatioConfig {
    let rc = RatioConfig {
        min_support: pick(args.min_support, file.min_support, 5),
        resamples: pick(args.resamples, file.resamples, 1000),
        seed: pick(args.seed, file.seed, 0),
        exact_baseline: args.exact || file.exact.unwrap_or(false),
        ..Default::default()
    };
    cfg.seed = Some(rc.seed);
    cfg.resamples = Some(rc.resamples);
    cfg.option("min_support", rc.min_support);
    cfg.option("exact_baseline", rc.exact_baseline);
    rc
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    #[serde(flatten)]
    profile: &'a prefaudit_core::diagnostics::ConsistencyProfile,
    routing: Routing,
    routing_reason: &'a str,
}

fn flags_summary(flags: &[InconsistencyFlag], prevalence: Value, n_pairs: usize, ladder: Option<Value>) -> Value {
    let mut s = object(&[("n_pairs", n_pairs.into()), ("n_flags", flags.len().into()), ("prevalence", prevalence)]);
    if let (Some(l), Value::Object(m)) = (ladder, &mut s) {
        m.insert("ladder".into(), l);
    }
    s
}

fn ratios_for(ds: &Dataset, rc: &RatioConfig) -> Outcome<(Vec<RatioRecord>, Value)> {
    let (ratios, skipped) = ratio_table(ds, rc)?;
    if ratios.is_empty() {
        return Err(Exit::Data(format!(
            "no annotator-theme cell has {} rated items; theme labels come from --metadata",
            rc.min_support
        )));
    }
    Ok((ratios, to_value(&skipped)?))
}

pub fn run(command: Command, transport: &dyn Transport) -> Outcome<()> {
    match command {
        Command::Validate { inputs, common } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("validate", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let (ds, rejected) = paths.dataset(strict(&common, &file))?;
            let mut summary = to_value(&validate(&ds))?;
            if let Value::Object(m) = &mut summary {
                m.insert("n_rejected_rows".into(), rejected.len().into());
            }
            emit(&cfg, &Document { summary: Some(summary), rows: rejected })
        }

        Command::Pairs {
            inputs,
            sim_threshold,
            delta_threshold,
            same_annotator,
            ladder,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("pairs", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let sim = pick(sim_threshold, file.sim_threshold, 0.9);
            let delta = pick(delta_threshold, file.delta_threshold, 15.0);
            let same = same_annotator || file.same_annotator.unwrap_or(false);
            let with_ladder = ladder || file.ladder.unwrap_or(false);
            cfg.thresholds.sim_threshold = Some(sim);
            cfg.thresholds.delta_threshold = Some(delta);
            cfg.option("same_annotator", same);
            cfg.option("ladder", with_ladder);
            let (ds, _) = paths.dataset(strict(&common, &file))?;
            let pairs = match &paths.pairs {
                Some(p) => load_pairs(p)?.into_iter().filter(|p| p.similarity >= sim).collect(),
                None => find_similar_pairs(&ds, sim, same)?,
            };
            let (flags, prevalence) = flag_inconsistencies(&ds, &pairs, delta)?;
            let ladder = if with_ladder {
                Some(to_value(&filter_ladder(&ds, &flags, &test_retest_ladder(sim, delta)).rows)?)
            } else {
                None
            };
            let summary = flags_summary(&flags, to_value(&prevalence)?, pairs.len(), ladder);
            emit(&cfg, &Document::new(Some(summary), &flags)?)
        }

        Command::Repeats {
            inputs,
            delta_threshold,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("repeats", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let delta = pick(delta_threshold, file.delta_threshold, 15.0);
            cfg.thresholds.delta_threshold = Some(delta);
            let (ds, _) = paths.dataset(strict(&common, &file))?;
            let pairs = repeat_pairs(&ds);
            let (flags, prevalence) = flag_inconsistencies(&ds, &pairs, delta)?;
            let summary = flags_summary(&flags, to_value(&prevalence)?, pairs.len(), None);
            emit(&cfg, &Document::new(Some(summary), &flags)?)
        }

        Command::Diagnose {
            inputs,
            diag,
            routing,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("diagnose", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let (ds, _) = paths.dataset(strict(&common, &file))?;
            let mut dc = diagnostic_config(&diag, &file, &mut cfg, ds.scale_kind())?;
            if let Some(p) = &paths.pairs {
                dc.pairs = load_pairs(p)?;
            }
            let thresholds = routing_thresholds(&routing, &file, &mut cfg);
            let profiles = profile_all(&ds, &dc);
            let decisions: Vec<_> = profiles.iter().map(|p| decision_procedure(p, &thresholds)).collect();
            let rows: Vec<ProfileRow> = profiles
                .iter()
                .zip(&decisions)
                .map(|(p, d)| ProfileRow {
                    profile: p,
                    routing: d.routing,
                    routing_reason: &d.reason,
                })
                .collect();
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for d in &decisions {
                *counts.entry(d.routing.as_str()).or_default() += 1;
            }
            let summary = object(&[("n_annotators", profiles.len().into()), ("routing_counts", to_value(&counts)?)]);
            emit(&cfg, &Document::new(Some(summary), &rows)?)
        }

        Command::Classify {
            inputs,
            flags,
            artifact_floor,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("classify", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let flags_path = flags.or(file.flags.clone()).ok_or_else(|| Exit::Usage("--flags is required".into()))?;
            cfg.input("flags", &Some(flags_path.clone()));
            let rules = RuleConfig {
                artifact_floor: pick(artifact_floor, file.artifact_floor, RuleConfig::default().artifact_floor),
                ..Default::default()
            };
            cfg.option("rules", &rules);
            let (ds, _) = paths.dataset(strict(&common, &file))?;
            let (_, doc) = read_document(&flags_path)?;
            let flags: Vec<InconsistencyFlag> = rows_as(&doc, "flags")?;
            let labels = classify_flags(&ds, &flags, &rules);
            let summary = object(&[("n_flags", flags.len().into()), ("table", to_value(&classification_summary(&labels))?)]);
            emit(&cfg, &Document::new(Some(summary), &labels)?)
        }

        Command::Ratio { inputs, ratio, common } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("ratio", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let rc = ratio_config(&ratio, &file, &mut cfg);
            let (ds, _) = paths.dataset(strict(&common, &file))?;
            let (ratios, skipped) = ratios_for(&ds, &rc)?;
            let population = population_stats(&ratios, &ds)?;
            let mut bands: BTreeMap<String, usize> = BTreeMap::new();
            for r in &ratios {
                *bands.entry(band_name(r.band)).or_default() += 1;
            }
            let summary = object(&[
                ("population", to_value(&population)?),
                ("band_counts", to_value(&bands)?),
                ("skipped", skipped),
            ]);
            emit(&cfg, &Document::new(Some(summary), &ratios)?)
        }

        Command::Simulate {
            inputs,
            ratio,
            iterations,
            sample_size,
            harm_threshold,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("simulate", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let rc = ratio_config(&ratio, &file, &mut cfg);
            let fc = FlipConfig {
                iterations: pick(iterations, file.iterations, 1000),
                sample_size: pick(sample_size, file.sample_size, 5),
                harm_threshold: pick(harm_threshold, file.harm_threshold, 50.0),
                seed: rc.seed,
            };
            cfg.iterations = Some(fc.iterations);
            cfg.option("sample_size", fc.sample_size);
            cfg.option("harm_threshold", fc.harm_threshold);
            let (ds, _) = paths.dataset(strict(&common, &file))?;
            let (ratios, _) = ratios_for(&ds, &rc)?;
            let report = pool_flip_simulation(&ds, &ratios, &fc)?;
            let mut summary = to_value(&report)?;
            if let Value::Object(m) = &mut summary {
                m.remove("per_prompt");
            }
            emit(&cfg, &Document::new(Some(summary), &report.per_prompt)?)
        }

        Command::Weights {
            inputs,
            diag,
            weight_mode,
            threshold,
            policy,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("weights", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let (ds, _) = paths.dataset(strict(&common, &file))?;
            let dc = diagnostic_config(&diag, &file, &mut cfg, ds.scale_kind())?;
            let mode_name = pick(weight_mode, file.weight_mode.clone(), "linear".into());
            let mode: WeightMode = parse("weight-mode", &mode_name)?;
            let policy_name = pick(policy, file.policy.clone(), "weight".into());
            let policy: ExportPolicy = parse("policy", &policy_name)?;
            let params = WeightParams {
                threshold: pick(threshold, file.threshold, WeightParams::default().threshold),
                ..Default::default()
            };
            cfg.option("weight_mode", &mode_name);
            cfg.option("policy", &policy_name);
            cfg.option("weight_params", &params);
            let tau = dc.tau_for(ds.scale_kind());
            let profiles = profile_all(&ds, &dc);
            let table = build_weights(&ds, &profiles, item_reliability_table(&ds, tau, dc.min_gap), mode, &params)?;
            let variance = match variance_decomposition(&ds, dc.min_gap) {
                Ok(v) => to_value(&v)?,
                Err(e) => Value::String(format!("unavailable: {e}")),
            };
            let mut buf = Vec::new();
            let export = write_weighted(&mut buf, &ds, &table, policy)?;
            let rows = String::from_utf8(buf)
                .map_err(runtime)?
                .lines()
                .map(|l| serde_json::from_str(l).map_err(runtime))
                .collect::<Outcome<Vec<Value>>>()?;
            let summary = object(&[
                ("export", to_value(&export)?),
                ("variance", variance),
                ("annotator_reliability", to_value(&table.annotator_reliability)?),
            ]);
            emit(&cfg, &Document { summary: Some(summary), rows })
        }

        Command::Plan {
            tier,
            items,
            annotators,
            cost,
            repeat_rate,
            min_spacing,
            schedule,
            item_ids,
            seed,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("plan", &common, &file);
            let defaults = PlanOptions::default();
            let options = PlanOptions {
                repeat_rate: pick(repeat_rate, file.repeat_rate, defaults.repeat_rate),
                min_spacing: pick(min_spacing, file.min_spacing, defaults.min_spacing),
                ..defaults
            };
            let tier = pick(tier, file.tier, 1);
            let ids_path = item_ids.or(file.item_ids.clone());
            cfg.input("item_ids", &ids_path);
            let ids: Option<Vec<String>> = match &ids_path {
                Some(p) => Some(read_lines(p)?),
                None => None,
            };
            let n_items = match (&ids, items.or(file.items)) {
                (Some(ids), _) => ids.len(),
                (None, Some(n)) => n,
                (None, None) => return Err(Exit::Usage("--items or --item-ids is required".into())),
            };
            let n_annotators = pick(annotators, file.annotators, 1);
            let cost = pick(cost, file.cost, 0.0);
            let with_schedule = schedule || file.schedule.unwrap_or(false);
            let seed = pick(seed, file.seed, 0);
            cfg.option("tier", tier);
            cfg.option("items", n_items);
            cfg.option("annotators", n_annotators);
            cfg.option("cost", cost);
            cfg.option("plan_options", &options);
            cfg.option("schedule", with_schedule);
            let plan = plan_tier(tier, n_items, n_annotators, cost, &options)?;
            let mut rows = Vec::new();
            if with_schedule {
                cfg.seed = Some(seed);
                let ids = ids.unwrap_or_else(|| (0..n_items).map(|i| format!("item_{i:06}")).collect());
                let anns: Vec<String> = (0..n_annotators).map(|i| format!("annotator_{i:03}")).collect();
                let s = assign_diagnostics(&plan, &ids, &anns, seed, None)?;
                for a in &s.annotators {
                    for t in &a.tasks {
                        let mut v = to_value(t)?;
                        if let Value::Object(m) = &mut v {
                            m.shift_insert(0, "annotator_id".into(), a.annotator_id.clone().into());
                        }
                        rows.push(v);
                    }
                }
            }
            emit(&cfg, &Document { summary: Some(to_value(&plan)?), rows })
        }

        Command::Calibrate {
            inputs,
            method,
            scale_kind,
            k,
            margin,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("calibrate", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let method = pick(method, file.method.clone(), "scale".into());
            cfg.option("method", &method);
            let loaded = match &paths.input {
                Some(_) => Some(paths.dataset(strict(&common, &file))?.0),
                None => None,
            };
            let scale: ScaleKind = match (scale_kind.or(file.scale_kind.clone()), &loaded) {
                (Some(s), _) => parse("scale-kind", &s)?,
                (None, Some(ds)) => ds.scale_kind(),
                (None, None) => ScaleKind::Continuous,
            };
            cfg.option("scale_kind", scale.as_str());
            let result = match method.as_str() {
                "scale" => calibrate_scale(scale),
                "consequence" => {
                    let m = margin.or(file.margin).ok_or_else(|| Exit::Usage("--margin is required for consequence calibration".into()))?;
                    cfg.option("margin", m);
                    calibrate_consequence(scale, m)?
                }
                "empirical" => {
                    let ds = loaded.ok_or_else(|| Exit::Usage("--input is required for empirical calibration".into()))?;
                    let k = pick(k, file.k, 2.0);
                    cfg.option("k", k);
                    let diffs: Vec<f64> = ds
                        .annotators()
                        .flat_map(|a| temporal_pairs(&ds, a, 0))
                        .filter_map(|(x, y)| Some((x.value()? - y.value()?).abs()))
                        .collect();
                    calibrate_empirical(&diffs, k, scale)?
                }
                other => return Err(Exit::Usage(format!("--method: unknown calibration method `{other}`"))),
            };
            emit(&cfg, &Document { summary: Some(to_value(&result)?), rows: Vec::new() })
        }

        Command::Synth {
            n_per_type,
            items,
            items_per_annotator,
            seed,
            truth,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("synth", &common, &file);
            let n_per_type = pick(n_per_type, file.n_per_type, 50);
            let per = pick(items_per_annotator, file.items_per_annotator, 400);
            let pool = pick(items, file.items, per);
            let seed = pick(seed, file.seed, 42);
            let truth = truth.or(file.truth.clone());
            cfg.seed = Some(seed);
            cfg.option("n_per_type", n_per_type);
            cfg.option("items", pool);
            cfg.option("items_per_annotator", per);
            cfg.option("params", SynthParams::default());
            if let Some(t) = &truth {
                cfg.option("truth", t.display().to_string());
            }
            let plan = plan_tier(1, per, 1, 0.0, &PlanOptions::default())?;
            let synthetic = generate(n_per_type, pool, &plan, &SynthParams::default(), seed)?;
            if let Some(t) = &truth {
                let mut buf = Vec::new();
                synthetic.write_sidecar(&mut buf)?;
                write_text(Some(t), &String::from_utf8(buf).map_err(runtime)?)?;
            }
            let mut summary = to_value(&synthetic.sidecar())?;
            if let Value::Object(m) = &mut summary {
                m.remove("truth");
                m.insert("n_records".into(), synthetic.dataset.records().len().into());
            }
            emit(&cfg, &Document::new(Some(summary), synthetic.dataset.records())?)
        }

        Command::Themes {
            inputs,
            labels,
            cache,
            concurrency,
            common,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("themes", &common, &file);
            let paths = Paths::new(&inputs, &file, &mut cfg);
            let label_list = match (&labels, &file.labels) {
                (Some(p), _) => {
                    cfg.input("labels", &Some(p.clone()));
                    read_lines(p)?
                }
                (None, Some(l)) => l.clone(),
                (None, None) => return Err(Exit::Usage("--labels or a `labels` list in --config is required".into())),
            };
            let cache_path = cache.or(file.cache.clone());
            cfg.input("cache", &cache_path);
            let limit = pick(concurrency, file.concurrency, 4);
            cfg.option("concurrency", limit);
            cfg.option("labels", &label_list);
            cfg.option("endpoints", &file.endpoints);
            let (ds, _) = paths.dataset(strict(&common, &file))?;
            let mut theme_cache = match &cache_path {
                Some(p) if p.exists() => ThemeCache::load(p)?,
                _ => ThemeCache::default(),
            };
            let result = label_corpus(&ds, &label_list, &file.endpoints, transport, limit, &RetryPolicy::default(), &mut theme_cache)?;
            if let Some(p) = &cache_path {
                let mut buf = Vec::new();
                theme_cache.write(&mut buf)?;
                write_text(Some(p), &String::from_utf8(buf).map_err(runtime)?)?;
            }
            let summary = object(&[("n_failed", result.n_failed.into()), ("prompts", to_value(&result.prompts)?)]);
            emit(&cfg, &Document::new(Some(summary), &result.patch)?)
        }

        Command::Report { files, common } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let mut cfg = RunConfig::new("report", &common, &file);
            cfg.format = Format::Report;
            let mut sections = Vec::new();
            for (i, f) in files.iter().enumerate() {
                cfg.input(&format!("file_{i}"), &Some(f.clone()));
                let (rc, doc) = read_document(f)?;
                let sub = rc.get("subcommand").and_then(Value::as_str).unwrap_or("unknown").to_string();
                sections.push(format!("## {} ({sub})\n\n{}", f.display(), report::render(&sub, &doc)));
            }
            let text = format!("run_config: {}\n\n{}", serde_json::to_string(&cfg).map_err(runtime)?, sections.join("\n"));
            write_text(cfg.output_path().as_deref(), &text)
        }
    }
}

fn routing_thresholds(args: &RoutingArgs, file: &FileConfig, cfg: &mut RunConfig) -> RoutingThresholds {
    let d = RoutingThresholds::default();
    let t = RoutingThresholds {
        t_temp: pick(args.t_temp, file.t_temp, d.t_temp),
        t_frame: pick(args.t_frame, file.t_frame, d.t_frame),
        t_order: pick(args.t_order, file.t_order, d.t_order),
        t_artifact: pick(args.t_artifact, file.t_artifact, d.t_artifact),
    };
    cfg.thresholds.t_temp = Some(t.t_temp);
    cfg.thresholds.t_frame = Some(t.t_frame);
    cfg.thresholds.t_order = Some(t.t_order);
    cfg.option("t_artifact", t.t_artifact);
    t
}

fn band_name(b: RatioBand) -> String {
    serde_json::to_value(b).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn read_lines(path: &Path) -> Outcome<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Exit::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}
