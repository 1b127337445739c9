use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use malxai::dataio::{
    balance_undersample, load_csv, save_csv, smote, split, synth_generate, Dataset, Label, SplitMode, SplitSpec,
};
use malxai::evalkit::{default_table5_grid, metrics, pr_curve, roc, sweep_table5, SweepCell};
use malxai::models::{build_model, fit, load_weights_into, save_weights, ModelSpec, TrainConfig};
use malxai::rng::derive_seed;
use malxai::xai::{
    axiom_check, background_sample, lime_explain, most_frequent_vector, plot_data, render_svg, shap_explain,
    Explanation, PlotKind,
};
use serde_json::json;

use crate::config::{load_grid, Balance, Method, RunConfig, SplitKind};
use crate::{CliError, Common};

// Substream offsets under the master seed.
const SEED_MODEL: u64 = 0;
const SEED_TRAIN: u64 = 1;
const SEED_SPLIT: u64 = 3;
const SEED_BALANCE: u64 = 4;
const SEED_BACKGROUND: u64 = 5;

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref(), std::env::vars())?;
    if let Some(p) = &common.data {
        cfg.data.path = Some(p.clone());
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(k) = common.model {
        cfg.model = ModelSpec::default_for(k);
    }
    if let Some(b) = common.balance {
        cfg.data.balance = b;
    }
    if let Some(e) = common.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    if common.threads == 0 {
        return Err(CliError::config("--threads must be >= 1"));
    }
    Ok(cfg)
}

fn init_pool(threads: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::debug!("thread pool already set: {e}");
    }
}

fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let raw = match (&cfg.data.path, &cfg.data.synth) {
        (Some(p), _) => {
            if !p.exists() {
                return Err(CliError::data(format!("dataset not found: {}", p.display())));
            }
            load_csv(p)?
        }
        (None, Some(s)) => synth_generate(s.malware, s.benign, s.seed),
        (None, None) => return Err(CliError::config("data needs either path or synth")),
    };
    let d = match cfg.data.balance {
        Balance::None => raw,
        Balance::Undersample => balance_undersample(&raw, derive_seed(cfg.seed, SEED_BALANCE))?,
        Balance::Smote => smote(&raw, &cfg.data.smote)?,
    };
    log::info!(
        "dataset: {} rows ({} malware, {} benign)",
        d.len(),
        d.count(Label::Malware),
        d.count(Label::Benign)
    );
    Ok(d)
}

fn split_data(cfg: &RunConfig, d: &Dataset) -> Result<(Dataset, Dataset), CliError> {
    let mode = match cfg.split.mode {
        SplitKind::Random => SplitMode::Random { seed: derive_seed(cfg.seed, SEED_SPLIT) },
        SplitKind::TopDown => SplitMode::TopDown,
        SplitKind::BottomUp => SplitMode::BottomUp,
    };
    Ok(split(d, &SplitSpec::new(mode, cfg.split.train_frac))?)
}

fn run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir.join(format!("{command}-{}", cfg.digest()));
    fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", p.display())))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    write(dir, "config.json", pretty(cfg))?;
    let toml = toml::to_string(cfg).map_err(|e| CliError::config(format!("config serialization: {e}")))?;
    write(dir, "config.toml", toml)
}

pub fn train(common: &Common) -> Result<(), CliError> {
    let cfg = resolve(common)?;
    init_pool(common.threads);
    let t0 = Instant::now();
    let d = load_data(&cfg)?;
    let (train_set, test_set) = split_data(&cfg, &d)?;
    let t_data = t0.elapsed().as_secs_f64();

    let mut model = build_model(&cfg.model, derive_seed(cfg.seed, SEED_MODEL))?;
    let tcfg = TrainConfig { seed: derive_seed(cfg.seed, SEED_TRAIN), ..cfg.train.clone() };
    let t1 = Instant::now();
    let history = fit(&mut model, &train_set, &test_set, &tcfg)?;
    let t_train = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let y = test_set.labels();
    let probs = model.predict_proba(&test_set.rows())?;
    let pred = malxai::models::threshold_labels(&probs, cfg.threshold);
    let report = metrics(&y, &pred)?;
    let roc_curve = roc(&y, &probs).map_err(|e| log::warn!("roc curve skipped: {e}")).ok();
    let pr = pr_curve(&y, &probs).map_err(|e| log::warn!("pr curve skipped: {e}")).ok();
    let t_eval = t2.elapsed().as_secs_f64();

    let dir = run_dir(&cfg, "train")?;
    write_config(&dir, &cfg)?;
    write(&dir, "history.json", pretty(&history))?;
    write(&dir, "metrics.json", pretty(&report))?;
    write(&dir, "metrics.txt", report.to_text_table())?;
    if let Some(c) = &roc_curve {
        write(&dir, "roc.csv", c.to_csv())?;
    }
    if let Some(c) = &pr {
        write(&dir, "pr.csv", c.to_csv())?;
    }
    save_weights(&model, dir.join("weights.bin"))?;
    let summary = json!({
        "command": "train",
        "config_digest": cfg.digest(),
        "model": {
            "kind": cfg.model.kind().name(),
            "params": model.param_count(),
            "layers": model.summary()?,
        },
        "dataset": {
            "provenance": d.provenance(),
            "rows": d.len(),
            "malware": d.count(Label::Malware),
            "benign": d.count(Label::Benign),
            "train_rows": train_set.len(),
            "test_rows": test_set.len(),
        },
        "accuracy": report.accuracy,
        "roc_auc": roc_curve.as_ref().map(|c| c.area),
        "pr_auc": pr.as_ref().map(|c| c.area),
        "timing": { "data_secs": t_data, "train_secs": t_train, "eval_secs": t_eval },
    });
    write(&dir, "report.json", pretty(&summary))?;
    log::info!("test accuracy {:.4}", report.accuracy);
    println!("{}", dir.display());
    Ok(())
}

fn select_sample(d: &Dataset, selector: &str) -> Result<usize, CliError> {
    if let Some(i) = selector.strip_prefix("index:") {
        let i: usize = i.parse().map_err(|_| CliError::config(format!("bad sample selector {selector:?}")))?;
        if i >= d.len() {
            return Err(CliError::data(format!("sample index {i} out of range for {} rows", d.len())));
        }
        Ok(i)
    } else if let Some(h) = selector.strip_prefix("hash:") {
        d.find_hash(h).ok_or_else(|| CliError::data(format!("hash {h} not found in dataset")))
    } else {
        Err(CliError::config(format!("sample selector must be index:<row> or hash:<md5>, got {selector:?}")))
    }
}

pub fn explain(
    common: &Common,
    weights: &Path,
    sample: Option<String>,
    methods: Vec<Method>,
) -> Result<(), CliError> {
    let mut cfg = resolve(common)?;
    if let Some(s) = sample {
        cfg.explain.sample = s;
    }
    if !methods.is_empty() {
        cfg.explain.methods = methods;
    }
    init_pool(common.threads);
    let d = load_data(&cfg)?;
    let idx = select_sample(&d, &cfg.explain.sample)?;
    if !weights.exists() {
        return Err(CliError::data(format!("weight file not found: {}", weights.display())));
    }
    let model = load_weights_into(weights, &cfg.model)?;
    let x = d.records()[idx].calls().to_vec();
    let benign: Vec<&[u16]> = d.class(Label::Benign).iter().map(|r| r.calls()).collect();
    let replacement = if benign.is_empty() { most_frequent_vector(&d.rows())? } else { most_frequent_vector(&benign)? };
    let background = background_sample(&d, cfg.explain.background_size, derive_seed(cfg.seed, SEED_BACKGROUND))?;

    let one = |m: Method, x: &[u16]| -> Result<Explanation, CliError> {
        Ok(match m {
            Method::Lime => lime_explain(&model, x, &replacement, &cfg.explain.lime)?,
            Method::Shap => shap_explain(&model, x, &background, &cfg.explain.shap)?,
        })
    };

    let dir = run_dir(&cfg, "explain")?;
    write_config(&dir, &cfg)?;
    let t0 = Instant::now();
    let mut axioms = serde_json::Map::new();
    for &m in &cfg.explain.methods {
        let name = method_name(m);
        let e = one(m, &x)?;
        write(&dir, &format!("explanation-{name}.json"), e.to_json() + "\n")?;
        let kind = match m {
            Method::Lime => PlotKind::FeatureValue,
            Method::Shap => PlotKind::Waterfall,
        };
        let doc = plot_data(std::slice::from_ref(&e), kind)?;
        write(&dir, &format!("plot-{name}.json"), pretty(&doc))?;
        if cfg.explain.svg {
            write(&dir, &format!("plot-{name}.svg"), render_svg(&doc))?;
        }
        if m == Method::Shap {
            axioms.insert(name.into(), json!(axiom_check(&e, &model, &x, &background)?));
        }
    }
    let t_single = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let n = cfg.explain.summary_size.min(d.len());
    let mut summary = serde_json::Map::new();
    for &m in &cfg.explain.methods {
        let name = method_name(m);
        let es = (0..n).map(|i| one(m, d.records()[i].calls())).collect::<Result<Vec<_>, _>>()?;
        if es.is_empty() {
            continue;
        }
        let doc = plot_data(&es, PlotKind::Bar)?;
        if cfg.explain.svg {
            write(&dir, &format!("summary-{name}.svg"), render_svg(&doc))?;
        }
        summary.insert(name.into(), json!(doc));
    }
    write(&dir, "summary.json", pretty(&json!({ "rows": n, "plots": summary })))?;

    let record = &d.records()[idx];
    let report = json!({
        "command": "explain",
        "config_digest": cfg.digest(),
        "sample": { "index": idx, "hash": record.hash(), "label": record.label() },
        "axioms": axioms,
        "timing": { "explain_secs": t_single, "summary_secs": t1.elapsed().as_secs_f64() },
    });
    write(&dir, "report.json", pretty(&report))?;
    println!("{}", dir.display());
    Ok(())
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Lime => "lime",
        Method::Shap => "shap",
    }
}

pub fn sweep(common: &Common, grid: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = resolve(common)?;
    if grid.is_some() {
        cfg.sweep.grid = grid;
    }
    let cells: Vec<SweepCell> = match &cfg.sweep.grid {
        Some(p) => load_grid(p)?,
        None => default_table5_grid(),
    };
    if cells.is_empty() {
        return Err(CliError::config("sweep grid has no cells"));
    }
    let d = load_data(&cfg)?;
    let t0 = Instant::now();
    let result = sweep_table5(&d, &cells, &cfg.model, &cfg.train, cfg.seed, common.threads)?;
    let secs = t0.elapsed().as_secs_f64();
    let dir = run_dir(&cfg, "sweep")?;
    write_config(&dir, &cfg)?;
    write(&dir, "sweep.json", result.to_json() + "\n")?;
    write(&dir, "sweep.txt", result.to_text_table())?;
    write(&dir, "sweep.csv", result.to_csv())?;
    let skipped = result.rows.iter().filter(|r| r.skipped.is_some()).count();
    let report = json!({
        "command": "sweep",
        "config_digest": cfg.digest(),
        "cells": result.rows.len(),
        "skipped": skipped,
        "timing": { "sweep_secs": secs, "threads": common.threads },
    });
    write(&dir, "report.json", pretty(&report))?;
    println!("{}", dir.display());
    if skipped == result.rows.len() {
        return Err(CliError::data(format!("all {skipped} sweep cells failed; see {}", dir.join("sweep.txt").display())));
    }
    Ok(())
}

pub fn synth(malware: usize, benign: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_csv(&synth_generate(malware, benign, seed), out)?;
    println!("{}", out.display());
    Ok(())
}

pub fn report(run: &Path) -> Result<(), CliError> {
    let read = |name: &str| fs::read_to_string(run.join(name)).ok();
    let rep = read("report.json").ok_or_else(|| CliError::data(format!("no report.json in {}", run.display())))?;
    let rep: serde_json::Value = serde_json::from_str(&rep).map_err(|e| CliError::data(format!("report.json: {e}")))?;
    println!("command: {}", rep["command"].as_str().unwrap_or("?"));
    println!("config:  {}", rep["config_digest"].as_str().unwrap_or("?"));
    for name in ["metrics.txt", "sweep.txt"] {
        if let Some(text) = read(name) {
            println!("\n{text}");
        }
    }
    for v in ["roc_auc", "pr_auc"] {
        if let Some(a) = rep[v].as_f64() {
            println!("{v}: {a:.4}");
        }
    }
    if let Some(s) = rep.get("sample") {
        println!("sample: {s}");
    }
    if let Some(a) = rep.get("axioms").and_then(|a| a.as_object()).filter(|a| !a.is_empty()) {
        println!("axioms: {}", serde_json::Value::Object(a.clone()));
    }
    if let Some(t) = rep.get("timing") {
        println!("timing: {t}");
    }
    Ok(())
}
