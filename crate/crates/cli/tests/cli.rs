use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_malxai");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("MALXAI__seed")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> PathBuf {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    dir.join(String::from_utf8(out.stdout).unwrap().trim())
}

fn small_config(dir: &Path, data: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(
        &p,
        format!(
            r#"seed = 5
[data]
path = "{data}"
[model]
kind = "mlp"
hidden = [64, 32]
[train]
epochs = 30
batch_size = 32
[explain]
summary_size = 2
[explain.lime]
num_samples = 300
[explain.shap]
num_permutations = 10
"#
        ),
    )
    .unwrap();
    p
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--malware", "20", "--benign", "15", "--seed", "9", "--out", "a.csv"]);
    ok(dir.path(), &["synth", "--malware", "20", "--benign", "15", "--seed", "9", "--out", "b.csv"]);
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 36);
    assert!(text.starts_with("hash,t_0,"));
    assert!(text.lines().next().unwrap().ends_with(",t_99,malware"));
}

#[test]
fn empty_synth_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--malware", "0", "--benign", "0", "--out", "e.csv"]);
    assert_eq!(fs::read_to_string(dir.path().join("e.csv")).unwrap().lines().count(), 1);
}

#[test]
fn train_explain_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--malware", "300", "--benign", "300", "--seed", "2", "--out", "d.csv"]);
    let cfg = small_config(d, "d.csv");
    let cfg = cfg.to_str().unwrap();

    let a = ok(d, &["train", "-c", cfg, "--out", "runs_a"]);
    let b = ok(d, &["train", "-c", cfg, "--out", "runs_b"]);
    for f in ["config.json", "history.json", "metrics.json", "metrics.txt", "roc.csv", "pr.csv", "weights.bin", "report.json"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    assert_eq!(a.file_name(), b.file_name());
    for f in ["metrics.json", "history.json", "roc.csv", "weights.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("metrics.json")).unwrap()).unwrap();
    assert!(m["accuracy"].as_f64().unwrap() >= 0.95, "{m}");

    let saved = a.join("config.toml");
    let weights = a.join("weights.bin");
    let (saved, weights) = (saved.to_str().unwrap(), weights.to_str().unwrap());
    let e = ok(d, &["explain", "-c", saved, "--weights", weights, "--sample", "index:0", "--out", "runs_a"]);
    for f in ["explanation-lime.json", "explanation-shap.json", "summary.json", "plot-shap.svg", "report.json"] {
        assert!(e.join(f).is_file(), "missing {f}");
    }
    let shap: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(e.join("explanation-shap.json")).unwrap()).unwrap();
    let sum: f64 = shap["attributions"].as_array().unwrap().iter().map(|a| a["value"].as_f64().unwrap()).sum();
    let gap = shap["base_value"].as_f64().unwrap() + sum - shap["class_probs"]["malware"].as_f64().unwrap();
    assert!(gap.abs() < 1e-9, "efficiency gap {gap}");

    let out = run(d, &["explain", "-c", saved, "--weights", weights, "--sample", "hash:ffffffffffffffffffffffffffffffff"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(d, &["explain", "-c", saved, "--weights", weights, "--model", "cnn"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(d, &["report", "--run", a.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("weighted avg"));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["train", "--data", "no/such/file.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/file.csv"));

    fs::write(d.join("empty.toml"), "").unwrap();
    let out = run(d, &["sweep", "--grid", "empty.toml"]);
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(BIN)
        .args(["train"])
        .current_dir(d)
        .env("MALXAI__train__batch_size", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // A huge learning rate on a tiny model overflows the loss.
    fs::write(
        d.join("div.toml"),
        "[data.synth]\nmalware = 50\nbenign = 50\n[model]\nkind = \"mlp\"\nhidden = [8]\n[train]\nepochs = 50\nbatch_size = 10\nlearning_rate = 1e300\n[train.optimizer]\nkind = \"sgd\"\n",
    )
    .unwrap();
    let out = run(d, &["train", "-c", "div.toml", "--out", "runs"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn default_grid_sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--malware", "150", "--benign", "150", "--seed", "4", "--out", "d.csv"]);
    let cfg = small_config(d, "d.csv");
    let cfg = cfg.to_str().unwrap();
    let a = ok(d, &["sweep", "-c", cfg, "--epochs", "5", "--out", "a", "--threads", "3"]);
    let b = ok(d, &["sweep", "-c", cfg, "--epochs", "5", "--out", "b"]);
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 17);
    assert_eq!(csv, fs::read_to_string(b.join("sweep.csv")).unwrap());
    assert_eq!(fs::read(a.join("sweep.json")).unwrap(), fs::read(b.join("sweep.json")).unwrap());
}

#[test]
fn shipped_configs_load() {
    #[derive(serde::Deserialize)]
    struct Grid {
        cell: Vec<malxai::evalkit::SweepCell>,
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let grid: Grid = toml::from_str(&fs::read_to_string(root.join("table5_grid.toml")).unwrap()).unwrap();
    assert_eq!(grid.cell, malxai::evalkit::default_table5_grid());

    let dir = tempfile::tempdir().unwrap();
    let example = root.join("example.toml");
    let out = ok(dir.path(), &["train", "-c", example.to_str().unwrap(), "--epochs", "1", "--out", "runs"]);
    assert!(out.join("weights.bin").is_file());
    let out = run(dir.path(), &["report", "--run", "."]);
    assert_eq!(out.status.code(), Some(2));
}
