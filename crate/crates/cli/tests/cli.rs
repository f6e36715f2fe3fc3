use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pathgrad(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathgrad"))
        .arg("--out")
        .arg(out)
        .args(["--jobs", "2"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = pathgrad(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn train_xor(dir: &TempDir) -> PathBuf {
    let out = dir.path().join("model");
    ok(&out, &["train", "--data", "xor", "--samples", "64", "--epochs", "40", "--batch-size", "8"]);
    out.join("model.json")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn train_writes_manifest_metrics_and_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("model");
    let stdout = ok(&out, &["train", "--data", "xor", "--samples", "64", "--epochs", "5"]);
    for f in ["model.json", "metrics.csv", "summary.json", "run_config.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let echoed: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    let saved: serde_json::Value = serde_json::from_slice(&fs::read(out.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(echoed, saved);
    assert_eq!(saved["command"], "train");
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 6);
}

#[test]
fn pathway_stats_writes_tables() {
    let dir = TempDir::new().unwrap();
    let model = train_xor(&dir);
    let out = dir.path().join("stats");
    ok(&out, &[
        "pathway-stats",
        "--model",
        model.to_str().unwrap(),
        "--data",
        "xor",
        "--samples",
        "64",
        "--inputs",
        "8",
        "--methods",
        "neuronintgrad,greedy",
        "--sparsity",
        "0.8,0.9,0.99",
    ]);
    let dead = fs::read_to_string(out.join("dead_fraction.csv")).unwrap();
    assert_eq!(dead.lines().count(), 1 + 2 * 3);
    assert!(dead.lines().any(|l| l.starts_with("neuronintgrad,0.9,")));
    assert!(out.join("jaccard.csv").is_file());
}

#[test]
fn attribute_writes_map_files() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m");
    ok(&model, &[
        "train",
        "--data",
        "glyphs:10",
        "--samples",
        "60",
        "--epochs",
        "2",
        "--arch",
        "conv:2:3,relu,flatten,dense:10",
    ]);
    let out = dir.path().join("attr");
    let model = model.join("model.json");
    ok(&out, &[
        "attribute",
        "--model",
        model.to_str().unwrap(),
        "--data",
        "glyphs:10",
        "--samples",
        "60",
        "--method",
        "pathway-gradient",
        "--sparsity",
        "0.9",
    ]);
    let pgm = fs::read(out.join("map.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n10 10\n255\n"));
    assert_eq!(pgm.len(), b"P5\n10 10\n255\n".len() + 100);
    let csv = fs::read_to_string(out.join("map.csv")).unwrap();
    assert!(csv.lines().count() >= 10);
}

#[test]
fn invalid_sparsity_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = pathgrad(dir.path(), &["select-path", "--model", "m.json", "--data", "xor", "--sparsity", "1.0"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sparsity"));
}

#[test]
fn missing_model_reports_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let o = pathgrad(&dir.path().join("o"), &["contrib", "--model", missing.to_str().unwrap(), "--data", "xor"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nope.json"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn argument_definitions_are_consistent() {
    use clap::CommandFactory;
    pathgrad_cli::Cli::command().debug_assert();
}

#[test]
fn unknown_flag_is_rejected() {
    let dir = TempDir::new().unwrap();
    assert!(!pathgrad(dir.path(), &["train", "--bogus"]).status.success());
}

#[test]
fn repeated_runs_give_identical_csvs() {
    let dir = TempDir::new().unwrap();
    let model = train_xor(&dir);
    let again = dir.path().join("again");
    ok(&again, &["train", "--data", "xor", "--samples", "64", "--epochs", "40", "--batch-size", "8"]);
    assert_eq!(csv_files(model.parent().unwrap()), csv_files(&again));
    assert_eq!(fs::read(&model).unwrap(), fs::read(again.join("model.json")).unwrap());

    let m = model.to_str().unwrap();
    let args = ["eval-lerf", "--model", m, "--data", "xor", "--samples", "64", "--inputs", "10", "--methods", "neuronintgrad,random"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&a, &args);
    let o = Command::new(env!("CARGO_BIN_EXE_pathgrad"))
        .arg("--out")
        .arg(&b)
        .args(["--jobs", "1"])
        .args(args)
        .output()
        .unwrap();
    assert!(o.status.success());
    let (ca, cb) = (csv_files(&a), csv_files(&b));
    assert!(!ca.is_empty());
    assert_eq!(ca, cb);
}
