use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cellbranch"));
    cmd.env_remove("CELLBRANCH_OUT");
    cmd
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn lineage_csv(out: &Path, workers: &str) -> Vec<u8> {
    let cfg = config("subcritical-geometric.json");
    let o = run(&[
        "--workers",
        workers,
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
        "lineage",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read(out.join("lineage.csv")).unwrap()
}

#[test]
fn lineage_output_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = lineage_csv(&dir.path().join("a"), "1");
    let b = lineage_csv(&dir.path().join("b"), "3");
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let manifest = fs::read_to_string(dir.path().join("a/manifest.json")).unwrap();
    assert!(manifest.contains("config_sha256"));
}

#[test]
fn tree_ledgers_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("tree-supercritical.json");
    let mut files = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let o = run(&["--out", out.to_str().unwrap(), "tree", "--config", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(fs::read(out.join("ledgers.csv")).unwrap());
    }
    assert!(files[0].starts_with(b"run_id,n,k,count"));
    assert_eq!(files[0], files[1]);
}

#[test]
fn invalid_immigration_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("toy-chain.json"))
        .unwrap()
        .replace("\"law\": \"bernoulli\", \"p\": 0.5", "\"law\": \"dirac\", \"value\": 1");
    let path = dir.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "classify", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"error\""));
}

#[test]
fn missing_config_exits_with_usage_code() {
    let o = run(&["classify", "--config", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_suite_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "verify", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn toy_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "verify", "toy"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn toy_oracle_writes_stationary_law() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("toy-chain.json");
    let o = run(&["--out", dir.path().to_str().unwrap(), "oracle", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("stationary.csv")).unwrap();
    let second: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(second[0], "0");
    assert!((second[2].parse::<f64>().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}
