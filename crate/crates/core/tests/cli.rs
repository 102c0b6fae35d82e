use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "grids": {"N_X": 64, "N_Y": 64, "N_X_base": 64, "N_Theta": 16},
  "experiments": {"points": 3, "cone_pairs": 4, "test_functions": 3, "word_depth": 10, "holder_pairs": 8}
}"#;

fn skewprod(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_skewprod"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pressure_writes_tagged_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = skewprod(dir.path(), SMALL, &["pressure"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = read_json(&dir.path().join("out/pressure.json"));
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(doc["seed"], 1);
    assert!(doc["result"]["gap"].as_f64().unwrap() < 5e-3);
}

#[test]
fn same_config_same_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(skewprod(a.path(), SMALL, &["check-hypotheses"])
        .status
        .success());
    assert!(skewprod(b.path(), SMALL, &["check-hypotheses"])
        .status
        .success());
    let ha = read_json(&a.path().join("out/hypotheses.json"))["config_hash"].clone();
    let hb = read_json(&b.path().join("out/hypotheses.json"))["config_hash"].clone();
    assert_eq!(ha, hb);
    let c = tempfile::tempdir().unwrap();
    assert!(
        skewprod(c.path(), SMALL, &["--seed", "7", "check-hypotheses"])
            .status
            .success()
    );
    assert_ne!(
        read_json(&c.path().join("out/hypotheses.json"))["config_hash"],
        ha
    );
}

#[test]
fn csv_outputs_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = skewprod(dir.path(), SMALL, &["fiber-measures"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("out/fiber_measures.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(
        lines.next().unwrap(),
        "point,function,residual_n15,residual_n30"
    );
    assert_eq!(lines.count(), 9);
}

#[test]
fn phi_cache_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("phi.json");
    let cache_arg = cache.to_str().unwrap();
    let first = skewprod(
        dir.path(),
        SMALL,
        &["--phi-cache", cache_arg, "compute-phi"],
    );
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert!(cache.exists());
    let again = skewprod(dir.path(), SMALL, &["--phi-cache", cache_arg, "rpf-base"]);
    assert!(again.status.success());
    let doc = read_json(&dir.path().join("out/rpf_base.json"));
    assert!(doc["result"]["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = skewprod(dir.path(), "{ not json", &["pressure"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["exit_code"], 2);

    let out = skewprod(dir.path(), r#"{"grids": {"N_Y": 4}}"#, &["pressure"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn violated_hypotheses_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let loud = r#"{"potential": {"terms": [[1, 0, 2.0]]}}"#;
    let out = skewprod(dir.path(), loud, &["check-hypotheses"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_passes_for_zero_potential() {
    let dir = tempfile::tempdir().unwrap();
    let zero = SMALL.replacen('{', r#"{"potential": {"terms": []},"#, 1);
    let out = skewprod(dir.path(), &zero, &["verify"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "{stdout}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.lines().any(|l| l.starts_with("PASS closed_forms")));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert!(skewprod(dir.path(), SMALL, &["--seed", "5", "holder"])
            .status
            .success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("out/holder.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let text = String::from_utf8(read(&a)).unwrap();
    let field = text
        .lines()
        .nth(2)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .to_owned();
    assert_eq!(
        field
            .split('e')
            .next()
            .unwrap()
            .replace(['.', '-'], "")
            .len(),
        15
    );
}
