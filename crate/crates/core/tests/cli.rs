use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pqlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqlab"))
        .args(args)
        .env("PQLAB_OUT_DIR", dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{"p": 2, "q": 2, "alpha": 3, "beta": 3, "n": 64,
  "weight": {"breakpoints": [0, 0.45, 0.55, 1], "values": [1, -4, 1], "hypothesis": "F1"}}"#;

#[test]
fn eigen_prints_the_value_and_writes_the_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = pqlab(dir.path(), &["eigen", "--r", "p"]);
    assert_eq!(out.status.code(), Some(0));
    let value: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((value - std::f64::consts::PI.powi(2)).abs() < 1e-3 * value);
    let csv = fs::read_to_string(dir.path().join("phi1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,u");
    assert_eq!(lines.len(), 1 + 513);
    assert_eq!(lines[1], "0,0");
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pqlab(dir.path(), &["eigen", "--bogus"]).status.code(), Some(1));
    assert_eq!(pqlab(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(pqlab(dir.path(), &["eigen", "--config", "/nonexistent.json"]).status.code(), Some(1));
    let malformed = write_config(dir.path(), "m.json", r#"{"p": 2}"#);
    assert_eq!(pqlab(dir.path(), &["eigen", "--config", &malformed]).status.code(), Some(1));
    let no_negative = write_config(
        dir.path(),
        "f.json",
        &SMALL.replace("[1, -4, 1]", "[1, 0.5, 1]"),
    );
    let out = pqlab(dir.path(), &["eigen", "--config", &no_negative]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative part"));
    let bad_exp = write_config(dir.path(), "e.json", &SMALL.replace("\"alpha\": 3, \"beta\": 3", "\"alpha\": 0.5, \"beta\": 0.5"));
    assert_eq!(pqlab(dir.path(), &["eigen", "--config", &bad_exp]).status.code(), Some(1));
    let small = write_config(dir.path(), "s.json", SMALL);
    let below = pqlab(dir.path(), &["solve", "--config", &small, "--lambda", "5", "--mu", "5"]);
    assert_eq!(below.status.code(), Some(1));
    let help = pqlab(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("PQLAB_OUT_DIR"));
}

#[test]
fn trace_writes_both_branches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL);
    let out = pqlab(dir.path(), &["trace", "--config", &cfg, "--samples", "3", "--out", "curve.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lambda,mu,branch,residual_P,residual_F");
    assert_eq!(lines.len(), 1 + 6);
    let branch = |b: &str| lines[1..].iter().filter(|l| l.split(',').nth(2) == Some(b)).count();
    assert_eq!(branch("mu"), 3);
    assert_eq!(branch("lambda"), 3);
}

#[test]
fn solve_writes_report_and_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL);
    let out = pqlab(dir.path(), &["solve", "--config", &cfg, "--lambda", "10.0", "--mu", "10.1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert!(report["energy"].as_f64().unwrap() < 0.0);
    assert_eq!(report["nehari"], "NPlus");
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("x,u,v\n"));
    assert_eq!(csv.lines().count(), 1 + 65);
}

#[test]
fn sweep_classifies_and_solves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL);
    let out = pqlab(
        dir.path(),
        &[
            "sweep", "--config", &cfg, "--lambda-min", "9.9", "--lambda-max", "10.9", "--mu-min",
            "9.9", "--mu-max", "10.9", "--grid", "3", "--samples", "3",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        match r[2] {
            "GammaMinus" => assert_eq!(r[6], "ok"),
            _ => assert_eq!(r[6], "skipped"),
        }
    }
    assert!(rows.iter().any(|r| r[2] == "GammaMinus"));
    assert!(rows.iter().any(|r| r[2] == "GammaPlus"));
}

#[test]
fn verify_on_a_shallow_band_uses_the_trivial_branch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", &SMALL.replace("[1, -4, 1]", "[1, -0.1, 1]"));
    let out = pqlab(dir.path(), &["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    assert!(stdout.contains("sigma* = 1"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["sigma_star"].as_f64(), Some(1.0));
}
