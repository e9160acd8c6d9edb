//! End-to-end runs of the `shelab` binary: outputs, manifests and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shelab")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
scenario = "cli-small"
[grid]
dim = 1
half_width = 6.0
points = 121
[time]
steps = 40
checkpoints = 5
[coefficients]
potential = { kind = "zero" }
noise = { kind = "constant", value = NOISE }
[initial]
kind = "gaussian"
amplitude = 1.0
width = 0.5
[[weights]]
family = "quadratic"
gamma = 0.2
time_dependent = false
[ensemble]
paths = 6
seed = 5
"#;

fn small_config(dir: &Path, noise: f64) -> PathBuf {
    let path = dir.join(format!("small-{noise}.toml"));
    std::fs::write(&path, SMALL.replace("NOISE", &noise.to_string())).unwrap();
    path
}

#[test]
fn verify_thresholds_passes_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("standard-noisy.toml");
    let out = shelab(&["verify", "thresholds", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS thresholds"));
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn simulate_then_report_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 0.3);
    let out_dir = dir.path().join("run");
    let out = shelab(&[
        "simulate",
        "--config",
        arg(&cfg),
        "--out",
        arg(&out_dir),
        "--dump-fields",
        "--paths",
        "4",
        "--seed",
        "9",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["stats.json", "stats_0.csv", "fields_0.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"master\": 9") && manifest.contains("\"paths\": 4"));

    let report = shelab(&["report", arg(&out_dir), "--replay"]);
    assert_eq!(report.status.code(), Some(0), "{}", String::from_utf8_lossy(&report.stdout));
    assert!(String::from_utf8_lossy(&report.stdout).contains("bit-identical"));

    std::fs::write(out_dir.join("stats_0.csv"), "tampered\n").unwrap();
    let tampered = shelab(&["report", arg(&out_dir)]);
    assert_eq!(tampered.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&tampered.stdout).contains("MISMATCH"));
}

#[test]
fn convexity_precondition_violation_is_a_config_error() {
    // ‖G‖²∞/4 = 0.25 exceeds γ = 0.2.
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1.0);
    let out = shelab(&["verify", "convexity", "--config", arg(&cfg), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("γ > ‖G‖²∞/4"));
}

#[test]
fn unknown_check_and_bad_arguments_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 0.3);
    let out = shelab(&["verify", "no-such-check", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown check id"));
    assert_eq!(shelab(&["simulate", "--config", "/nonexistent.toml"]).status.code(), Some(3));
    assert_eq!(shelab(&["simulate"]).status.code(), Some(3));
    assert_eq!(shelab(&["--help"]).status.code(), Some(0));
}

#[test]
fn tolerance_scale_flag_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 0.3);
    let out_dir = dir.path().join("o");
    let out =
        shelab(&["verify", "convexity", "--config", arg(&cfg), "--out", arg(&out_dir), "--tolerance-scale", "2.5"]);
    assert!(matches!(out.status.code(), Some(0..=2)), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"scale\": 2.5"));
}
