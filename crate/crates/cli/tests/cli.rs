//! Black-box tests of the command-line surface: argument handling, exit
//! codes, report shapes, and config validation messages.

use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tvconsensus")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn write(dir: &tempfile::TempDir, name: &str, content: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn check_classifies_a_scrambling_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(&dir, "m.csv", "0.5,0.5,0\n0.5,0.25,0.25\n0.5,0,0.5\n");
    let out = run(&["check", &m]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n"], 3);
    assert_eq!(report["stochastic"], true);
    assert_eq!(report["scrambling"], true);
    assert_eq!(report["sarymsakov"], true);
    assert!(report["positive_column"].is_array(), "index/value pair expected");
    assert_eq!(report["connectivity"], true);
}

#[test]
fn check_identity_matrix_fails_every_structural_class() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(&dir, "id.csv", "1,0,0\n0,1,0\n0,0,1\n");
    let out = run(&["check", &m]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["stochastic"], true);
    assert_eq!(report["positive_diagonal"], true);
    assert_eq!(report["connectivity"], false);
    assert_eq!(report["sarymsakov"], false);
    assert_eq!(report["scrambling"], false);
    assert!(report["positive_column"].is_null());
}

#[test]
fn check_non_stochastic_matrix_reports_false_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(&dir, "bad.csv", "0.5,0.2\n0.5,0.5\n");
    let out = run(&["check", &m]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["stochastic"], false);
}

#[test]
fn ragged_csv_is_a_config_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(&dir, "ragged.csv", "0.5,0.5\n1.0\n");
    let out = run(&["check", &m]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains(":2:") && stderr.contains("ragged"),
        "stderr should carry the line number: {stderr}"
    );
}

#[test]
fn missing_out_dir_is_a_config_error() {
    let out = run(&["ergodicity"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn short_horizon_is_rejected_naming_the_block_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"topology": {"n": 6}, "ergodicity": {"horizon": 10}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&["ergodicity", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("15"), "stderr should name the block length: {stderr}");
}

#[test]
fn compare_requires_two_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "cfg.json", r#"{"optimizer": {"methods": ["UDPSG"]}}"#);
    let out_dir = dir.path().join("out");
    let out = run(&["compare", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("two methods"));
}

#[test]
fn unknown_method_and_family_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write(&dir, "m.json", r#"{"optimizer": {"methods": ["XPSG"]}}"#);
    let out = run(&["optimize", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write(&dir, "f.json", r#"{"objective": {"family": "cubic"}}"#);
    let out = run(&["optimize", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixed_dimension_families_reject_other_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "cfg.json", r#"{"objective": {"family": "invex", "dim": 3}}"#);
    let out_dir = dir.path().join("out");
    let out = run(&["optimize", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn both_delta_forms_together_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"topology": {"delta": 0.5, "log10_delta": -3}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&["ergodicity", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_emits_trajectories_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"topology": {"n": 4, "seed": 1},
            "objective": {"family": "absolute_error", "dim": 2, "dataset_seed": 0},
            "optimizer": {"methods": ["UDPSG", "SDSG"], "iterations": 50,
                          "state_seeds": [0, 7]}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&[
        "optimize",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--validate",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "config.json",
        "summary.json",
        "trajectory_UDPSG_0.csv",
        "trajectory_UDPSG_7.csv",
        "trajectory_SDSG_0.csv",
        "trajectory_SDSG_7.csv",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(out_dir.join("trajectory_UDPSG_0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "k,consensus_error,f_mean,f_y,method,seed");
    assert_eq!(csv.lines().count(), 52, "header plus K+1 records");
}

#[test]
fn ergodicity_reports_cover_the_configured_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"topology": {"n": 4, "seed": 2},
            "ergodicity": {"s_list": [0, 9], "k_list": [18, 36], "horizon": 200,
                           "snapshots": [5]}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&[
        "ergodicity",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--validate",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "config.json",
        "gamma_grid.json",
        "deviation_check.json",
        "spread_decay.json",
        "pi_estimates.json",
        "uniform_gap.json",
        "assumptions.json",
        "A_5.csv",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let grid: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("gamma_grid.json")).unwrap())
            .unwrap();
    assert_eq!(grid.as_array().unwrap().len(), 4, "2 starts x 2 ends");
}

#[test]
fn command_line_overrides_change_the_materialized_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "ergodicity",
        "--out",
        out_dir.to_str().unwrap(),
        "--n",
        "4",
        "--topology-seed",
        "9",
        "--mode",
        "identity_approaching",
        "--extra-edge-prob",
        "0.1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(cfg["topology"]["n"], 4);
    assert_eq!(cfg["topology"]["seed"], 9);
    assert_eq!(cfg["topology"]["mode"], "identity_approaching");
    assert_eq!(cfg["topology"]["extra_edge_prob"], 0.1);
}
