//! Command-level integration tests: staged artifacts, degenerate inputs,
//! and config-file semantics.

use std::path::Path;
use std::process::Command;

fn flipnet_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flipnet"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("spawning flipnet binary");
    assert!(
        output.status.success(),
        "command failed: {:?}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn run_err(cmd: &mut Command) -> String {
    let output = cmd.output().expect("spawning flipnet binary");
    assert!(
        !output.status.success(),
        "command unexpectedly succeeded: {cmd:?}"
    );
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn synth_small(out: &Path, anomalies: u32, seed: u32) {
    run_ok(flipnet_bin().args([
        "synth",
        "--out",
        out.to_str().unwrap(),
        "--users",
        "250",
        "--moments",
        "300",
        "--players",
        "15",
        "--anomalies",
        &anomalies.to_string(),
        "--seed",
        &seed.to_string(),
    ]));
}

/// Honest-only market: fit then label must flag at most 2% of flips at
/// the default 1% threshold (near-calibration of the tail model).
#[test]
fn honest_market_flag_rate_is_calibrated() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), 0, 5);
    let input = dir.path().join("transactions.csv");
    let input = input.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(flipnet_bin().args(["fit", "--input", input, "--out", out, "--min-leaf", "150"]));
    run_ok(flipnet_bin().args(["label", "--input", input, "--out", out]));

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("label_summary.json")).unwrap(),
    )
    .unwrap();
    let rate = summary["flag_rate"].as_f64().unwrap();
    assert!(rate <= 0.02, "flag rate {rate}");
    assert_eq!(summary["threshold"].as_f64().unwrap(), 0.01);
}

/// Zero flagged transactions: `net` still succeeds and writes an
/// empty-subnetwork report.
#[test]
fn net_with_no_flags_writes_empty_subnet_report() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), 0, 6);
    let input = dir.path().join("transactions.csv");
    let input = input.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(flipnet_bin().args(["fit", "--input", input, "--out", out, "--min-leaf", "150"]));
    // A vanishingly small threshold guarantees zero flags.
    run_ok(flipnet_bin().args([
        "label",
        "--input",
        input,
        "--out",
        out,
        "--threshold",
        "0.0000000001",
    ]));
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert!(labels.lines().skip(1).all(|l| l.ends_with(",0")));

    run_ok(flipnet_bin().args([
        "net",
        "--input",
        input,
        "--out",
        out,
        "--delta",
        "1",
        "--bootstrap-samples",
        "100",
    ]));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("network_report.json")).unwrap(),
    )
    .unwrap();
    let subnets = report["subnets"].as_array().unwrap();
    assert_eq!(subnets.len(), 1);
    assert_eq!(subnets[0]["report"]["node_count"], 0);
    assert_eq!(subnets[0]["report"]["edge_count"], 0);
    assert!(subnets[0]["bootstrap"].as_array().unwrap().is_empty());
    assert!(dir.path().join("edges_anomalous_delta_1.tsv").exists());
}

/// Commands requiring artifacts fail cleanly when they are missing.
#[test]
fn missing_artifacts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), 0, 7);
    let input = dir.path().join("transactions.csv");
    let input = input.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    let stderr = run_err(flipnet_bin().args(["label", "--input", input, "--out", out]));
    assert!(stderr.contains("missing artifact"), "stderr: {stderr}");
    let stderr = run_err(flipnet_bin().args(["report", "--out", out]));
    assert!(stderr.contains("missing artifact"), "stderr: {stderr}");
}

/// Config-file values override command-line flags.
#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    std::fs::write(&config_path, r#"{"threshold": 0.2, "seed": 5}"#).unwrap();

    synth_small(dir.path(), 0, 5);
    let input = dir.path().join("transactions.csv");
    let input = input.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(flipnet_bin().args(["fit", "--input", input, "--out", out, "--min-leaf", "150"]));
    // The flag says 0.01 but the config file wins with 0.2.
    run_ok(flipnet_bin().args([
        "label",
        "--input",
        input,
        "--out",
        out,
        "--threshold",
        "0.01",
        "--config",
        config_path.to_str().unwrap(),
    ]));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("label_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["threshold"].as_f64().unwrap(), 0.2);
}

/// Bad inputs exit nonzero with a structured message.
#[test]
fn invalid_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stderr = run_err(flipnet_bin().args([
        "synth", "--out", out, "--users", "1", "--seed", "3",
    ]));
    assert!(stderr.contains("error"), "stderr: {stderr}");

    synth_small(dir.path(), 0, 5);
    let input = dir.path().join("transactions.csv");
    let input = input.to_str().unwrap();
    let stderr = run_err(flipnet_bin().args([
        "fit", "--input", input, "--out", out, "--min-leaf", "150", "--threshold", "1.5",
    ]));
    assert!(stderr.contains("threshold"), "stderr: {stderr}");
    let stderr = run_err(flipnet_bin().args([
        "net", "--input", input, "--out", out, "--delta", "-5",
    ]));
    assert!(stderr.contains("delta") || stderr.contains("error"), "stderr: {stderr}");
}

/// Malformed rows are skipped with a warning; the pipeline continues.
#[test]
fn malformed_rows_are_skipped_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), 0, 8);
    let csv_path = dir.path().join("transactions.csv");
    let mut text = std::fs::read_to_string(&csv_path).unwrap();
    text.push_str("mu-bad,m1,p1,s1,alice,alice,Dunk,0,10,2021-02-03T04:05:06Z,tbad,5.00\n");
    std::fs::write(&csv_path, text).unwrap();

    let out = dir.path().to_str().unwrap();
    let stderr = run_ok(flipnet_bin().args([
        "fit",
        "--input",
        csv_path.to_str().unwrap(),
        "--out",
        out,
        "--min-leaf",
        "150",
    ]));
    assert!(stderr.contains("rejected 1"), "stderr: {stderr}");
}
