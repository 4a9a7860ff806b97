//! End-to-end checks of the command-line driver: exit codes, output files,
//! and override flags.

use std::path::Path;
use std::process::{Command, Output};

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn qsx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsx"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn base_config() -> &'static str {
    r#"
        kind = "rate-eval"
        seed = 909
        replicas = 30

        [scaling]
        n = 2
        alpha = 1.0

        [protocol]
        horizon = 0.5
        left = { kind = "constant", value = 0.3 }
        right = { kind = "constant", value = 0.7 }

        [grid]
        m_t = 24
        m_y = 24
        samples = 3
    "#
}

#[test]
fn rate_subcommand_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", base_config());
    let out = dir.path().join("results");
    let output = qsx(&[
        "rate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(output.status.code(), Some(0), "stdout: {stdout}");
    assert!(stdout.contains("PASS typical_cost_zero"));
    assert!(out.join("manifest.toml").is_file());
    assert!(out.join("verdicts.tsv").is_file());
    assert!(out.join("rate.tsv").is_file());
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // an impossible z-score threshold makes the oracle comparison fail
    let body = format!("{}\n[tolerances]\nz_score = 1e-9\n", base_config());
    let config = write_config(dir.path(), "exp.toml", &body);
    let output = qsx(&["oracle-check", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("FAIL"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.toml",
        "kind = \"rate-eval\"\nnot_a_field = 1\n",
    );
    let output = qsx(&["rate", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));

    let missing = dir.path().join("absent.toml");
    let output = qsx(&["rate", "--config", missing.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));

    // structural validation failures also count as configuration errors
    let body = base_config().replace("replicas = 30", "replicas = 0");
    let config = write_config(dir.path(), "zero.toml", &body);
    let output = qsx(&["oracle-check", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let output = qsx(&["no-such-subcommand"]);
    assert_eq!(output.status.code(), Some(2));
    let output = qsx(&["rate"]);
    assert_eq!(output.status.code(), Some(2)); // --config is required
}

#[test]
fn override_flags_reach_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.toml", base_config());
    let out = dir.path().join("results");
    let output = qsx(&[
        "oracle-check",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "1234",
        "--replicas",
        "25",
        "--n",
        "3",
        "--grid",
        "16",
        "--eps",
        "0.2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 1234"));
    assert!(manifest.contains("replicas = 25"));
    assert!(manifest.contains("n = 3"));
    assert!(manifest.contains("eps = 0.2"));
    // the echoed kind follows the subcommand, not the document
    assert!(manifest.contains("kind = \"oracle-check\""));
}
