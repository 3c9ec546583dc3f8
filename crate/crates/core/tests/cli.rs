use std::path::Path;
use std::process::{Command, Output};

fn brlik(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brlik"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn fit_config(dir: &Path, csv: &str) -> String {
    std::fs::write(dir.join("data.csv"), csv).unwrap();
    let toml = r#"
seed = 9

[data]
source = "data.csv"
response = "y"

[estimator]
psi = "huber"

[prior]
mu0 = [0.0]
var0 = 100.0
a0 = 2.0
b0 = 1.0

[chain]
iterations = 400
burn_in = 100
thin = 1
"#;
    let path = dir.join("run.toml");
    std::fs::write(&path, toml).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn selftest_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = brlik(&["selftest"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 5 && text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn fit_writes_draws_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fit_config(dir.path(), "y\n1.2\n0.4\n-0.3\n2.2\n0.9\n1.5\n0.1\n7.0\n");
    let out = brlik(&["fit", "--config", &cfg, "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("res/fit_draws.csv").exists());
    assert!(dir.path().join("res/fit_summary.json").exists());
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(brlik(&["fit"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(brlik(&["fit", "--config", "absent.toml"], dir.path()).status.code(), Some(4));
}

#[test]
fn constant_response_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fit_config(dir.path(), "y\n3\n3\n3\n3\n3\n3\n");
    let out = brlik(&["fit", "--config", &cfg, "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn header_only_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fit_config(dir.path(), "y\n");
    let out = brlik(&["fit", "--config", &cfg, "--out", "res"], dir.path());
    assert_ne!(out.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn unknown_reproduction_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(brlik(&["reproduce", "nope", "--seed", "1"], dir.path()).status.code(), Some(2));
}
