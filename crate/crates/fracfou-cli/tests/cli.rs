use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn fracfou(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracfou")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn chaos_reports_boundary_case() {
    let o = fracfou(&["chaos", "--H", "0.75", "--coeffs", "0,0,1", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["summary"]["rank"], 2);
    assert_eq!(doc["summary"]["h_star"].as_f64().unwrap(), 0.5);
    assert_eq!(doc["summary"]["regime"], "Boundary");
    assert!(doc["summary"]["alpha_formula"].as_str().unwrap().contains("ln eps"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&fracfou(&["no-such-command"])), 1);
    assert_eq!(code(&fracfou(&["sample-fbm"])), 1);
    assert_eq!(code(&fracfou(&["sample-fbm", "--H", "1.5"])), 1);
    assert_eq!(code(&fracfou(&["chaos", "--H", "0.7", "--coeffs", "1"])), 1);
    assert_eq!(code(&fracfou(&["--config", "/nonexistent/run.toml"])), 1);
    assert_eq!(code(&fracfou(&["--help"])), 0);
}

#[test]
fn numerical_failure_exits_with_two_and_a_report() {
    let o = fracfou(&["homogenize", "--H", "0.6", "--eps", "0.05", "--f", "affine:100,0", "--x0", "1", "--replicas", "64"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["status"], "error");
    assert_eq!(doc["kind"], "numerical");
}

#[test]
fn same_seed_gives_identical_bytes_for_any_thread_count() {
    let args = ["clt-scan", "--H", "0.6", "--eps", "0.2,0.1,0.05", "--replicas", "200", "--seed", "7"];
    let a = fracfou(&[&args[..], &["--threads", "1"]].concat());
    let b = fracfou(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).starts_with("eps,statistic,stderr,n\n"));
    let c = fracfou(&["clt-scan", "--H", "0.6", "--eps", "0.2,0.1,0.05", "--replicas", "200", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let o = fracfou(&["sample-fou", "--H", "0.3", "--eps", "0.2", "--replicas", "3", "--seed", "11", "--out", first.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let echo = dir.path().join("first.csv.config.toml");
    let text = fs::read_to_string(&echo).unwrap();
    assert!(text.contains("seed = 11"));

    // The echo names its own output file, so redirect the rerun.
    let second = dir.path().join("second.csv");
    let o = fracfou(&["--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    let rerun_echo = fs::read_to_string(dir.path().join("second.csv.config.toml")).unwrap();
    assert_eq!(text.replace("first.csv", "second.csv"), rerun_echo);
}

#[test]
fn floats_carry_seventeen_digits() {
    let o = fracfou(&["rho", "--H", "0.7", "--from", "1", "--to", "10", "--points", "2"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let value = row.split(',').nth(1).unwrap();
    let mantissa = value.split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
    assert_eq!(value.parse::<f64>().unwrap().to_bits(), fracfou::fou::rho(1.0, fracfou::gaussian::Hurst::new(0.7).unwrap()).to_bits());
}

#[test]
fn verify_runs_selected_criteria() {
    let o = fracfou(&["verify", "--criteria", "3", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["summary"]["criteria"][0]["passed"], true);
    assert_eq!(code(&fracfou(&["verify", "--criteria", "13"])), 1);
}
