//! End-to-end tests of the `qhe` binary: exit codes, golden scenarios,
//! report determinism, and the scenario-file round trip.

use std::path::PathBuf;
use std::process::{Command, Output};

fn qhe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qhe"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn run_args(args: &[&str]) -> Output {
    qhe().args(args).output().expect("binary runs")
}

#[test]
fn example1_passes_with_exit_zero() {
    let out = run_args(&["run", scenario("example1.scn").to_str().unwrap(), "--json"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
    // Q' upper-left entry is (2 - sqrt 2)/4 + i sqrt(2)/4.
    let entry = &report["q_prime"][0]["matrix"]["data"][0];
    let re = entry[0].as_f64().unwrap();
    let im = entry[1].as_f64().unwrap();
    assert!((re - (2.0 - std::f64::consts::SQRT_2) / 4.0).abs() < 1e-9);
    assert!((im - std::f64::consts::SQRT_2 / 4.0).abs() < 1e-9);
}

#[test]
fn example2_and_3_pass() {
    for name in ["example2.scn", "example3.scn"] {
        let out = run_args(&["run", scenario(name).to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}

#[test]
fn malformed_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.scn");
    std::fs::write(&path, "seed = \"not an int\"\n").unwrap();
    let out = run_args(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("line"),
        "parse error should carry a position: {err}"
    );
}

#[test]
fn missing_file_exits_three() {
    let out = run_args(&["run", "/nonexistent/path.scn"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn hostile_channel_exits_two() {
    let out = run_args(&["run", scenario("eavesdropper.scn").to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("CHANNEL COMPROMISED"), "{text}");
}

#[test]
fn json_reports_are_deterministic() {
    let a = run_args(&["run", scenario("example2.scn").to_str().unwrap(), "--json"]);
    let b = run_args(&["run", scenario("example2.scn").to_str().unwrap(), "--json"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), Some(0));
}

#[test]
fn sweep_is_deterministic_and_green() {
    let a = run_args(&["sweep", "--count", "25", "--seed", "1"]);
    let b = run_args(&["sweep", "--count", "25", "--seed", "1"]);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stdout)
    );
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8_lossy(&a.stdout);
    assert!(text.contains("25/25 passed"), "{text}");
}

#[test]
fn sweep_rejects_zero_count() {
    let out = run_args(&["sweep", "--count", "0"]);
    assert_eq!(out.status.code(), Some(2), "clap usage error expected");
}

#[test]
fn security_summary_runs() {
    let out = run_args(&[
        "security",
        "--samples",
        "20000",
        "--trials",
        "200",
        "--decoys",
        "10",
        "--json",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["rho_q_deviation"].as_f64().unwrap() < 1e-9);
    assert!(summary["rho_enc_deviation"].as_f64().unwrap() < 0.05);
    let detection = summary["detection_rate"].as_f64().unwrap();
    let expected = summary["expected_detection"].as_f64().unwrap();
    assert!((detection - expected).abs() < 0.05);
}

#[test]
fn degenerate_security_sampling_warns_but_passes() {
    let out = run_args(&[
        "security",
        "--samples",
        "1",
        "--trials",
        "10",
        "--decoys",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("warning"), "{text}");
}

#[test]
fn run_flag_overrides_apply() {
    // Forcing a hopeless tolerance flips the golden run to exit 1.
    let out = run_args(&[
        "run",
        scenario("example3.scn").to_str().unwrap(),
        "--tolerance",
        "1e-30",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
