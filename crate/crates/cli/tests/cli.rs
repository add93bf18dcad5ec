use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_banded-markov")).args(args).output().expect("binary runs")
}

fn data(name: &str) -> String {
    format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("json on stderr")
}

#[test]
fn verify_two_state_passes() {
    let out = run(&["verify", "--input", &data("two_state.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["schema"], "banded-markov/1");
    assert_eq!(v["report"]["all_passed"], true);
}

#[test]
fn zero_in_band_is_a_validation_error() {
    let out = run(&["factorize", "--input", &data("zero_band.json")]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["schema"], "banded-markov/1");
    assert_eq!(e["error"]["name"], "NonPositiveInBandEntry");
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_flags_and_tolerances_exit_two() {
    let out = run(&["spectrum", "--input", &data("two_state.json"), "--tol", "nope=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["name"], "InvalidInput");
    let out = run(&["spectrum", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["name"], "InvalidInput");
    let out = run(&["spectrum", "--input", &data("missing.json")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn spectrum_of_two_state_chain() {
    let out = run(&["spectrum", "--input", &data("two_state.json"), "--tol", "bio=1e-8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let l: Vec<f64> = serde_json::from_value(v["eigenvalues"].clone()).unwrap();
    assert!((l[0] - 1.0).abs() < 1e-14 && (l[1] - 1.0 / 3.0).abs() < 1e-14);
    assert_eq!(v["overrides"]["bio"], 1e-8);
}

#[test]
fn output_is_deterministic_and_sorted() {
    let args = ["analyze", "--input", &data("two_state.json")];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(serde_json::to_string(&v).unwrap() + "\n", text);
}

#[test]
fn simulate_is_reproducible_by_seed() {
    let args = ["simulate", "--input", &data("two_state.json"), "--steps", "100000", "--seed", "11"];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, run(&args).stdout);
    let v = stdout_json(&a);
    let pi: Vec<f64> = serde_json::from_value(v["estimates"]["stationary"].clone()).unwrap();
    let se: Vec<f64> = serde_json::from_value(v["standard_errors"]["stationary"].clone()).unwrap();
    assert!((pi[0] - 0.5).abs() < 4.0 * se[0], "{pi:?} {se:?}");
}

#[test]
fn classify_biased_walk_is_transient_leaning() {
    let out = run(&["classify", "--input", &data("biased_walk.json"), "--N", "10,20,30,40"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["diagnostics"]["verdict"], "transient-leaning");
}

#[test]
fn classify_needs_four_truncations() {
    let out = run(&["classify", "--input", &data("biased_walk.json"), "--N", "10,20"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["name"], "InsufficientTruncations");
}

#[test]
fn csv_and_out_file() {
    let dir = std::env::temp_dir().join(format!("bm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("poly.csv");
    let out = run(&["poly", "--input", &data("two_state.json"), "--x", "0.5", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,n,A0,B0,P,Q,R"));
    assert_eq!(lines.count(), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}
