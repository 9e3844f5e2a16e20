use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const E2: &str = r#"{"nodes": 3, "edges": [{"u": 0, "v": 1, "w": 2}, {"u": 1, "v": 2, "w": 1}]}"#;
const TRIANGLE: &str = r#"{"nodes": 3, "edges": [{"u": 0, "v": 1, "w": 1}, {"u": 1, "v": 2, "w": 1}, {"u": 0, "v": 2, "w": 1}]}"#;
const SHORT_PATH: &str = r#"{"nodes": 3, "edges": [{"u": 0, "v": 1, "w": 1}, {"u": 1, "v": 2, "w": 1}]}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bargaining"))
}

fn with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = bin().args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn file(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn generate_writes_a_loadable_path() {
    let out = bin().args(["generate", "--topology", "path", "--len", "3", "--weights", "2,1"]).output().unwrap();
    assert!(out.status.success());
    let doc = json(&out);
    assert_eq!(doc["nodes"], 3);
    let w: Vec<f64> = doc["edges"].as_array().unwrap().iter().map(|e| e["w"].as_f64().unwrap()).collect();
    assert_eq!(w, [2.0, 1.0]);
}

#[test]
fn generate_is_deterministic_per_seed() {
    let args = ["generate", "--topology", "erdos-renyi", "--len", "8", "--p", "0.5", "--uniform", "1,3", "--seed", "11"];
    let a = bin().args(args).output().unwrap();
    let b = bin().args(args).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn run_reports_earnings_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = with_stdin(&["run", "--trace", trace.to_str().unwrap()], E2);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    let gamma: Vec<f64> = report["gamma"].as_array().unwrap().iter().map(|g| g.as_f64().unwrap()).collect();
    for (g, want) in gamma.iter().zip([0.5, 1.5, 0.0]) {
        assert!((g - want).abs() < 1e-7, "{gamma:?}");
    }
    let text = std::fs::read_to_string(trace).unwrap();
    assert!(text.lines().count() > 2);
}

#[test]
fn verify_passes_on_e2() {
    let out = with_stdin(&["verify"], E2);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = json(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["lp"], "tight");
    assert_eq!(r["unique"], true);
}

#[test]
fn verify_flags_the_triangle() {
    let out = with_stdin(&["verify"], TRIANGLE);
    let r = json(&out);
    assert_eq!(r["lp"], "pointed_not_tight");
    let notes = r["notes"].to_string();
    assert!(notes.contains("not tight"), "{notes}");
}

#[test]
fn verify_notes_degenerate_lp() {
    let out = with_stdin(&["verify"], SHORT_PATH);
    let r = json(&out);
    assert_eq!(r["lp"], "degenerate");
    assert!(r["notes"].to_string().contains("degenerate LP"));
}

#[test]
fn decompose_reports_slack() {
    let out = with_stdin(&["decompose"], E2);
    assert!(out.status.success());
    let r = json(&out);
    let sigma = r["decomposition"]["levels"][0].as_f64().unwrap();
    assert!((sigma - 0.5).abs() < 1e-7, "{r}");
}

#[test]
fn experiment_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = file(
        dir.path(),
        "spec.json",
        r#"{"family": {"topology": "path", "len": 4, "weights": {"scheme": "default", "jitter": 0.0}},
            "sizes": [4, 6], "eps": 1e-6, "repetitions": 2, "seed": 9}"#,
    );
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = bin().args(["experiment", "--spec", &spec, "--output", path.to_str().unwrap()]).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("n,W,sigma,eps,iterations_to_eps,t_star_reference,seed,converged"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn bipartite_rejects_odd_cycle() {
    let out = with_stdin(&["bipartite"], TRIANGLE);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bipartite_accepts_a_path() {
    let out = with_stdin(&["bipartite"], E2);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn io_and_parse_errors_exit_2() {
    let out = bin().args(["verify", "--input", "/definitely/not/here.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = with_stdin(&["verify"], "{bad");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = with_stdin(&["run", "--kappa", "1.5"], E2);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pathlab_simplified_converges() {
    let out = bin().args(["pathlab", "simplified", "--weights", "2,1,2"]).output().unwrap();
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["converged"], true);
    assert!(r["log_slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn pathlab_sandwich_holds_on_e2() {
    let out = with_stdin(&["pathlab", "sandwich", "--delta-big", "0.2", "--delta", "0.1", "--horizon", "300"], E2);
    assert!(out.status.success(), "{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
}
