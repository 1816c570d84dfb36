use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn net(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../networks").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergocert")).args(args).env("NO_COLOR", "1").output().unwrap()
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ergocert"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(name: &str) -> String {
    net(name).to_string_lossy().into_owned()
}

#[test]
fn verdict_exit_codes() {
    assert_eq!(code(&run(&["analyze", &path("sir.crn")])), 0);
    assert_eq!(code(&run(&["analyze", &path("toy_catalytic.crn")])), 1);
    let o = run_stdin(&["analyze", "-"], "species: X\nparam b = 1\nreaction: 0 -> X @ b\n");
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn error_exit_codes() {
    assert_eq!(code(&run(&["analyze", "/nonexistent/x.crn"])), 66);
    assert_eq!(code(&run(&["analyze", &path("sir.crn"), "--mode", "nominal"])), 4);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    assert_eq!(code(&run(&["controller", &path("sir_robust.crn"), "--target", "I", "--mu", "1", "--theta", "1"])), 3);
    let o = run_stdin(&["analyze", "-"], "species: X\nparam k = 1\nreaction: X -> Y @ k\n");
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn json_is_reproducible() {
    let strip = |o: Output| -> Value {
        let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["diagnostics"]["wall_time_ms"] = Value::Null;
        v
    };
    let f = path("toy_robust_unstable.crn");
    let a = strip(run(&["analyze", &f]));
    let b = strip(run(&["analyze", &f, "--sequential"]));
    assert_eq!(a, b);
    assert_eq!(a["recheck"], "passed");
}

#[test]
fn classify_counts() {
    let o = run(&["classify", &path("circadian.crn"), "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["counts"]["dg"], 4);
    assert_eq!(v["counts"]["ct"], 2);
    assert_eq!(v["counts"]["cv"], 1);
    assert_eq!(v["counts"]["bimolecular"], 1);
}

#[test]
fn controller_and_simulation() {
    let g = path("gene_expression.crn");
    let o = run(&["controller", &g, "--target", "Protein", "--actuated", "mRNA", "--mu", "3", "--theta", "1"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["output_controllable"], true);

    let o = run(&["simulate", &path("birth_death.crn"), "--t-end", "200", "--runs", "8", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let mean = v["estimate"]["mean"][0].as_f64().unwrap();
    assert!((mean - 10.0).abs() < 1.5, "mean {mean}");
    assert_eq!(code(&run(&["simulate", &g, "--t-end", "1", "--x0", "1,2,3"])), 4);
}
