use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_forkgame"));
    c.env("FORKGAME_THREADS", "2");
    c
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad json line {l:?}: {e}")))
        .collect()
}

fn small_params(dir: &tempfile::TempDir) -> PathBuf {
    let p = dir.path().join("small.toml");
    std::fs::write(&p, "lambda = \"0.5,0.3,0.2\"\nrounds = 4\ntimelock = 2\n").unwrap();
    p
}

#[test]
fn cost_defaults() {
    let out = run(&["--format", "json-lines", "cost"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = records(&out);
    let quote = |kind: &str| {
        recs.iter()
            .find(|r| r["record"] == "quote" && r["bound_kind"] == kind)
            .unwrap_or_else(|| panic!("no {kind} quote"))
            .clone()
    };
    assert_eq!(quote("Legacy")["value_sat"], 100_000_000);
    assert_eq!(quote("BfSimplified")["value_sat"], 210_000);
    let ceiling = quote("FeasibilityCeiling");
    assert_eq!(ceiling["value_sat"], 500_000);
    assert_eq!(ceiling["fiat_value"], 125.0);
}

#[test]
fn cost_rejects_negative_fee() {
    let out = run(&["cost", "--f-bar", "-5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_on_reference_instance() {
    let p = fixture("paper2022.toml");
    let out = run(&["--format", "json-lines", "oracle", "--params", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&out);
    let responses: Vec<_> = recs.iter().filter(|r| r["record"] == "best_response").collect();
    assert_eq!(responses.len(), 3);
    assert!(responses.iter().all(|r| r["is_best_response"] == true));
}

#[test]
fn oracle_budget_exit_code() {
    let p = fixture("paper2022.toml");
    let out = run(&["oracle", "--params", p.to_str().unwrap(), "--budget", "10"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn missing_params_file_is_usage_error() {
    let out = run(&["simulate", "--params", "/nonexistent/params.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_params_file_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "lambda = \"0.5,0.5\"\nrounds = 3\ntimelock = 1\nmystery = 1\n").unwrap();
    let out = run(&["oracle", "--params", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let p = small_params(&dir);
    let args = [
        "--format", "json-lines", "simulate", "--params", p.to_str().unwrap(), "--profile", "greedy",
        "--trials", "500", "--seed", "7",
    ];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0));
    let b = bin().env("FORKGAME_THREADS", "1").args(args).output().unwrap();
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_trace_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = small_params(&dir);
    let trace = dir.path().join("trace.jsonl");
    let out = run(&[
        "simulate", "--params", p.to_str().unwrap(), "--trials", "10", "--trace", trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(trace).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0]["round"], 1);
}

#[test]
fn empirics_on_fixtures() {
    let out = run(&[
        "--format",
        "json-lines",
        "empirics",
        "--fees",
        fixture("fees_2022.csv").to_str().unwrap(),
        "--pools",
        fixture("pool_shares_2022.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&out);
    let foundry = recs
        .iter()
        .find(|r| r["pool"] == "Foundry USA")
        .expect("Foundry row");
    assert!((foundry["share"].as_f64().unwrap() - 0.22281).abs() < 1e-5);
}

#[test]
fn txgraph_commands() {
    assert_eq!(run(&["txgraph", "validate"]).status.code(), Some(0));
    assert_eq!(run(&["txgraph", "enumerate"]).status.code(), Some(0));
    let built = run(&["txgraph", "build"]);
    assert_eq!(built.status.code(), Some(0));
    let g: Value = serde_json::from_slice(&built.stdout).unwrap();
    assert!(g["txs"].as_array().unwrap().len() >= 6);
    // the bribe output is timelocked
    let early = run(&["txgraph", "simulate", "--steps", "CommitmentOld@1,Tx2@2"]);
    assert_eq!(early.status.code(), Some(3));
    let late = run(&["txgraph", "simulate", "--steps", "CommitmentOld@1,Tx2@4"]);
    assert_eq!(late.status.code(), Some(0), "{}", String::from_utf8_lossy(&late.stderr));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}
