use std::path::Path;
use std::process::{Command, Output};

use hiergrounding::corpus::load_corpus;
use serde_json::Value;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiergrounding")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "[train.neural]\nepochs = 3\n[eval]\nfolds = 3\n").unwrap();
    ok(&["gen", "--env", "small", "--n", "3", "--seed", "5", "--out", "corpus.jsonl"], d);
    let corpus = load_corpus(d.join("corpus.jsonl")).unwrap();
    assert!(!corpus.is_empty());
    // the same seed writes the same corpus
    assert_eq!(ok(&["gen", "--env", "small", "--n", "3", "--seed", "5"], d), std::fs::read_to_string(d.join("corpus.jsonl")).unwrap());

    for kind in ["ibm2", "multi-nn"] {
        let model = format!("{kind}.json");
        ok(&["--config", "run.toml", "train", "--model", kind, "--corpus", "corpus.jsonl", "--out", &model, "--env", "small"], d);
        let out = ok(&["plan", "--env", "small", "--model", &model, "--command", "go north", "--json"], d);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!(v["score_table_top5"].as_array().is_some_and(|a| !a.is_empty()));
    }

    ok(&["--config", "run.toml", "eval", "--mode", "cv", "--model", "ibm2", "--corpus", "corpus.jsonl", "--env", "small", "--out", "reports"], d);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("reports/cv_ibm2.json")).unwrap()).unwrap();
    assert_eq!(report["k"], 3);
    let acc = report["reward_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(d.join("reports/cv_ibm2.csv").exists());

    ok(&["--config", "run.toml", "eval", "--mode", "timing", "--model-file", "ibm2.json", "--corpus", "corpus.jsonl", "--env", "small", "--out", "reports"], d);
    let quartiles = std::fs::read_to_string(d.join("reports/timing_quartiles.csv")).unwrap();
    assert!(quartiles.starts_with("ratio,n,min,q1,median,q3,max"));
}

#[test]
fn usage_errors_exit_2_and_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(&["train", "--model", "transformer", "--corpus", "x", "--out", "y"], d);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["plan", "--command", "go north", "--planner", "dijkstra"], d);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["plan", "--command", "go north", "--env", "missing.json"], d);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["plan", "--command", "  "], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no tokens"));
}

#[test]
fn plan_prints_trace_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["plan", "--env", "small", "--command", "go to the green room", "--planner", "nh"], dir.path());
    assert!(out.contains("lifted:    agentInRegion agent0 roomIsGreen"), "{out}");
    assert!(out.contains("satisfied: true"));
    assert!(out.contains('A'));
}
