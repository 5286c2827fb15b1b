use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dagnet::agentization::default_library;
use dagnet::memory::{closed_form_tokens, count_tokens, TokenParams};
use dagnet::topology::{from_json, validate};
use serde_json::Value;

fn dagnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dagnet")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("metadata");
    v
}

#[test]
fn topo_writes_json_and_prints_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagnet(dir.path(), &["topo", "--kind", "chain", "--n", "4", "--format", "json", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(0));
    let t = from_json(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(t.edge_count(), 3);
    assert!(stdout(&out).lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["density", "0.5"]));
}

#[test]
fn reversed_mesh_is_still_valid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagnet(dir.path(), &["topo", "--kind", "mesh", "--n", "4", "--reverse"]);
    assert_eq!(out.status.code(), Some(0));
    let t = from_json(&stdout(&out)).unwrap();
    assert!(validate(&t).is_clean());
    assert!(t.edges().iter().all(|(a, b)| a > b));
}

#[test]
fn seeded_random_topology_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.dot", "b.dot"] {
        let out = dagnet(dir.path(), &["topo", "--kind", "random", "--n", "8", "--seed", "42", "--format", "dot", "--out", name]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(fs::read(dir.path().join("a.dot")).unwrap(), fs::read(dir.path().join("b.dot")).unwrap());
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dagnet(dir.path(), &["topo", "--kind", "ring", "--n", "4"]).status.code(), Some(2));
    assert_eq!(dagnet(dir.path(), &["topo", "--kind", "chain", "--n", "0"]).status.code(), Some(2));
    assert_eq!(dagnet(dir.path(), &["topo", "--kind", "chain"]).status.code(), Some(2));
    assert_eq!(dagnet(dir.path(), &["run", "--mock"]).status.code(), Some(2), "missing task");
    assert_eq!(dagnet(dir.path(), &["tokens", "--n", "1", "--t", "1", "--p", "1", "--i", "1", "--s", "1"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagnet(dir.path(), &["topo", "--kind", "chain", "--n", "3", "--out", "missing/dir/t.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(dagnet(dir.path(), &["fit", "nope.csv"]).status.code(), Some(1));
}

#[test]
fn tokens_prints_both_branches() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagnet(dir.path(), &["tokens", "--n", "4", "--m", "3", "--t", "10", "--p", "10", "--i", "10", "--s", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("with memory control:    450"), "{text}");
    assert!(text.contains("without memory control: 1030"), "{text}");
}

#[test]
fn mock_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out_dir in ["one", "two"] {
        let out = dagnet(dir.path(), &["run", "--mock", "--kind", "chain", "--n", "4", "--task", "demo", "--out-dir", out_dir]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["trace.jsonl", "ledger.csv"] {
        assert_eq!(fs::read(dir.path().join("one").join(file)).unwrap(), fs::read(dir.path().join("two").join(file)).unwrap());
    }
    let s = summary(&dir.path().join("one/summary.json"));
    assert_eq!(s, summary(&dir.path().join("two/summary.json")));
    assert_eq!(s["config"]["rounds"], 3);
    assert_eq!(s["status"], "complete");
}

#[test]
fn single_node_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagnet(dir.path(), &["run", "--mock", "--n", "1", "--task", "demo", "--print"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("ref:"));
    let ledger = fs::read_to_string(dir.path().join("dagnet-out/ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 2);
}

#[test]
fn uncontrolled_run_matches_the_quadratic_branch() {
    let dir = tempfile::tempdir().unwrap();
    let task = "write a tiny web server";
    let out = dagnet(
        dir.path(),
        &["run", "--mock", "--kind", "mesh", "--n", "5", "--task", task, "--no-memory-control", "--ignore-approval"],
    );
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&dir.path().join("dagnet-out/summary.json"));
    let role = &default_library("software")[0].role_text;
    let params = TokenParams::new(5, count_tokens(task) as u64, count_tokens(role) as u64, 10, 10, 3).unwrap();
    assert_eq!(s["sink_context_tokens"], closed_form_tokens(&params, false));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"kind":"mesh","n":5,"task":"from file","rounds":2}"#).unwrap();
    let out = dagnet(dir.path(), &["run", "--config", "cfg.json", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir.path().join("dagnet-out/summary.json"));
    assert_eq!(s["topology"]["kind"], "mesh");
    assert_eq!(s["topology"]["metrics"]["node_count"], 3);
    assert_eq!(s["config"]["rounds"], 2);
    assert_eq!(s["config"]["task"], "from file");

    fs::write(dir.path().join("bad.json"), r#"{"kind":"mesh","nodes":5}"#).unwrap();
    assert_eq!(dagnet(dir.path(), &["run", "--config", "bad.json", "--task", "x"]).status.code(), Some(2));
}

#[test]
fn custom_topology_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.json"), r#"{"kind":"custom","n":4,"edges":[[0,1],[0,2],[1,3],[2,3]]}"#).unwrap();
    let out = dagnet(dir.path(), &["run", "--mock", "--topology", "g.json", "--task", "diamond"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(dir.path().join("cyc.json"), r#"{"kind":"custom","n":2,"edges":[[0,1],[1,0]]}"#).unwrap();
    let out = dagnet(dir.path(), &["run", "--mock", "--topology", "cyc.json", "--task", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_backend_exits_3_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagnet(
        dir.path(),
        &["run", "--live", "--endpoint", "http://127.0.0.1:9", "--model", "m", "--max-retries", "0", "--task", "x"],
    );
    assert_eq!(out.status.code(), Some(3));
    let s = summary(&dir.path().join("dagnet-out/summary.json"));
    assert_eq!(s["status"], "aborted");
    assert!(s["final_artifact"].is_null());
}

#[test]
fn sweep_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dagnet(dir.path(), &["sweep", "--scales", "1,2,4", "--kinds", "chain", "--mock"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("dagnet-sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9);
    assert!(dir.path().join("dagnet-sweep/scaling.svg").exists());
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("dagnet-sweep/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["points"].as_array().unwrap().len(), 3);

    let truth = [3.0, 1.5, 0.3, 0.55];
    let mut points = String::from("n,quality\n");
    for k in 0..=6 {
        let x = f64::from(1 << k);
        let q = truth[2] / (1.0 + (-truth[1] * (x.log2() - truth[0])).exp()) + truth[3];
        points.push_str(&format!("{x},{q}\n"));
    }
    fs::write(dir.path().join("points.csv"), points).unwrap();
    let out = dagnet(dir.path(), &["fit", "points.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let fitted: Vec<f64> = stdout(&out).lines().take(4).map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap()).collect();
    for (got, want) in fitted.iter().zip(truth) {
        assert!((got - want).abs() / want < 0.01, "{fitted:?}");
    }
}
