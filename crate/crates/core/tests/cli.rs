use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use recagent::bench::BenchmarkReport;
use recagent::model::Outcome;
use recagent::orchestrator::RunReport;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn recagent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recagent"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn coffee_run(report: &std::path::Path, extra: &[&str]) -> Output {
    let scenario = fixtures().join("coffee");
    let mut args = vec![
        "run",
        "--task",
        "order a latte from the coffee app",
        "--scenario",
        scenario.to_str().unwrap(),
        "--provider",
        "scripted",
        "--answer",
        "half sugar",
        "--report",
        report.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    recagent(&args)
}

#[test]
fn run_writes_report_and_replay_renders_it() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("out/run1.log");
    let out = coffee_run(&log, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = RunReport::from_log(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(report.outcome, Outcome::Completed);

    // replay runs from a directory without any script and needs none
    let moved = tmp.path().join("elsewhere.log");
    std::fs::rename(&log, &moved).unwrap();
    let out = recagent(&["replay", "--report", moved.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for e in &report.events {
        assert!(text.contains(e.kind.name()));
    }
    assert!(text.contains("answer: half sugar"));
    let stepped = text.lines().filter(|l| l.starts_with('[')).count();
    let terminal = text
        .lines()
        .filter(|l| l.trim_start().starts_with("terminated"))
        .count();
    assert_eq!((stepped, terminal), (report.events.len() - 1, 1));
}

#[test]
fn identical_flags_give_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.log");
    let b = tmp.path().join("b.log");
    coffee_run(&a, &[]);
    coffee_run(&b, &[]);
    let load = |p: &PathBuf| RunReport::from_log(&std::fs::read_to_string(p).unwrap()).unwrap();
    assert_eq!(
        load(&a).normalized().to_log(),
        load(&b).normalized().to_log()
    );
}

#[test]
fn dump_prompts_writes_each_exchange() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = tmp.path().join("prompts.txt");
    let out = coffee_run(
        &tmp.path().join("r.log"),
        &["--dump-prompts", dump.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dump).unwrap();
    for role in ["planner", "decision", "reflection", "interaction", "recall"] {
        assert!(text.contains(&format!("===== {role} [")), "{role}");
    }
    assert!(text.contains("half sugar"));
}

#[test]
fn bench_without_recommendation_offers_more_candidates() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = fixtures().join("complexaction-synth");
    let run = |name: &str, extra: &[&str]| {
        let path = tmp.path().join(name);
        let mut args = vec![
            "bench",
            "--suite",
            suite.to_str().unwrap(),
            "--report",
            path.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let out = recagent(&args);
        assert_eq!(out.status.code(), Some(0));
        assert!(String::from_utf8(out.stdout).unwrap().contains("65.0%"));
        serde_json::from_str::<BenchmarkReport>(&std::fs::read_to_string(path).unwrap()).unwrap()
    };
    let with = run("with.json", &[]);
    let without = run("without.json", &["--no-crm"]);
    assert!(without.candidate_sizes.mean_after > with.candidate_sizes.mean_after);
}

#[test]
fn exit_codes_separate_config_runtime_and_outcome() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = recagent(&["run", "--task", "t", "--scenario", "/nonexistent"]);
    assert_eq!(missing.status.code(), Some(2));
    let usage = recagent(&["run", "--scenario", "x"]);
    assert_eq!(usage.status.code(), Some(2));

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "max_stepz = 3\n").unwrap();
    let out = coffee_run(
        &tmp.path().join("r.log"),
        &["--config", cfg.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = coffee_run(&tmp.path().join("r.log"), &["--max-steps", "1"]);
    assert_eq!(out.status.code(), Some(3));

    let garbage = tmp.path().join("garbage.log");
    std::fs::write(&garbage, "not a log\n").unwrap();
    let out = recagent(&["replay", "--report", garbage.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recommend_prints_candidate_set() {
    let scenario = fixtures().join("shopping-home");
    let out = recagent(&[
        "recommend",
        "--task",
        "open a shopping app",
        "--scenario",
        scenario.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["candidates"].as_array().unwrap().len(), 5);
}

#[test]
fn serve_lists_fixture_scenarios() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_recagent"))
        .args(["serve", "--listen", "127.0.0.1:0", "--fixtures"])
        .arg(fixtures())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();
    let body: serde_json::Value = reqwest::blocking::get(format!("{url}/scenarios"))
        .unwrap()
        .json()
        .unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    let names: Vec<&str> = body
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(names, ["coffee", "decoy", "shopping-home"]);
}
