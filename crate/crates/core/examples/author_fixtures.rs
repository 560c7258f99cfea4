//! Regenerates the scripted fixtures under `fixtures/`.
//!
//!     cargo run -p recagent --example author_fixtures [OUT_DIR]
//!
//! Each bundle's `script.jsonl` is recorded by running the demo policy
//! through the real prompt assembly, so the scripts stay in sync with the
//! prompt templates.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use recagent::bench::{self, SCRIPT_FILE};
use recagent::crm::{CrmConfig, Recommender};
use recagent::demo;
use recagent::llm::{HashEmbedder, RecordingProvider};
use recagent::model::{Outcome, Subgoal};
use recagent::orchestrator::SessionConfig;
use recagent::sim::Environment;

fn fresh(dir: &Path) {
    if dir.exists() {
        fs::remove_dir_all(dir).expect("remove old bundle");
    }
}

fn main() {
    let out: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    fs::create_dir_all(&out).expect("create output dir");

    let dir = out.join("coffee");
    fresh(&dir);
    let (sc, policy) = demo::coffee();
    for answers in [&["half sugar"][..], &[]] {
        let r = demo::record_bundle(
            &dir,
            &sc,
            policy.clone(),
            demo::COFFEE_TASK,
            answers,
            SessionConfig::default(),
        )
        .expect("record coffee");
        assert_eq!(r.outcome, Outcome::Completed);
    }

    let dir = out.join("decoy");
    fresh(&dir);
    let (sc, policy) = demo::decoy();
    let cfg = SessionConfig {
        max_steps: 10,
        ..SessionConfig::default()
    };
    let r =
        demo::record_bundle(&dir, &sc, policy, demo::DECOY_TASK, &[], cfg).expect("record decoy");
    assert_eq!(r.outcome, Outcome::Completed);

    let dir = out.join("shopping-home");
    fresh(&dir);
    let (sc, policy) = demo::shopping_home();
    sc.save_bundle(&dir).expect("save shopping-home");
    let recorder = RecordingProvider::new(policy);
    let embed = HashEmbedder::default();
    let set = Recommender::new(&recorder, &embed, CrmConfig::default()).recommend(
        &Subgoal::new(demo::SHOPPING_GOAL).unwrap(),
        &sc.observe(),
        &BTreeSet::new(),
    );
    assert_eq!(set.len(), 5);
    fs::write(dir.join(SCRIPT_FILE), recorder.to_jsonl()).expect("write script");

    let dir = out.join(demo::SUITE_NAME);
    fresh(&dir);
    fs::create_dir_all(&dir).expect("create suite dir");
    let (cases, policy) = demo::complexaction_suite();
    let recorder = RecordingProvider::new(policy);
    let crm = CrmConfig::default();
    for case in &cases {
        bench::save_case(&dir, case).expect("save case");
    }
    let with = bench::evaluate_suite(&recorder, &embed, &crm, &cases, true);
    let without = bench::evaluate_suite(&recorder, &embed, &crm, &cases, false);
    fs::write(dir.join(SCRIPT_FILE), recorder.to_jsonl()).expect("write script");

    let shown = out.canonicalize().unwrap_or(out);
    println!("fixtures written to {}", shown.display());
    println!(
        "suite: {} with recommendation, {} without",
        with.success_rate_text, without.success_rate_text
    );
}
