mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use common::fixtures;
use jsonschema::Validator;
use recagent::crm::{CrmConfig, Recommender};
use recagent::demo::{self, Policy};
use recagent::llm::{FnProvider, HashEmbedder, LlmError, ScriptedProvider};
use recagent::model::{to_canonical, ActionCommand, MemoryEntry, Subgoal};
use recagent::orchestrator::{Agent, RunReport, ScriptedFeedback, SessionConfig};
use recagent::sim::{Environment, Scenario};
use serde_json::{json, Value};

fn schema() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/recagent.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn validator(def: &str) -> Validator {
    let mut s = schema();
    s["$ref"] = json!(format!("#/$defs/{def}"));
    jsonschema::validator_for(&s).unwrap_or_else(|e| panic!("{def}: {e}"))
}

#[track_caller]
fn assert_valid(v: &Validator, what: &str, instance: &Value) {
    let errors: Vec<String> = v
        .iter_errors(instance)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{what}: {}", errors.join("; "));
}

fn files(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p, suffix));
        } else if p.to_str().unwrap().ends_with(suffix) {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn fixture_files_conform() {
    let root = fixtures();
    let meta = validator("ScenarioMeta");
    let scene = validator("SceneFixture");
    let case = validator("BenchmarkCase");
    let entry = validator("ScriptEntry");
    let metas = files(&root, "scenario.meta");
    assert_eq!(metas.len(), 3);
    for m in &metas {
        assert_valid(&meta, &m.display().to_string(), &read(m));
        for s in files(&m.parent().unwrap().join("scenes"), ".json") {
            assert_valid(&scene, &s.display().to_string(), &read(&s));
        }
    }
    let cases = files(&root, ".case.json");
    assert_eq!(cases.len(), 20);
    for c in &cases {
        assert_valid(&case, &c.display().to_string(), &read(c));
    }
    for script in files(&root, "script.jsonl") {
        for (i, line) in std::fs::read_to_string(&script)
            .unwrap()
            .lines()
            .enumerate()
        {
            let v: Value = serde_json::from_str(line).unwrap();
            assert_valid(&entry, &format!("{}:{}", script.display(), i + 1), &v);
        }
    }
}

fn sample_runs() -> Vec<RunReport> {
    let embed = HashEmbedder::default();
    let mut out = Vec::new();
    let mut go = |sc: &mut Scenario,
                  chat: &dyn recagent::llm::ChatProvider,
                  task: &str,
                  config: SessionConfig,
                  fb: ScriptedFeedback| {
        let agent = Agent::new(chat, &embed, config).unwrap();
        out.push(agent.run_task(task, sc, &fb, None));
    };
    let coffee = ScriptedProvider::load(fixtures().join("coffee/script.jsonl")).unwrap();
    let mut sc = Scenario::load(fixtures().join("coffee")).unwrap();
    go(
        &mut sc,
        &coffee,
        demo::COFFEE_TASK,
        SessionConfig::default(),
        ScriptedFeedback::new(["half sugar"]),
    );
    let (mut sc, policy) = demo::coffee();
    go(
        &mut sc,
        &policy,
        demo::COFFEE_TASK,
        SessionConfig::default(),
        ScriptedFeedback::with_timeouts(vec![None]),
    );
    let (mut sc, policy) = demo::decoy();
    go(
        &mut sc,
        &policy,
        demo::DECOY_TASK,
        SessionConfig {
            use_crm: false,
            ..Default::default()
        },
        ScriptedFeedback::default(),
    );
    // all buttons dead: retrospection runs out and the run aborts
    let (mut sc, _) = demo::shopping_home();
    let mut stuck = Policy::default().plan("launcher", "open a shopping app");
    for id in demo::SHOPPING_APPS {
        stuck = stuck.decide("launcher", ActionCommand::click(id), "Click the app");
    }
    go(
        &mut sc,
        &stuck,
        "shop",
        SessionConfig::default(),
        ScriptedFeedback::default(),
    );
    let down = FnProvider(|_: &recagent::llm::ChatRequest| {
        Err(LlmError::ProviderUnavailable("down".into()))
    });
    let (mut sc, _) = demo::coffee();
    go(
        &mut sc,
        &down,
        "anything",
        SessionConfig::default(),
        ScriptedFeedback::default(),
    );
    let babble = FnProvider(|_: &recagent::llm::ChatRequest| Ok("no idea".to_string()));
    let (mut sc, _) = demo::coffee();
    go(
        &mut sc,
        &babble,
        "anything",
        SessionConfig {
            max_steps: 2,
            ..Default::default()
        },
        ScriptedFeedback::default(),
    );
    out
}

#[test]
fn run_logs_and_reports_conform() {
    let line = validator("RunLogLine");
    let report = validator("RunReport");
    let mut names = BTreeSet::new();
    for r in sample_runs() {
        for (i, l) in r.to_log().lines().enumerate() {
            let v: Value = serde_json::from_str(l).unwrap();
            if let Some(name) = v["event"].as_str() {
                names.insert(name.to_string());
            }
            assert_valid(&line, &format!("{} line {}", r.task, i + 1), &v);
        }
        let v: Value = serde_json::from_str(&to_canonical(&r)).unwrap();
        assert_valid(&report, &r.task, &v);
    }
    // every event kind appears in the sample
    let declared: BTreeSet<String> = schema()["$defs"]["events"]
        .as_object()
        .unwrap()
        .keys()
        .cloned()
        .collect();
    assert_eq!(names, declared);
}

#[test]
fn candidate_sets_and_configs_conform() {
    let set = validator("CandidateSet");
    let (sc, policy) = demo::shopping_home();
    let embed = HashEmbedder::default();
    let goal = Subgoal::new(demo::SHOPPING_GOAL).unwrap();
    let rec = Recommender::new(&policy, &embed, CrmConfig::default());
    let excluded = BTreeSet::from(["el_jd".to_string()]);
    let normal = rec.recommend(&goal, &sc.observe(), &excluded);
    assert!(!normal.fallback);
    let down = FnProvider(|_: &recagent::llm::ChatRequest| {
        Err(LlmError::ProviderUnavailable("down".into()))
    });
    let mut cfg = CrmConfig::default();
    cfg.pathways.semantic = false;
    let odd = Recommender::new(&down, &embed, cfg).recommend(
        &Subgoal::new("zzqx").unwrap(),
        &sc.observe(),
        &excluded,
    );
    assert!(odd.fallback && !odd.degraded.is_empty());
    for s in [normal, odd] {
        assert_valid(&set, "candidate set", &serde_json::to_value(&s).unwrap());
    }

    let config = validator("SessionConfig");
    assert_valid(
        &config,
        "default",
        &serde_json::to_value(SessionConfig::default()).unwrap(),
    );
    for partial in [json!({}), json!({"max_steps": 5, "use_crm": false})] {
        assert_valid(&config, "partial", &partial);
        serde_json::from_value::<SessionConfig>(partial).unwrap();
    }
}

#[test]
fn memory_entry_has_seven_payload_fields() {
    let s = schema();
    let props: BTreeSet<&str> = s["$defs"]["MemoryEntry"]["properties"]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .filter(|k| *k != "step_index")
        .collect();
    assert_eq!(props.len(), 7);
    assert_eq!(props, MemoryEntry::PAYLOAD_FIELDS.into_iter().collect());
}

#[test]
fn schema_rejects_drift() {
    let el = validator("UiElement");
    let good =
        json!({"element_id": "el_a", "bounds": [0, 0, 1, 1], "clickable": true, "visible": true});
    assert!(el.is_valid(&good));
    let mut extra = good.clone();
    extra["label"] = json!("x");
    assert!(!el.is_valid(&extra));
    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("element_id");
    assert!(!el.is_valid(&missing));
    assert!(!el.is_valid(
        &json!({"element_id": "el_a", "bounds": [0, 0, 1], "clickable": true, "visible": true})
    ));

    let action = validator("ActionCommand");
    assert!(action.is_valid(&json!({"action_type": "complete"})));
    assert!(!action.is_valid(&json!({"action_type": "swipe"})));

    let event = validator("Event");
    let ok = json!({"seq": 1, "at_ms": 0, "event": "verdict", "step": 1, "success": true, "summary": "ok"});
    assert!(event.is_valid(&ok));
    assert!(!event
        .is_valid(&json!({"seq": 1, "at_ms": 0, "event": "verdict", "step": 1, "success": true})));
    assert!(!event.is_valid(&json!({"seq": 1, "at_ms": 0, "event": "nap", "step": 1})));
}

#[test]
fn every_definition_compiles() {
    let s = schema();
    let defs: BTreeMap<String, Value> = serde_json::from_value(s["$defs"].clone()).unwrap();
    for name in defs.keys().filter(|k| *k != "events") {
        validator(name);
    }
}
