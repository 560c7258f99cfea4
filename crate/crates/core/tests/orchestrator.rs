use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use recagent::demo::{self, Policy};
use recagent::llm::{ChatProvider, ChatRequest, HashEmbedder, LlmError, RoleTag};
use recagent::model::{ActionCommand, ActionType, MemoryEntry, Outcome, Subgoal};
use recagent::orchestrator::{
    memory_append, Agent, EventKind, NoFeedback, RetroDecision, RunReport, ScriptedFeedback,
    SessionConfig, SubgoalPhase, NO_ANSWER,
};
use recagent::sim::{Scenario, ScenarioMeta, SceneFixture, TransitionRule};

/// Wraps a provider and counts calls per role.
struct Counting<P> {
    inner: P,
    calls: Mutex<Vec<RoleTag>>,
}

impl<P> Counting<P> {
    fn new(inner: P) -> Self {
        Counting {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }
    fn count(&self, role: RoleTag) -> usize {
        self.calls
            .lock()
            .unwrap()
            .iter()
            .filter(|r| **r == role)
            .count()
    }
}

impl<P: ChatProvider> ChatProvider for Counting<P> {
    fn complete(&self, r: &ChatRequest) -> Result<String, LlmError> {
        self.calls.lock().unwrap().push(r.role_tag);
        self.inner.complete(r)
    }
}

fn run(
    scenario: &mut Scenario,
    chat: &dyn ChatProvider,
    task: &str,
    config: SessionConfig,
    answers: &[&str],
) -> RunReport {
    let embed = HashEmbedder::default();
    let agent = Agent::new(chat, &embed, config).unwrap();
    let fb = ScriptedFeedback::new(answers.iter().copied());
    agent.run_task(task, scenario, &fb, None)
}

fn names(report: &RunReport) -> Vec<&'static str> {
    report.events.iter().map(|e| e.kind.name()).collect()
}

#[test]
fn coffee_happy_path_with_feedback() {
    let (mut sc, policy) = demo::coffee();
    let r = run(
        &mut sc,
        &policy,
        demo::COFFEE_TASK,
        SessionConfig::default(),
        &["half sugar"],
    );
    assert_eq!(r.outcome, Outcome::Completed, "{:?}", r.reason);
    assert_eq!(r.memory.len(), 3);
    assert_eq!(r.trajectory.length, 3);
    assert_eq!(r.memory[1].query.as_deref(), Some(demo::SWEETNESS_QUERY));
    assert_eq!(r.memory[1].user_answer.as_deref(), Some("half sugar"));
    assert!(r.memory[2].subgoal.text.contains("half sugar"));
    assert_eq!(
        r.memory[2].subgoal.feedback_applied.as_deref(),
        Some("half sugar")
    );
    assert!(r.memory[2].action.is_complete());
    let idx: Vec<u32> = r.memory.iter().map(|m| m.step_index).collect();
    assert_eq!(idx, [1, 2, 3]);
}

#[test]
fn feedback_timeout_proceeds_unrefined() {
    let (mut sc, policy) = demo::coffee();
    let embed = HashEmbedder::default();
    let agent = Agent::new(&policy, &embed, SessionConfig::default()).unwrap();
    let r = agent.run_task(demo::COFFEE_TASK, &mut sc, &NoFeedback, None);
    assert_eq!(r.outcome, Outcome::Completed);
    assert_eq!(r.memory[1].user_answer.as_deref(), Some(NO_ANSWER));
    assert_eq!(r.memory[2].subgoal.feedback_applied, None);
    assert!(r.events.iter().any(|e| matches!(
        e.kind,
        EventKind::FeedbackReceived {
            timed_out: true,
            ..
        }
    )));
}

#[test]
fn update_goal_adds_no_model_call() {
    let (mut sc, policy) = demo::coffee();
    let with = Counting::new(policy.clone());
    run(
        &mut sc,
        &with,
        demo::COFFEE_TASK,
        SessionConfig::default(),
        &["half sugar"],
    );
    let (mut sc, _) = demo::coffee();
    let without = Counting::new(policy);
    let embed = HashEmbedder::default();
    Agent::new(&without, &embed, SessionConfig::default())
        .unwrap()
        .run_task(demo::COFFEE_TASK, &mut sc, &NoFeedback, None);
    assert_eq!(
        with.calls.lock().unwrap().len(),
        without.calls.lock().unwrap().len()
    );
}

#[test]
fn decoy_is_excluded_and_task_completes() {
    let (mut sc, policy) = demo::decoy();
    let cfg = SessionConfig {
        max_steps: 10,
        ..SessionConfig::default()
    };
    let r = run(&mut sc, &policy, demo::DECOY_TASK, cfg, &[]);
    assert_eq!(r.outcome, Outcome::Completed, "{:?}", r.reason);
    assert_eq!(r.memory.len(), 4);
    assert!(!r.memory[0].success);
    assert_eq!(
        r.memory[0].summary,
        "The search bar was clicked, but no keyboard appeared"
    );
    assert_eq!(r.trajectory.length, 3);
    let n = names(&r);
    let restore = n.iter().position(|e| *e == "snapshot_restored").unwrap();
    assert_eq!(n[restore - 1], "verdict");
}

#[test]
fn budget_of_one() {
    let (mut sc, policy) = demo::coffee();
    let cfg = SessionConfig {
        max_steps: 1,
        ..SessionConfig::default()
    };
    let r = run(&mut sc, &policy, demo::COFFEE_TASK, cfg, &["half sugar"]);
    assert_eq!(r.outcome, Outcome::BudgetExhausted);
    assert_eq!(r.memory.len(), 1);
    assert_eq!(r.steps_used, 1);
}

/// One screen whose buttons all do nothing.
fn dead_end(buttons: usize) -> Scenario {
    let els = (0..buttons)
        .map(|i| {
            demo::element(
                &format!("el_go_{i}"),
                "button",
                &format!("Go {i}"),
                "",
                i as i32,
            )
        })
        .collect();
    let state = recagent::model::ScreenState::new("stuck", els).unwrap();
    Scenario::from_parts(
        ScenarioMeta {
            name: "dead-end".into(),
            initial_scene: "stuck".into(),
            canvas: Default::default(),
        },
        vec![SceneFixture::new("stuck", state)],
    )
    .unwrap()
}

fn dead_end_policy(buttons: usize) -> Policy {
    let mut p = Policy::default().plan("stuck", "go somewhere");
    for i in 0..buttons {
        p = p.decide(
            "stuck",
            ActionCommand::click(format!("el_go_{i}")),
            "Click go",
        );
    }
    p.recall((0..buttons).map(|i| format!("el_go_{i}")))
}

#[test]
fn escalation_replans_once_then_aborts() {
    let mut sc = dead_end(8);
    let chat = Counting::new(dead_end_policy(8));
    let r = run(&mut sc, &chat, "go", SessionConfig::default(), &[]);
    assert_eq!(r.outcome, Outcome::Aborted);
    assert_eq!(chat.count(RoleTag::Planner), 2);
    assert_eq!(r.memory.len(), 6);
    let decisions: Vec<RetroDecision> = r
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Retrospection { decision, .. } => Some(*decision),
            _ => None,
        })
        .collect();
    use RetroDecision::*;
    assert_eq!(decisions, [Retry, Retry, Replan, Retry, Retry, Abort]);
}

#[test]
fn never_completing_exhausts_exact_budget() {
    // a scene that cycles between two screens forever
    let a = recagent::model::ScreenState::new(
        "a",
        vec![demo::element("el_next", "button", "Next", "", 0)],
    )
    .unwrap();
    let b = recagent::model::ScreenState::new(
        "b",
        vec![demo::element("el_next", "button", "Next", "", 0)],
    )
    .unwrap();
    let mut sa = SceneFixture::new("a", a);
    sa.transitions
        .push(TransitionRule::on(ActionType::Click, Some("el_next"), "b"));
    let mut sb = SceneFixture::new("b", b);
    sb.transitions
        .push(TransitionRule::on(ActionType::Click, Some("el_next"), "a"));
    let mut sc = Scenario::from_parts(
        ScenarioMeta {
            name: "loop".into(),
            initial_scene: "a".into(),
            canvas: Default::default(),
        },
        vec![sa, sb],
    )
    .unwrap();
    let policy = Policy::default()
        .plan("a", "press next")
        .plan("b", "press next")
        .decide("a", ActionCommand::click("el_next"), "Click next")
        .decide("b", ActionCommand::click("el_next"), "Click next");
    let r = run(
        &mut sc,
        &policy,
        "loop forever",
        SessionConfig::default(),
        &[],
    );
    assert_eq!(r.outcome, Outcome::BudgetExhausted);
    assert_eq!(r.steps_used, 30);
    assert_eq!(r.memory.len(), 30);
}

#[test]
fn log_round_trip_and_replay_determinism() {
    let (mut sc, policy) = demo::coffee();
    let a = run(
        &mut sc,
        &policy,
        demo::COFFEE_TASK,
        SessionConfig::default(),
        &["half sugar"],
    );
    let (mut sc, policy) = demo::coffee();
    let b = run(
        &mut sc,
        &policy,
        demo::COFFEE_TASK,
        SessionConfig::default(),
        &["half sugar"],
    );
    assert_eq!(a.normalized().to_log(), b.normalized().to_log());
    let back = RunReport::from_log(&a.to_log()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn phase_exclusions_grow_until_replan() {
    let mut p = SubgoalPhase::new(Subgoal::new("g").unwrap());
    assert_eq!(p.retrospect(Some("el_5"), 3), RetroDecision::Retry);
    assert_eq!(p.retrospect(Some("el_6"), 3), RetroDecision::Retry);
    assert_eq!(
        p.excluded,
        BTreeSet::from(["el_5".to_string(), "el_6".to_string()])
    );
    assert_eq!(p.retrospect(None, 3), RetroDecision::Replan);
    p.force_replan();
    assert!(p.excluded.is_empty());
    assert!(p.needs_plan);
}

#[test]
fn memory_append_numbers_entries() {
    let entry = MemoryEntry {
        step_index: 99,
        subgoal: Subgoal::new("g").unwrap(),
        action: ActionCommand::complete(),
        description: "d".into(),
        success: true,
        summary: "s".into(),
        query: None,
        user_answer: None,
    };
    let mut m = Vec::new();
    assert_eq!(memory_append(&mut m, entry.clone()).step_index, 1);
    assert_eq!(memory_append(&mut m, entry).step_index, 2);
}

#[test]
fn provider_outage_aborts_run() {
    let (mut sc, _) = demo::coffee();
    let down = recagent::llm::FnProvider(|_: &ChatRequest| {
        Err(LlmError::ProviderUnavailable("offline".into()))
    });
    let r = run(&mut sc, &down, "t", SessionConfig::default(), &[]);
    assert_eq!(r.outcome, Outcome::Aborted);
    assert!(r.reason.unwrap().contains("offline"));
    assert!(matches!(
        r.events.last().unwrap().kind,
        EventKind::Terminated { .. }
    ));
}

#[test]
fn malformed_planner_aborts_step_only() {
    let (mut sc, policy) = demo::coffee();
    let calls = AtomicUsize::new(0);
    let flaky = recagent::llm::FnProvider(move |r: &ChatRequest| {
        if r.role_tag == RoleTag::Planner && calls.fetch_add(1, Ordering::SeqCst) < 2 {
            return Ok("not json".into());
        }
        policy.complete(r)
    });
    let r = run(
        &mut sc,
        &flaky,
        demo::COFFEE_TASK,
        SessionConfig::default(),
        &["half sugar"],
    );
    assert_eq!(r.outcome, Outcome::Completed);
    assert_eq!(r.steps_used, 4);
    assert_eq!(names(&r)[1], "step_aborted");
}

#[test]
fn no_crm_offers_every_element() {
    let (mut sc, policy) = demo::coffee();
    let cfg = SessionConfig {
        use_crm: false,
        ..SessionConfig::default()
    };
    let r = run(&mut sc, &policy, demo::COFFEE_TASK, cfg, &["half sugar"]);
    assert_eq!(r.outcome, Outcome::Completed);
    assert_eq!(r.events[2].kind.candidate_ids().unwrap().len(), 5);
}
