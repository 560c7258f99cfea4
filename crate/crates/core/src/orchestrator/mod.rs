//! The execution loop: plan, recommend, decide, execute, reflect; on a
//! failed verdict roll back and retry without the failed element; on
//! success consult the user if needed, record memory and advance.

mod events;
mod feedback;

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crm::{CandidateSet, CrmConfig, Recommender};
use crate::llm::{ChatProvider, EmbeddingProvider};
use crate::model::{MemoryEntry, Outcome, ReflectionVerdict, ScreenState, Subgoal, Trajectory};
use crate::roles::{update_goal, RoleError, Roles};
use crate::sim::Environment;

pub use events::{normalize_events, Event, EventKind, EventLog, EventSink};
pub use feedback::{
    DeliverError, FeedbackChannel, FeedbackSlot, NoFeedback, ScriptedFeedback, TerminalFeedback,
    NO_ANSWER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputModality {
    #[default]
    ElementList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub max_steps: u32,
    pub max_retrospection_attempts: u32,
    pub feedback_timeout_secs: u64,
    pub input_modality: InputModality,
    pub use_crm: bool,
    pub crm: CrmConfig,
    pub temperature: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_steps: 30,
            max_retrospection_attempts: 3,
            feedback_timeout_secs: 300,
            input_modality: InputModality::ElementList,
            use_crm: true,
            crm: CrmConfig::default(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("max_steps must be at least 1")]
    MaxSteps,
    #[error("max_retrospection_attempts must be at least 1")]
    RetroAttempts,
    #[error("max_candidates must be at least 1")]
    MaxCandidates,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_steps < 1 {
            return Err(ConfigError::MaxSteps);
        }
        if self.max_retrospection_attempts < 1 {
            return Err(ConfigError::RetroAttempts);
        }
        if self.crm.max_candidates < 1 {
            return Err(ConfigError::MaxCandidates);
        }
        Ok(())
    }

    pub fn feedback_timeout(&self) -> Duration {
        Duration::from_secs(self.feedback_timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub outcome: Outcome,
    pub steps_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub trajectory: Trajectory,
    pub memory: Vec<MemoryEntry>,
    #[serde(default)]
    pub events: Vec<Event>,
}

#[derive(Serialize, Deserialize)]
struct ReportRecord {
    record: String,
    task: String,
    outcome: Outcome,
    steps_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    trajectory: Trajectory,
    memory: Vec<MemoryEntry>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log has no run_report record")]
    MissingReport,
}

impl RunReport {
    /// One event per line, then a final `run_report` record.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&crate::model::to_canonical(e));
            out.push('\n');
        }
        out.push_str(&crate::model::to_canonical(&ReportRecord {
            record: "run_report".into(),
            task: self.task.clone(),
            outcome: self.outcome,
            steps_used: self.steps_used,
            reason: self.reason.clone(),
            trajectory: self.trajectory.clone(),
            memory: self.memory.clone(),
        }));
        out.push('\n');
        out
    }

    pub fn from_log(text: &str) -> Result<Self, LogError> {
        let mut events = Vec::new();
        let mut report = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| LogError::Parse {
                line: i + 1,
                message: e.to_string(),
            };
            let value: serde_json::Value = serde_json::from_str(line).map_err(parse_err)?;
            if value.get("record").and_then(|r| r.as_str()) == Some("run_report") {
                report = Some(serde_json::from_value::<ReportRecord>(value).map_err(parse_err)?);
            } else {
                events.push(serde_json::from_value::<Event>(value).map_err(parse_err)?);
            }
        }
        let r = report.ok_or(LogError::MissingReport)?;
        Ok(RunReport {
            task: r.task,
            outcome: r.outcome,
            steps_used: r.steps_used,
            reason: r.reason,
            trajectory: r.trajectory,
            memory: r.memory,
            events,
        })
    }

    /// Report with timestamps zeroed, for byte comparison across runs.
    pub fn normalized(&self) -> RunReport {
        RunReport {
            events: normalize_events(&self.events),
            ..self.clone()
        }
    }
}

/// Appends with the next step index.
pub fn memory_append(memory: &mut Vec<MemoryEntry>, mut entry: MemoryEntry) -> &MemoryEntry {
    entry.step_index = memory.last().map_or(1, |m| m.step_index + 1);
    memory.push(entry);
    memory.last().expect("just pushed")
}

/// What happens to a subgoal after a failed attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetroDecision {
    /// Re-decide with the failed element excluded.
    Retry,
    /// Attempt budget spent: clear exclusions and plan afresh.
    Replan,
    /// The replanned subgoal spent its budget too.
    Abort,
}

/// Per-subgoal retrospection state.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgoalPhase {
    pub goal: Subgoal,
    pub excluded: BTreeSet<String>,
    pub failures: u32,
    pub replanned: bool,
    /// Set by a forced replan; the next step plans before deciding.
    pub needs_plan: bool,
}

impl SubgoalPhase {
    pub fn new(goal: Subgoal) -> Self {
        SubgoalPhase {
            goal,
            excluded: BTreeSet::new(),
            failures: 0,
            replanned: false,
            needs_plan: false,
        }
    }

    /// Records a failure. The exclusion set only grows until a replan
    /// clears it.
    pub fn retrospect(&mut self, failed_target: Option<&str>, max_attempts: u32) -> RetroDecision {
        if let Some(t) = failed_target {
            self.excluded.insert(t.to_string());
        }
        self.failures += 1;
        if self.failures < max_attempts {
            RetroDecision::Retry
        } else if self.replanned {
            RetroDecision::Abort
        } else {
            RetroDecision::Replan
        }
    }

    /// Clears exclusions and the failure count; the subgoal is planned
    /// again on the next step.
    pub fn force_replan(&mut self) {
        self.excluded.clear();
        self.failures = 0;
        self.replanned = true;
        self.needs_plan = true;
    }
}

/// Recomputes candidates for `goal` with `excluded` held out.
pub fn retrospect(
    recommender: &Recommender<'_>,
    goal: &Subgoal,
    state: &ScreenState,
    excluded: &BTreeSet<String>,
) -> CandidateSet {
    recommender.recommend(goal, state, excluded)
}

fn unfiltered_without(state: &ScreenState, excluded: &BTreeSet<String>) -> CandidateSet {
    let mut set = CandidateSet::unfiltered(state);
    set.candidates
        .retain(|c| !excluded.contains(&c.element.element_id));
    set.excluded_ids = excluded.clone();
    set
}

/// Runs tasks against an environment with one chat and one embedding
/// provider. Holds no per-run state.
pub struct Agent<'a> {
    chat: &'a dyn ChatProvider,
    embedder: &'a dyn EmbeddingProvider,
    config: SessionConfig,
}

struct Run<'r> {
    log: EventLog<'r>,
    memory: Vec<MemoryEntry>,
    trajectory: Trajectory,
    steps_used: u32,
}

impl<'a> Agent<'a> {
    pub fn new(
        chat: &'a dyn ChatProvider,
        embedder: &'a dyn EmbeddingProvider,
        config: SessionConfig,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Agent {
            chat,
            embedder,
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    fn roles(&self) -> Roles<'a> {
        Roles::new(self.chat).with_temperature(self.config.temperature)
    }

    fn recommender(&self) -> Recommender<'a> {
        let mut crm = self.config.crm.clone();
        crm.temperature = self.config.temperature;
        Recommender::new(self.chat, self.embedder, crm)
    }

    pub fn candidates(
        &self,
        goal: &Subgoal,
        state: &ScreenState,
        excluded: &BTreeSet<String>,
    ) -> CandidateSet {
        if self.config.use_crm {
            retrospect(&self.recommender(), goal, state, excluded)
        } else {
            unfiltered_without(state, excluded)
        }
    }

    pub fn run_task(
        &self,
        task: &str,
        env: &mut dyn Environment,
        feedback: &dyn FeedbackChannel,
        sink: Option<&dyn EventSink>,
    ) -> RunReport {
        let mut run = Run {
            log: EventLog::new(sink),
            memory: Vec::new(),
            trajectory: Trajectory::new(task),
            steps_used: 0,
        };
        let (outcome, reason) = self.drive(task, env, feedback, &mut run);
        run.trajectory.outcome = outcome;
        run.log.emit(EventKind::Terminated {
            outcome,
            steps_used: run.steps_used,
            reason: reason.clone(),
        });
        RunReport {
            task: task.to_string(),
            outcome,
            steps_used: run.steps_used,
            reason,
            trajectory: run.trajectory,
            memory: run.memory,
            events: run.log.into_events(),
        }
    }

    fn drive(
        &self,
        task: &str,
        env: &mut dyn Environment,
        feedback: &dyn FeedbackChannel,
        run: &mut Run<'_>,
    ) -> (Outcome, Option<String>) {
        let roles = self.roles();
        let max_retro = self.config.max_retrospection_attempts;
        let mut state = env.observe();
        let mut phase: Option<SubgoalPhase> = None;
        let mut pending_answer: Option<String> = None;

        while run.steps_used < self.config.max_steps {
            run.steps_used += 1;
            let step = run.steps_used;
            run.log.emit(EventKind::StepStarted {
                step,
                state: state.clone(),
            });

            // Plan on a fresh step or after a forced replan; retrospection
            // retries keep their subgoal.
            if phase.as_ref().is_none_or(|p| p.needs_plan) {
                let mut goal = match roles.plan_subgoal(task, &state, &run.memory) {
                    Ok(g) => g,
                    Err(e) if e.is_malformed() => {
                        run.log.emit(EventKind::StepAborted {
                            step,
                            reason: format!("planner: {e}"),
                        });
                        continue;
                    }
                    Err(e) => return (Outcome::Aborted, Some(format!("planner: {e}"))),
                };
                if let Some(answer) = pending_answer.take() {
                    goal = update_goal(&goal, &answer).expect("staged answers are non-empty");
                }
                run.log.emit(EventKind::SubgoalPlanned {
                    step,
                    subgoal: goal.clone(),
                });
                match phase.as_mut() {
                    Some(p) => {
                        p.goal = goal;
                        p.needs_plan = false;
                    }
                    None => phase = Some(SubgoalPhase::new(goal)),
                }
            }
            let p = phase.as_mut().expect("planned above");

            let candidates = self.candidates(&p.goal, &state, &p.excluded);
            run.log.emit(EventKind::CandidatesReady {
                step,
                state_id: state.state_id.clone(),
                candidates: candidates.refs(),
                excluded_ids: p.excluded.iter().cloned().collect(),
                fallback: candidates.fallback,
                degraded: candidates.degraded.clone(),
            });
            if candidates.is_empty() {
                run.log.emit(EventKind::StepAborted {
                    step,
                    reason: "no candidate elements remain".into(),
                });
                match p.retrospect(None, max_retro) {
                    RetroDecision::Abort => {
                        return (
                            Outcome::Aborted,
                            Some("no candidate elements remain".into()),
                        )
                    }
                    RetroDecision::Replan => p.force_replan(),
                    RetroDecision::Retry => {}
                }
                continue;
            }

            let (action, description, out_of_set) = match roles.decide_action(&p.goal, &candidates)
            {
                Ok((a, d)) => (a, d, false),
                Err(RoleError::OutOfSetTarget {
                    action,
                    description,
                }) => (action, description, true),
                Err(e) if e.is_malformed() => {
                    run.log.emit(EventKind::StepAborted {
                        step,
                        reason: format!("decision: {e}"),
                    });
                    continue;
                }
                Err(e) => return (Outcome::Aborted, Some(format!("decision: {e}"))),
            };
            run.log.emit(EventKind::ActionDecided {
                step,
                action: action.clone(),
                description: description.clone(),
            });

            let snap = env.snapshot();
            run.log.emit(EventKind::SnapshotTaken {
                step,
                snapshot_id: snap.snapshot_id,
                scene_id: snap.scene_id.clone(),
            });
            let before = state.clone();
            let executed = if out_of_set {
                Err(format!(
                    "target {:?} is not among the candidates",
                    action.target().unwrap_or_default()
                ))
            } else {
                env.apply_action(&action)
                    .map_err(|e| format!("execution failed: {e}"))
            };
            let (verdict, after) = match executed {
                Ok(after) => {
                    run.log.emit(EventKind::ActionExecuted {
                        step,
                        action: action.clone(),
                        before_state_id: before.state_id.clone(),
                        after_state_id: after.state_id.clone(),
                        side_note: env.last_side_note().map(str::to_string),
                    });
                    let side_note = env.last_side_note().map(str::to_string);
                    match roles.reflect(&p.goal, &action, &before, &after, side_note.as_deref()) {
                        Ok(v) => (v, Some(after)),
                        Err(e) => return (Outcome::Aborted, Some(format!("reflection: {e}"))),
                    }
                }
                Err(summary) => (
                    ReflectionVerdict {
                        success: false,
                        summary,
                    },
                    None,
                ),
            };
            run.log.emit(EventKind::Verdict {
                step,
                success: verdict.success,
                summary: verdict.summary.clone(),
            });

            let after = match (verdict.success, after) {
                (true, Some(after)) => after,
                _ => {
                    match env.restore(&snap) {
                        Ok(s) => state = s,
                        Err(e) => return (Outcome::Aborted, Some(format!("rollback: {e}"))),
                    }
                    run.log.emit(EventKind::SnapshotRestored {
                        step,
                        snapshot_id: snap.snapshot_id,
                        state_id: state.state_id.clone(),
                    });
                    let goal = p.goal.clone();
                    let decision = p.retrospect(action.target(), max_retro);
                    if decision == RetroDecision::Replan {
                        p.force_replan();
                    }
                    run.log.emit(EventKind::Retrospection {
                        step,
                        excluded_id: action.target().map(str::to_string),
                        excluded_ids: p.excluded.iter().cloned().collect(),
                        failures: p.failures,
                        decision,
                    });
                    let entry = memory_append(
                        &mut run.memory,
                        MemoryEntry {
                            step_index: 0,
                            subgoal: goal,
                            action,
                            description,
                            success: false,
                            summary: verdict.summary,
                            query: None,
                            user_answer: None,
                        },
                    );
                    run.log.emit(EventKind::MemoryAppended {
                        step,
                        entry: entry.clone(),
                    });
                    if decision == RetroDecision::Abort {
                        return (
                            Outcome::Aborted,
                            Some("retrospection budget exhausted after replanning".into()),
                        );
                    }
                    continue;
                }
            };

            let fx = match roles.interact(&p.goal, &action, &after, &description) {
                Ok(fx) => fx,
                Err(e) => return (Outcome::Aborted, Some(format!("interaction: {e}"))),
            };
            let (query, user_answer) = match fx.query.filter(|_| fx.need_feedback) {
                Some(query) => {
                    feedback.arm(&query);
                    run.log.emit(EventKind::FeedbackRequested {
                        step,
                        query: query.clone(),
                    });
                    let got = feedback
                        .await_answer(self.config.feedback_timeout())
                        .map(|a| a.trim().to_string())
                        .filter(|a| !a.is_empty());
                    let answered = got.is_some();
                    let recorded = got.unwrap_or_else(|| NO_ANSWER.to_string());
                    run.log.emit(EventKind::FeedbackReceived {
                        step,
                        answer: recorded.clone(),
                        timed_out: !answered,
                    });
                    if answered {
                        pending_answer = Some(recorded.clone());
                    }
                    (Some(query), Some(recorded))
                }
                None => (None, None),
            };
            let entry = memory_append(
                &mut run.memory,
                MemoryEntry {
                    step_index: 0,
                    subgoal: p.goal.clone(),
                    action: action.clone(),
                    description,
                    success: true,
                    summary: verdict.summary,
                    query,
                    user_answer,
                },
            );
            run.log.emit(EventKind::MemoryAppended {
                step,
                entry: entry.clone(),
            });
            run.trajectory.push(before, action.clone());
            state = after;
            phase = None;
            if action.is_complete() {
                return (Outcome::Completed, None);
            }
        }
        (Outcome::BudgetExhausted, None)
    }
}
