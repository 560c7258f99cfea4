//! The four model-backed roles plus goal refinement.
//!
//! Each role renders its prompt template, calls the provider through the
//! repair loop and checks the reply against its contract. Roles hold no
//! state between calls.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::crm::CandidateSet;
use crate::llm::{
    complete_with_repair, ChatProvider, ChatRequest, LlmError, ParsedRecord, RepairFailure,
    SchemaTag,
};
use crate::model::{
    ActionCommand, FeedbackExchange, MemoryEntry, ModelError, ReflectionVerdict, ScreenState,
    Subgoal, UiElement,
};
use crate::prompts::{self, element_line, render, PromptPair};

pub const REFLECTION_UNPARSEABLE: &str = "reflection unparseable";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoleError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("decision {action} targets an element outside the candidates")]
    OutOfSetTarget {
        action: ActionCommand,
        description: String,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl RoleError {
    pub fn is_malformed(&self) -> bool {
        matches!(self, RoleError::Llm(LlmError::MalformedOutput { .. }))
    }
}

fn request(pair: &PromptPair, slots: &[(&str, &str)], temperature: f64) -> ChatRequest {
    let mut req = ChatRequest::new(pair.role, pair.system.trim_end(), render(pair.user, slots));
    req.temperature = temperature;
    req
}

/// Memory log as the planner sees it, one line per entry.
pub fn render_memory(memory: &[MemoryEntry]) -> String {
    if memory.is_empty() {
        return "(none)".to_string();
    }
    memory
        .iter()
        .map(|m| {
            let mut line = format!(
                "{}. subgoal: {} | action: {} | {} | {}: {}",
                m.step_index,
                m.subgoal.text,
                m.action,
                m.description,
                if m.success { "success" } else { "failed" },
                m.summary
            );
            if let Some(q) = &m.query {
                line.push_str(&format!(" | asked: {q}"));
            }
            if let Some(u) = &m.user_answer {
                line.push_str(&format!(" | user answered: {u}"));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Element-level difference between two screens. Identical screens give
/// `(no change)`.
pub fn state_diff(before: &ScreenState, after: &ScreenState) -> String {
    let old: BTreeMap<&str, &UiElement> = before
        .elements
        .iter()
        .map(|e| (e.element_id.as_str(), e))
        .collect();
    let new: BTreeMap<&str, &UiElement> = after
        .elements
        .iter()
        .map(|e| (e.element_id.as_str(), e))
        .collect();
    let mut lines = Vec::new();
    for (id, e) in &old {
        match new.get(id) {
            None => lines.push(format!("- {}", element_line(e))),
            Some(n) if n != e => lines.push(format!("~ {}", element_line(n))),
            Some(_) => {}
        }
    }
    for (id, e) in &new {
        if !old.contains_key(id) {
            lines.push(format!("+ {}", element_line(e)));
        }
    }
    if lines.is_empty() {
        "(no change)".to_string()
    } else {
        lines.join("\n")
    }
}

#[derive(Clone, Copy)]
pub struct Roles<'a> {
    chat: &'a dyn ChatProvider,
    temperature: f64,
}

impl<'a> Roles<'a> {
    pub fn new(chat: &'a dyn ChatProvider) -> Self {
        Roles {
            chat,
            temperature: 0.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn plan_subgoal(
        &self,
        task: &str,
        state: &ScreenState,
        memory: &[MemoryEntry],
    ) -> Result<Subgoal, RoleError> {
        if task.trim().is_empty() {
            return Err(RoleError::Precondition("task is empty".into()));
        }
        let screen = prompts::render_screen(state);
        let history = render_memory(memory);
        let req = request(
            &prompts::PLANNER,
            &[
                ("task", task),
                ("state_id", &state.state_id),
                ("screen", &screen),
                ("memory", &history),
            ],
            self.temperature,
        );
        complete_with_repair(self.chat, &req, SchemaTag::Plan, |rec| match rec {
            ParsedRecord::Plan(g) => Ok(g),
            other => Err(format!("expected a plan, got {other:?}")),
        })
        .map_err(|e| e.into_llm_error(SchemaTag::Plan).into())
    }

    /// Picks one action. Element-directed actions must target a member of
    /// `candidates`; an out-of-set target is sent back for repair and, if
    /// the model insists, reported as [`RoleError::OutOfSetTarget`].
    pub fn decide_action(
        &self,
        goal: &Subgoal,
        candidates: &CandidateSet,
    ) -> Result<(ActionCommand, String), RoleError> {
        if candidates.is_empty() {
            return Err(RoleError::Precondition("candidate set is empty".into()));
        }
        let note = if candidates.fallback {
            format!(
                "no recommendation matched; all {} remaining elements",
                candidates.len()
            )
        } else {
            format!("{} recommended", candidates.len())
        };
        let listing = prompts::render_elements(candidates.elements());
        let req = request(
            &prompts::DECISION,
            &[
                ("subgoal", &goal.text),
                ("state_id", &candidates.state_id),
                ("candidate_note", &note),
                ("candidates", &listing),
            ],
            self.temperature,
        );
        let outcome = complete_with_repair(self.chat, &req, SchemaTag::Decision, |rec| match rec {
            ParsedRecord::Decision {
                action,
                description,
            } => {
                if description.trim().is_empty() {
                    return Err(DecisionRejection::Other("description is empty".into()));
                }
                match action.target() {
                    Some(t) if !candidates.contains(t) => {
                        Err(DecisionRejection::OutOfSet(action, description))
                    }
                    _ => Ok((action, description)),
                }
            }
            other => Err(DecisionRejection::Other(format!(
                "expected a decision, got {other:?}"
            ))),
        });
        match outcome {
            Ok(v) => Ok(v),
            Err(RepairFailure::Rejected {
                rejection: DecisionRejection::OutOfSet(action, description),
                ..
            }) => Err(RoleError::OutOfSetTarget {
                action,
                description,
            }),
            Err(e) => Err(e.into_llm_error(SchemaTag::Decision).into()),
        }
    }

    /// Judges a transition. Unparseable replies yield a failed verdict so
    /// the step goes through retrospection instead of being trusted.
    pub fn reflect(
        &self,
        goal: &Subgoal,
        action: &ActionCommand,
        before: &ScreenState,
        after: &ScreenState,
        side_note: Option<&str>,
    ) -> Result<ReflectionVerdict, RoleError> {
        let diff = state_diff(before, after);
        let action_text = action.to_string();
        let req = request(
            &prompts::REFLECTION,
            &[
                ("subgoal", &goal.text),
                ("action", &action_text),
                ("before_id", &before.state_id),
                ("after_id", &after.state_id),
                ("side_note", side_note.unwrap_or("(none)")),
                ("diff", &diff),
            ],
            self.temperature,
        );
        let out = complete_with_repair(self.chat, &req, SchemaTag::Verdict, |rec| match rec {
            ParsedRecord::Verdict(v) => Ok(v),
            other => Err(format!("expected a verdict, got {other:?}")),
        });
        match out {
            Ok(v) => Ok(v),
            Err(RepairFailure::Provider(e)) => Err(e.into()),
            Err(e) => {
                log::warn!(
                    "reflection fell back to failure: {}",
                    e.into_llm_error(SchemaTag::Verdict)
                );
                Ok(ReflectionVerdict {
                    success: false,
                    summary: REFLECTION_UNPARSEABLE.to_string(),
                })
            }
        }
    }

    /// Asks whether the user must be consulted. Unparseable replies mean
    /// no question, so a broken model never blocks the loop.
    pub fn interact(
        &self,
        goal: &Subgoal,
        action: &ActionCommand,
        after: &ScreenState,
        description: &str,
    ) -> Result<FeedbackExchange, RoleError> {
        let screen = prompts::render_screen(after);
        let action_text = action.to_string();
        let req = request(
            &prompts::INTERACTION,
            &[
                ("subgoal", &goal.text),
                ("action", &action_text),
                ("description", description),
                ("state_id", &after.state_id),
                ("screen", &screen),
            ],
            self.temperature,
        );
        let out = complete_with_repair(self.chat, &req, SchemaTag::Feedback, |rec| match rec {
            ParsedRecord::Feedback(f) => Ok(FeedbackExchange { answer: None, ..f }),
            other => Err(format!("expected a feedback record, got {other:?}")),
        });
        match out {
            Ok(f) => Ok(f),
            Err(RepairFailure::Provider(e)) => Err(e.into()),
            Err(e) => {
                log::warn!(
                    "interaction fell back to no question: {}",
                    e.into_llm_error(SchemaTag::Feedback)
                );
                Ok(FeedbackExchange::none())
            }
        }
    }
}

enum DecisionRejection {
    OutOfSet(ActionCommand, String),
    Other(String),
}

impl std::fmt::Display for DecisionRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecisionRejection::OutOfSet(a, _) => write!(
                f,
                "target {:?} is not one of the candidate elements; choose a listed element id",
                a.target().unwrap_or_default()
            ),
            DecisionRejection::Other(s) => f.write_str(s),
        }
    }
}

/// Folds a user answer into the next subgoal. Pure: no model call.
pub fn update_goal(next_goal: &Subgoal, answer: &str) -> Result<Subgoal, ModelError> {
    let answer = answer.trim();
    if answer.is_empty() {
        return Err(ModelError::EmptyAnswer);
    }
    if next_goal.feedback_applied.as_deref() == Some(answer) {
        return Ok(next_goal.clone());
    }
    Ok(Subgoal {
        text: format!("{} (user preference: {answer})", next_goal.text),
        feedback_applied: Some(answer.to_string()),
    })
}
