use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::RetroDecision;
use crate::crm::{CandidateRef, Pathway};
use crate::model::{ActionCommand, MemoryEntry, Outcome, ScreenState, Subgoal};

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    StepStarted {
        step: u32,
        state: ScreenState,
    },
    SubgoalPlanned {
        step: u32,
        subgoal: Subgoal,
    },
    CandidatesReady {
        step: u32,
        state_id: String,
        candidates: Vec<CandidateRef>,
        excluded_ids: Vec<String>,
        fallback: bool,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        degraded: Vec<Pathway>,
    },
    ActionDecided {
        step: u32,
        action: ActionCommand,
        description: String,
    },
    SnapshotTaken {
        step: u32,
        snapshot_id: u64,
        scene_id: String,
    },
    ActionExecuted {
        step: u32,
        action: ActionCommand,
        before_state_id: String,
        after_state_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side_note: Option<String>,
    },
    Verdict {
        step: u32,
        success: bool,
        summary: String,
    },
    SnapshotRestored {
        step: u32,
        snapshot_id: u64,
        state_id: String,
    },
    Retrospection {
        step: u32,
        excluded_id: Option<String>,
        excluded_ids: Vec<String>,
        failures: u32,
        decision: RetroDecision,
    },
    FeedbackRequested {
        step: u32,
        query: String,
    },
    FeedbackReceived {
        step: u32,
        answer: String,
        timed_out: bool,
    },
    MemoryAppended {
        step: u32,
        entry: MemoryEntry,
    },
    StepAborted {
        step: u32,
        reason: String,
    },
    Terminated {
        outcome: Outcome,
        steps_used: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::StepStarted { .. } => "step_started",
            EventKind::SubgoalPlanned { .. } => "subgoal_planned",
            EventKind::CandidatesReady { .. } => "candidates_ready",
            EventKind::ActionDecided { .. } => "action_decided",
            EventKind::SnapshotTaken { .. } => "snapshot_taken",
            EventKind::ActionExecuted { .. } => "action_executed",
            EventKind::Verdict { .. } => "verdict",
            EventKind::SnapshotRestored { .. } => "snapshot_restored",
            EventKind::Retrospection { .. } => "retrospection",
            EventKind::FeedbackRequested { .. } => "feedback_requested",
            EventKind::FeedbackReceived { .. } => "feedback_received",
            EventKind::MemoryAppended { .. } => "memory_appended",
            EventKind::StepAborted { .. } => "step_aborted",
            EventKind::Terminated { .. } => "terminated",
        }
    }

    /// Candidate ids of a `candidates_ready` event, in rank order.
    pub fn candidate_ids(&self) -> Option<Vec<&str>> {
        match self {
            EventKind::CandidatesReady { candidates, .. } => {
                Some(candidates.iter().map(|c| c.element_id.as_str()).collect())
            }
            _ => None,
        }
    }

    /// One line for terminal display.
    pub fn describe(&self) -> String {
        match self {
            EventKind::StepStarted { state, .. } => {
                format!(
                    "screen {} ({} elements)",
                    state.state_id,
                    state.elements.len()
                )
            }
            EventKind::SubgoalPlanned { subgoal, .. } => format!("subgoal: {subgoal}"),
            EventKind::CandidatesReady {
                candidates,
                excluded_ids,
                fallback,
                degraded,
                ..
            } => {
                let ids: Vec<&str> = candidates.iter().map(|c| c.element_id.as_str()).collect();
                let mut s = format!("{} candidates: {}", ids.len(), ids.join(", "));
                if !excluded_ids.is_empty() {
                    s += &format!(" (excluded {})", excluded_ids.join(", "));
                }
                if *fallback {
                    s += " (fallback)";
                }
                if !degraded.is_empty() {
                    s += &format!(" (degraded {degraded:?})");
                }
                s
            }
            EventKind::ActionDecided {
                action,
                description,
                ..
            } => format!("{action}  # {description}"),
            EventKind::SnapshotTaken {
                snapshot_id,
                scene_id,
                ..
            } => {
                format!("snapshot {snapshot_id} at {scene_id}")
            }
            EventKind::ActionExecuted {
                before_state_id,
                after_state_id,
                ..
            } => format!("{before_state_id} -> {after_state_id}"),
            EventKind::Verdict {
                success, summary, ..
            } => {
                format!("{}: {summary}", if *success { "ok" } else { "failed" })
            }
            EventKind::SnapshotRestored {
                snapshot_id,
                state_id,
                ..
            } => format!("restored snapshot {snapshot_id} ({state_id})"),
            EventKind::Retrospection {
                excluded_ids,
                failures,
                decision,
                ..
            } => format!(
                "{decision:?} after {failures} failure(s); excluded [{}]",
                excluded_ids.join(", ")
            ),
            EventKind::FeedbackRequested { query, .. } => format!("asks: {query}"),
            EventKind::FeedbackReceived {
                answer, timed_out, ..
            } => {
                if *timed_out {
                    format!("no answer ({answer})")
                } else {
                    format!("answer: {answer}")
                }
            }
            EventKind::MemoryAppended { entry, .. } => format!("memory #{}", entry.step_index),
            EventKind::StepAborted { reason, .. } => format!("step aborted: {reason}"),
            EventKind::Terminated {
                outcome,
                steps_used,
                reason,
            } => match reason {
                Some(r) => format!("{outcome} after {steps_used} step(s): {r}"),
                None => format!("{outcome} after {steps_used} step(s)"),
            },
        }
    }

    pub fn step(&self) -> Option<u32> {
        match self {
            EventKind::StepStarted { step, .. }
            | EventKind::SubgoalPlanned { step, .. }
            | EventKind::CandidatesReady { step, .. }
            | EventKind::ActionDecided { step, .. }
            | EventKind::SnapshotTaken { step, .. }
            | EventKind::ActionExecuted { step, .. }
            | EventKind::Verdict { step, .. }
            | EventKind::SnapshotRestored { step, .. }
            | EventKind::Retrospection { step, .. }
            | EventKind::FeedbackRequested { step, .. }
            | EventKind::FeedbackReceived { step, .. }
            | EventKind::MemoryAppended { step, .. }
            | EventKind::StepAborted { step, .. } => Some(*step),
            EventKind::Terminated { .. } => None,
        }
    }
}

/// Receives events as they are emitted, in order.
pub trait EventSink: Send + Sync {
    fn emit(&self, event: &Event);
}

impl<F: Fn(&Event) + Send + Sync> EventSink for F {
    fn emit(&self, event: &Event) {
        self(event)
    }
}

impl EventSink for Mutex<Vec<Event>> {
    fn emit(&self, event: &Event) {
        self.lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(event.clone());
    }
}

pub struct EventLog<'s> {
    started: Instant,
    events: Vec<Event>,
    sink: Option<&'s dyn EventSink>,
}

impl<'s> EventLog<'s> {
    pub fn new(sink: Option<&'s dyn EventSink>) -> Self {
        EventLog {
            started: Instant::now(),
            events: Vec::new(),
            sink,
        }
    }

    pub fn emit(&mut self, kind: EventKind) {
        let event = Event {
            seq: self.events.len() as u64 + 1,
            at_ms: self.started.elapsed().as_millis() as u64,
            kind,
        };
        log::debug!("event {} {}", event.seq, event.kind.name());
        if let Some(sink) = self.sink {
            sink.emit(&event);
        }
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Zeroes timestamps. Everything else in a scripted run is reproducible.
pub fn normalize_events(events: &[Event]) -> Vec<Event> {
    events
        .iter()
        .map(|e| Event {
            at_ms: 0,
            ..e.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_line_shape() {
        let e = Event {
            seq: 3,
            at_ms: 12,
            kind: EventKind::Verdict {
                step: 1,
                success: false,
                summary: "no change".into(),
            },
        };
        let line = crate::model::to_canonical(&e);
        assert_eq!(
            line,
            r#"{"seq":3,"at_ms":12,"event":"verdict","step":1,"success":false,"summary":"no change"}"#
        );
        assert_eq!(crate::model::from_canonical::<Event>(&line).unwrap(), e);
    }

    #[test]
    fn seq_is_dense_and_sink_sees_every_event() {
        let sink = Mutex::new(Vec::new());
        let mut log = EventLog::new(Some(&sink));
        for step in 1..=3 {
            log.emit(EventKind::StepAborted {
                step,
                reason: "r".into(),
            });
        }
        let seqs: Vec<u64> = log.events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, [1, 2, 3]);
        assert_eq!(*sink.lock().unwrap(), log.into_events());
    }
}
