use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

/// Recorded as the user answer when none arrives in time.
pub const NO_ANSWER: &str = "<no answer>";

/// Where questions for the user go and answers come back from.
///
/// The loop calls `arm` before announcing the question, so an answer that
/// arrives right after the announcement always finds an open slot.
pub trait FeedbackChannel: Send + Sync {
    fn arm(&self, query: &str);
    /// `None` on timeout or when no answer is available.
    fn await_answer(&self, timeout: Duration) -> Option<String>;
}

/// Never answers.
pub struct NoFeedback;

impl FeedbackChannel for NoFeedback {
    fn arm(&self, _query: &str) {}
    fn await_answer(&self, _timeout: Duration) -> Option<String> {
        None
    }
}

/// Answers from a fixed queue; a `None` entry plays a timeout.
#[derive(Default)]
pub struct ScriptedFeedback {
    answers: Mutex<VecDeque<Option<String>>>,
    asked: Mutex<Vec<String>>,
}

impl ScriptedFeedback {
    pub fn new<I, S>(answers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedFeedback {
            answers: Mutex::new(answers.into_iter().map(|a| Some(a.into())).collect()),
            asked: Mutex::new(Vec::new()),
        }
    }

    pub fn with_timeouts(answers: Vec<Option<String>>) -> Self {
        ScriptedFeedback {
            answers: Mutex::new(answers.into()),
            asked: Mutex::new(Vec::new()),
        }
    }

    /// Queries seen so far.
    pub fn asked(&self) -> Vec<String> {
        self.asked.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl FeedbackChannel for ScriptedFeedback {
    fn arm(&self, query: &str) {
        self.asked
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(query.to_string());
    }

    fn await_answer(&self, _timeout: Duration) -> Option<String> {
        self.answers
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .flatten()
    }
}

/// Prompts on stderr and reads one line from stdin. No timeout.
pub struct TerminalFeedback;

impl FeedbackChannel for TerminalFeedback {
    fn arm(&self, query: &str) {
        let mut err = std::io::stderr();
        let _ = write!(err, "\n{query}\n> ");
        let _ = err.flush();
    }

    fn await_answer(&self, _timeout: Duration) -> Option<String> {
        let mut line = String::new();
        match std::io::stdin().lock().read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line.trim().to_string()).filter(|l| !l.is_empty()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeliverError {
    #[error("no question is awaiting an answer")]
    NotAwaiting,
    #[error("answer must be non-empty")]
    EmptyAnswer,
}

#[derive(Default)]
struct SlotState {
    query: Option<String>,
    answer: Option<String>,
}

/// Rendezvous between a running loop and an outside answerer. Each armed
/// question accepts exactly one answer; answers with no armed question or
/// after a timeout are refused.
#[derive(Default)]
pub struct FeedbackSlot {
    state: Mutex<SlotState>,
    ready: Condvar,
}

impl FeedbackSlot {
    pub fn new() -> Self {
        Self::default()
    }

    /// The question currently waiting, if any.
    pub fn pending(&self) -> Option<String> {
        let s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        s.query.clone().filter(|_| s.answer.is_none())
    }

    pub fn deliver(&self, answer: &str) -> Result<(), DeliverError> {
        let answer = answer.trim();
        if answer.is_empty() {
            return Err(DeliverError::EmptyAnswer);
        }
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if s.query.is_none() || s.answer.is_some() {
            return Err(DeliverError::NotAwaiting);
        }
        s.answer = Some(answer.to_string());
        self.ready.notify_all();
        Ok(())
    }
}

impl FeedbackChannel for FeedbackSlot {
    fn arm(&self, query: &str) {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        s.query = Some(query.to_string());
        s.answer = None;
    }

    fn await_answer(&self, timeout: Duration) -> Option<String> {
        let deadline = Instant::now() + timeout;
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while s.answer.is_none() {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            s = self
                .ready
                .wait_timeout(s, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        s.query = None;
        s.answer.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn slot_delivers_exactly_once() {
        let slot = Arc::new(FeedbackSlot::new());
        assert_eq!(slot.deliver("early"), Err(DeliverError::NotAwaiting));
        slot.arm("What level of sweetness do you prefer?");
        assert_eq!(
            slot.pending().as_deref(),
            Some("What level of sweetness do you prefer?")
        );
        let s2 = Arc::clone(&slot);
        let h = thread::spawn(move || s2.await_answer(Duration::from_secs(5)));
        slot.deliver("half sugar").unwrap();
        assert_eq!(slot.deliver("again"), Err(DeliverError::NotAwaiting));
        assert_eq!(h.join().unwrap().as_deref(), Some("half sugar"));
        assert_eq!(slot.pending(), None);
        assert_eq!(slot.deliver("late"), Err(DeliverError::NotAwaiting));
    }

    #[test]
    fn slot_times_out_and_refuses_late_answers() {
        let slot = FeedbackSlot::new();
        slot.arm("q");
        assert_eq!(slot.await_answer(Duration::from_millis(20)), None);
        assert_eq!(slot.deliver("late"), Err(DeliverError::NotAwaiting));
    }

    #[test]
    fn slot_rejects_blank_answer() {
        let slot = FeedbackSlot::new();
        slot.arm("q");
        assert_eq!(slot.deliver("  "), Err(DeliverError::EmptyAnswer));
        assert_eq!(slot.pending().as_deref(), Some("q"));
    }

    #[test]
    fn scripted_queue_and_timeouts() {
        let f = ScriptedFeedback::with_timeouts(vec![Some("a".into()), None]);
        f.arm("q1");
        assert_eq!(f.await_answer(Duration::ZERO).as_deref(), Some("a"));
        f.arm("q2");
        assert_eq!(f.await_answer(Duration::ZERO), None);
        assert_eq!(f.asked(), ["q1", "q2"]);
    }
}
