//! Value types shared by every part of the engine.
//!
//! All types serialize to the canonical record format: compact JSON with
//! fields in declaration order. Deserialization re-checks invariants, so a
//! record that parses is a record that is valid.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("element id must be non-empty")]
    EmptyElementId,
    #[error("element {0}: bounds must satisfy left < right and top < bottom")]
    DegenerateBounds(String),
    #[error("element {0}: text, content_description and element_class are all empty")]
    NoDescriptiveField(String),
    #[error("duplicate element id {0:?} in state {1:?}")]
    DuplicateElement(String, String),
    #[error("{action}: target_element_id must be {expected}")]
    TargetPresence {
        action: ActionType,
        expected: &'static str,
    },
    #[error("{action}: text_payload must be {expected}")]
    PayloadPresence {
        action: ActionType,
        expected: &'static str,
    },
    #[error("subgoal text must be non-empty")]
    EmptySubgoal,
    #[error("user answer must be non-empty")]
    EmptyAnswer,
    #[error("a failed verdict needs a non-empty summary")]
    EmptyFailureSummary,
    #[error("feedback exchange without need_feedback cannot carry a query or answer")]
    UnexpectedFeedbackPayload,
    #[error("feedback exchange with need_feedback requires a query")]
    MissingFeedbackQuery,
    #[error("memory step_index must be >= 1")]
    ZeroStepIndex,
    #[error("trajectory length {declared} does not match {actual} steps")]
    TrajectoryLength { declared: usize, actual: usize },
}

/// Screen-pixel rectangle, serialized as `[left, top, right, bottom]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    pub const fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.left < self.right && self.top < self.bottom
    }
}

impl From<[i32; 4]> for Bounds {
    fn from(v: [i32; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Bounds> for [i32; 4] {
    fn from(b: Bounds) -> Self {
        [b.left, b.top, b.right, b.bottom]
    }
}

/// One accessibility-tree node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawUiElement")]
pub struct UiElement {
    pub element_id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub content_description: String,
    #[serde(default)]
    pub element_class: String,
    pub bounds: Bounds,
    pub clickable: bool,
    pub visible: bool,
}

#[derive(Deserialize)]
struct RawUiElement {
    element_id: String,
    #[serde(default)]
    text: String,
    #[serde(default)]
    content_description: String,
    #[serde(default)]
    element_class: String,
    bounds: Bounds,
    clickable: bool,
    visible: bool,
}

impl TryFrom<RawUiElement> for UiElement {
    type Error = ModelError;

    fn try_from(r: RawUiElement) -> Result<Self, Self::Error> {
        let el = UiElement {
            element_id: r.element_id,
            text: r.text,
            content_description: r.content_description,
            element_class: r.element_class,
            bounds: r.bounds,
            clickable: r.clickable,
            visible: r.visible,
        };
        el.validate()?;
        Ok(el)
    }
}

impl UiElement {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.element_id.is_empty() {
            return Err(ModelError::EmptyElementId);
        }
        if !self.bounds.is_well_formed() {
            return Err(ModelError::DegenerateBounds(self.element_id.clone()));
        }
        if self.text.is_empty()
            && self.content_description.is_empty()
            && self.element_class.is_empty()
        {
            return Err(ModelError::NoDescriptiveField(self.element_id.clone()));
        }
        Ok(())
    }

    /// The human-readable label fields, in order, skipping empty ones.
    pub fn text_fields(&self) -> impl Iterator<Item = &str> {
        [self.text.as_str(), self.content_description.as_str()]
            .into_iter()
            .filter(|s| !s.is_empty())
    }
}

/// One observation of the environment: the ordered element list plus an
/// optional opaque screenshot reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScreenState")]
pub struct ScreenState {
    pub state_id: String,
    pub elements: Vec<UiElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screenshot_ref: Option<String>,
}

#[derive(Deserialize)]
struct RawScreenState {
    state_id: String,
    elements: Vec<UiElement>,
    #[serde(default)]
    screenshot_ref: Option<String>,
}

impl TryFrom<RawScreenState> for ScreenState {
    type Error = ModelError;

    fn try_from(r: RawScreenState) -> Result<Self, Self::Error> {
        let s = ScreenState {
            state_id: r.state_id,
            elements: r.elements,
            screenshot_ref: r.screenshot_ref,
        };
        s.validate()?;
        Ok(s)
    }
}

impl ScreenState {
    pub fn new(state_id: impl Into<String>, elements: Vec<UiElement>) -> Result<Self, ModelError> {
        let s = ScreenState {
            state_id: state_id.into(),
            elements,
            screenshot_ref: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for el in &self.elements {
            el.validate()?;
            if !seen.insert(el.element_id.as_str()) {
                return Err(ModelError::DuplicateElement(
                    el.element_id.clone(),
                    self.state_id.clone(),
                ));
            }
        }
        Ok(())
    }

    pub fn element(&self, id: &str) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.element_id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.element(id).is_some()
    }
}

/// The planner's immediate intent for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSubgoal")]
pub struct Subgoal {
    pub text: String,
    #[serde(default)]
    pub feedback_applied: Option<String>,
}

#[derive(Deserialize)]
struct RawSubgoal {
    text: String,
    #[serde(default)]
    feedback_applied: Option<String>,
}

impl TryFrom<RawSubgoal> for Subgoal {
    type Error = ModelError;

    fn try_from(r: RawSubgoal) -> Result<Self, Self::Error> {
        if r.text.trim().is_empty() {
            return Err(ModelError::EmptySubgoal);
        }
        Ok(Subgoal {
            text: r.text,
            feedback_applied: r.feedback_applied,
        })
    }
}

impl Subgoal {
    pub fn new(text: impl Into<String>) -> Result<Self, ModelError> {
        Subgoal::try_from(RawSubgoal {
            text: text.into(),
            feedback_applied: None,
        })
    }
}

impl fmt::Display for Subgoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Closed action vocabulary understood by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Click,
    DoubleClick,
    LongPress,
    InputText,
    ScrollUp,
    ScrollDown,
    NavigateBack,
    NavigateHome,
    OpenApp,
    Wait,
    Complete,
    Answer,
}

impl ActionType {
    pub const ALL: [ActionType; 12] = [
        ActionType::Click,
        ActionType::DoubleClick,
        ActionType::LongPress,
        ActionType::InputText,
        ActionType::ScrollUp,
        ActionType::ScrollDown,
        ActionType::NavigateBack,
        ActionType::NavigateHome,
        ActionType::OpenApp,
        ActionType::Wait,
        ActionType::Complete,
        ActionType::Answer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Click => "click",
            ActionType::DoubleClick => "double_click",
            ActionType::LongPress => "long_press",
            ActionType::InputText => "input_text",
            ActionType::ScrollUp => "scroll_up",
            ActionType::ScrollDown => "scroll_down",
            ActionType::NavigateBack => "navigate_back",
            ActionType::NavigateHome => "navigate_home",
            ActionType::OpenApp => "open_app",
            ActionType::Wait => "wait",
            ActionType::Complete => "complete",
            ActionType::Answer => "answer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL.into_iter().find(|a| a.as_str() == norm)
    }

    /// Element-directed actions carry a target; everything else is a system call.
    pub fn requires_target(self) -> bool {
        matches!(
            self,
            ActionType::Click
                | ActionType::DoubleClick
                | ActionType::LongPress
                | ActionType::InputText
        )
    }

    pub fn requires_payload(self) -> bool {
        matches!(
            self,
            ActionType::InputText | ActionType::OpenApp | ActionType::Answer
        )
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(action_type, target_element)` plus the optional text parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawActionCommand")]
pub struct ActionCommand {
    pub action_type: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_element_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_payload: Option<String>,
}

#[derive(Deserialize)]
struct RawActionCommand {
    action_type: ActionType,
    #[serde(default)]
    target_element_id: Option<String>,
    #[serde(default)]
    text_payload: Option<String>,
}

impl TryFrom<RawActionCommand> for ActionCommand {
    type Error = ModelError;

    fn try_from(r: RawActionCommand) -> Result<Self, Self::Error> {
        ActionCommand::new(r.action_type, r.target_element_id, r.text_payload)
    }
}

impl ActionCommand {
    pub fn new(
        action_type: ActionType,
        target_element_id: Option<String>,
        text_payload: Option<String>,
    ) -> Result<Self, ModelError> {
        let cmd = ActionCommand {
            action_type,
            target_element_id,
            text_payload,
        };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn click(target: impl Into<String>) -> Self {
        ActionCommand {
            action_type: ActionType::Click,
            target_element_id: Some(target.into()),
            text_payload: None,
        }
    }

    pub fn complete() -> Self {
        ActionCommand {
            action_type: ActionType::Complete,
            target_element_id: None,
            text_payload: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let has_target = self
            .target_element_id
            .as_deref()
            .is_some_and(|t| !t.is_empty());
        if self.action_type.requires_target() != has_target
            || (self.target_element_id.is_some() && !has_target)
        {
            return Err(ModelError::TargetPresence {
                action: self.action_type,
                expected: if self.action_type.requires_target() {
                    "present"
                } else {
                    "absent"
                },
            });
        }
        if self.action_type.requires_payload() != self.text_payload.is_some() {
            return Err(ModelError::PayloadPresence {
                action: self.action_type,
                expected: if self.action_type.requires_payload() {
                    "present"
                } else {
                    "absent"
                },
            });
        }
        Ok(())
    }

    pub fn target(&self) -> Option<&str> {
        self.target_element_id.as_deref()
    }

    pub fn is_complete(&self) -> bool {
        self.action_type == ActionType::Complete
    }
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.action_type)?;
        if let Some(t) = &self.target_element_id {
            write!(f, " {t}")?;
        }
        if let Some(p) = &self.text_payload {
            write!(f, " {p:?}")?;
        }
        Ok(())
    }
}

/// Outcome of judging one executed action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct ReflectionVerdict {
    pub success: bool,
    pub summary: String,
}

#[derive(Deserialize)]
struct RawVerdict {
    success: bool,
    #[serde(default)]
    summary: String,
}

impl TryFrom<RawVerdict> for ReflectionVerdict {
    type Error = ModelError;

    fn try_from(r: RawVerdict) -> Result<Self, Self::Error> {
        ReflectionVerdict::new(r.success, r.summary)
    }
}

impl ReflectionVerdict {
    pub fn new(success: bool, summary: impl Into<String>) -> Result<Self, ModelError> {
        let summary = summary.into();
        if !success && summary.trim().is_empty() {
            return Err(ModelError::EmptyFailureSummary);
        }
        Ok(ReflectionVerdict { success, summary })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFeedback")]
pub struct FeedbackExchange {
    pub need_feedback: bool,
    #[serde(default)]
    pub query: Option<String>,
    #[serde(default)]
    pub answer: Option<String>,
}

#[derive(Deserialize)]
struct RawFeedback {
    need_feedback: bool,
    #[serde(default)]
    query: Option<String>,
    #[serde(default)]
    answer: Option<String>,
}

impl TryFrom<RawFeedback> for FeedbackExchange {
    type Error = ModelError;

    fn try_from(r: RawFeedback) -> Result<Self, Self::Error> {
        let fx = FeedbackExchange {
            need_feedback: r.need_feedback,
            query: r.query,
            answer: r.answer,
        };
        fx.validate()?;
        Ok(fx)
    }
}

impl FeedbackExchange {
    pub fn none() -> Self {
        FeedbackExchange {
            need_feedback: false,
            query: None,
            answer: None,
        }
    }

    pub fn ask(query: impl Into<String>) -> Self {
        FeedbackExchange {
            need_feedback: true,
            query: Some(query.into()),
            answer: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.need_feedback && (self.query.is_some() || self.answer.is_some()) {
            return Err(ModelError::UnexpectedFeedbackPayload);
        }
        if self.need_feedback && self.query.as_deref().is_none_or(|q| q.trim().is_empty()) {
            return Err(ModelError::MissingFeedbackQuery);
        }
        Ok(())
    }
}

/// One Memory Unit record: `(g, a, d, success, summary, q, u)` plus its index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub step_index: u32,
    pub subgoal: Subgoal,
    pub action: ActionCommand,
    pub description: String,
    pub success: bool,
    pub summary: String,
    pub query: Option<String>,
    pub user_answer: Option<String>,
}

impl MemoryEntry {
    /// Names of the payload fields, in tuple order.
    pub const PAYLOAD_FIELDS: [&'static str; 7] = [
        "subgoal",
        "action",
        "description",
        "success",
        "summary",
        "query",
        "user_answer",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    BudgetExhausted,
    Aborted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Completed => "completed",
            Outcome::BudgetExhausted => "budget_exhausted",
            Outcome::Aborted => "aborted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: ScreenState,
    pub action: ActionCommand,
}

/// The committed `(state, action)` path of one run. Rolled-back attempts
/// are not part of it; they live in the memory log and event stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct Trajectory {
    pub task_text: String,
    pub steps: Vec<TrajectoryStep>,
    pub length: usize,
    pub outcome: Outcome,
}

#[derive(Deserialize)]
struct RawTrajectory {
    task_text: String,
    steps: Vec<TrajectoryStep>,
    length: usize,
    outcome: Outcome,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = ModelError;

    fn try_from(r: RawTrajectory) -> Result<Self, Self::Error> {
        if r.length != r.steps.len() {
            return Err(ModelError::TrajectoryLength {
                declared: r.length,
                actual: r.steps.len(),
            });
        }
        Ok(Trajectory {
            task_text: r.task_text,
            steps: r.steps,
            length: r.length,
            outcome: r.outcome,
        })
    }
}

impl Trajectory {
    pub fn new(task_text: impl Into<String>) -> Self {
        Trajectory {
            task_text: task_text.into(),
            steps: Vec::new(),
            length: 0,
            outcome: Outcome::Aborted,
        }
    }

    pub fn push(&mut self, state: ScreenState, action: ActionCommand) {
        self.steps.push(TrajectoryStep { state, action });
        self.length = self.steps.len();
    }
}

/// Serialize any engine type to its canonical record.
pub fn to_canonical<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("engine types always serialize")
}

pub fn from_canonical<T: DeserializeOwned>(record: &str) -> Result<T, serde_json::Error> {
    serde_json::from_str(record)
}

/// Canonical record of a screen state.
pub fn serialize_state(state: &ScreenState) -> String {
    to_canonical(state)
}

pub fn parse_state(record: &str) -> Result<ScreenState, serde_json::Error> {
    from_canonical(record)
}
