//! Structured-output extraction and the bounded repair loop.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ChatProvider, ChatRequest, LlmError};
use crate::model::{ActionCommand, ActionType, FeedbackExchange, ReflectionVerdict, Subgoal};

/// Total model calls allowed for one structured answer: the first try plus
/// one repair.
pub const MAX_ATTEMPTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaTag {
    Plan,
    Decision,
    Verdict,
    Feedback,
    RecallIds,
}

impl SchemaTag {
    fn example(self) -> &'static str {
        match self {
            SchemaTag::Plan => r#"{"subgoal": "<next immediate intent>"}"#,
            SchemaTag::Decision => {
                r#"{"action_type": "click", "target_element_id": "<id>", "text_payload": null, "description": "<what the action does>"}"#
            }
            SchemaTag::Verdict => r#"{"success": true, "summary": "<observed change>"}"#,
            SchemaTag::Feedback => r#"{"need_feedback": false, "query": null}"#,
            SchemaTag::RecallIds => r#"["<id>", "<id>"]"#,
        }
    }
}

impl fmt::Display for SchemaTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemaTag::Plan => "plan",
            SchemaTag::Decision => "decision",
            SchemaTag::Verdict => "verdict",
            SchemaTag::Feedback => "feedback",
            SchemaTag::RecallIds => "recall id-list",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedRecord {
    Plan(Subgoal),
    Decision {
        action: ActionCommand,
        description: String,
    },
    Verdict(ReflectionVerdict),
    Feedback(FeedbackExchange),
    RecallIds(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Parsed(ParsedRecord),
    RepairNeeded {
        reason: String,
        repair_prompt: String,
    },
}

/// Finds every balanced top-level JSON object or array embedded in `raw`,
/// in order of appearance.
pub fn extract_records(raw: &str) -> Vec<Value> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        if bytes[start] != b'{' && bytes[start] != b'[' {
            start += 1;
            continue;
        }
        match balanced_end(bytes, start) {
            Some(end) => match serde_json::from_str::<Value>(&raw[start..=end]) {
                Ok(v) => {
                    out.push(v);
                    start = end + 1;
                }
                Err(_) => start += 1,
            },
            None => start += 1,
        }
    }
    out
}

fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn str_field<'a>(v: &'a Value, names: &[&str]) -> Option<&'a str> {
    names.iter().find_map(|n| v.get(n).and_then(Value::as_str))
}

fn id_value(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn match_record(v: &Value, tag: SchemaTag) -> Result<ParsedRecord, String> {
    match tag {
        SchemaTag::Plan => {
            let text = str_field(v, &["subgoal", "text"]).ok_or("missing \"subgoal\" string")?;
            Subgoal::new(text)
                .map(ParsedRecord::Plan)
                .map_err(|e| e.to_string())
        }
        SchemaTag::Decision => {
            let at =
                str_field(v, &["action_type", "action"]).ok_or("missing \"action_type\" string")?;
            let action_type =
                ActionType::parse(at).ok_or_else(|| format!("unknown action_type {at:?}"))?;
            let target = ["target_element_id", "target", "element_id"]
                .iter()
                .find_map(|n| v.get(n).filter(|x| !x.is_null()))
                .map(|x| id_value(x).ok_or_else(|| format!("target is not an id: {x}")))
                .transpose()?;
            let payload = str_field(v, &["text_payload", "text"]).map(str::to_string);
            let description = str_field(v, &["description"])
                .map(str::trim)
                .unwrap_or_default();
            if description.is_empty() {
                return Err("missing non-empty \"description\"".into());
            }
            let action =
                ActionCommand::new(action_type, target, payload).map_err(|e| e.to_string())?;
            Ok(ParsedRecord::Decision {
                action,
                description: description.to_string(),
            })
        }
        SchemaTag::Verdict => {
            let success = v
                .get("success")
                .and_then(Value::as_bool)
                .ok_or("missing boolean \"success\"")?;
            let summary = str_field(v, &["summary"]).unwrap_or_default();
            ReflectionVerdict::new(success, summary)
                .map(ParsedRecord::Verdict)
                .map_err(|e| e.to_string())
        }
        SchemaTag::Feedback => {
            let need = v
                .get("need_feedback")
                .and_then(Value::as_bool)
                .ok_or("missing boolean \"need_feedback\"")?;
            if !need {
                return Ok(ParsedRecord::Feedback(FeedbackExchange::none()));
            }
            match str_field(v, &["query"])
                .map(str::trim)
                .filter(|q| !q.is_empty())
            {
                Some(q) => Ok(ParsedRecord::Feedback(FeedbackExchange::ask(q))),
                None => Err("need_feedback is true but \"query\" is missing".into()),
            }
        }
        SchemaTag::RecallIds => {
            let list = match v {
                Value::Array(a) => a,
                Value::Object(_) => ["ids", "element_ids"]
                    .iter()
                    .find_map(|n| v.get(n).and_then(Value::as_array))
                    .ok_or("object without an \"ids\" array")?,
                _ => return Err("not an id list".into()),
            };
            list.iter()
                .map(|x| id_value(x).ok_or_else(|| format!("not an id: {x}")))
                .collect::<Result<Vec<_>, _>>()
                .map(ParsedRecord::RecallIds)
        }
    }
}

fn is_id_token(t: &str) -> bool {
    !t.is_empty()
        && t.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'))
}

/// Bare `el_3, el_9` replies are accepted for id lists.
fn plain_id_list(raw: &str) -> Option<Vec<String>> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return None;
    }
    if trimmed.eq_ignore_ascii_case("none") {
        return Some(Vec::new());
    }
    let tokens: Vec<&str> = trimmed
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    tokens
        .iter()
        .all(|t| is_id_token(t))
        .then(|| tokens.iter().map(|t| t.to_string()).collect())
}

pub fn repair_instruction(tag: SchemaTag, reason: &str) -> String {
    format!(
        "Your previous reply could not be used ({reason}). Reply again with exactly one JSON {tag} record of the form {}",
        tag.example()
    )
}

/// Extracts the first record in `raw` that fits `tag`. Never panics.
pub fn parse_structured(raw: &str, tag: SchemaTag) -> ParseOutcome {
    let records = extract_records(raw);
    let mut first_reason = None;
    for rec in &records {
        match match_record(rec, tag) {
            Ok(parsed) => return ParseOutcome::Parsed(parsed),
            Err(reason) => {
                first_reason.get_or_insert(reason);
            }
        }
    }
    if tag == SchemaTag::RecallIds && records.is_empty() {
        if let Some(ids) = plain_id_list(raw) {
            return ParseOutcome::Parsed(ParsedRecord::RecallIds(ids));
        }
    }
    let reason = first_reason.unwrap_or_else(|| "no JSON record found".to_string());
    ParseOutcome::RepairNeeded {
        repair_prompt: repair_instruction(tag, &reason),
        reason,
    }
}

/// Failure of [`complete_with_repair`] once the attempt budget is spent.
#[derive(Debug, Clone, PartialEq)]
pub enum RepairFailure<E> {
    Provider(LlmError),
    /// The last reply held no usable record.
    Unparseable {
        attempts: usize,
        reason: String,
    },
    /// The last reply parsed but the caller's contract check rejected it.
    Rejected {
        attempts: usize,
        rejection: E,
    },
}

impl<E: fmt::Display> RepairFailure<E> {
    pub fn into_llm_error(self, tag: SchemaTag) -> LlmError {
        match self {
            RepairFailure::Provider(e) => e,
            RepairFailure::Unparseable { attempts, reason } => LlmError::MalformedOutput {
                shape: tag,
                attempts,
                reason,
            },
            RepairFailure::Rejected {
                attempts,
                rejection,
            } => LlmError::MalformedOutput {
                shape: tag,
                attempts,
                reason: rejection.to_string(),
            },
        }
    }
}

/// Calls the provider, parses for `tag`, applies `accept`, and on failure
/// re-asks with a repair instruction, up to [`MAX_ATTEMPTS`] calls in total.
pub fn complete_with_repair<T, E: fmt::Display>(
    provider: &dyn ChatProvider,
    request: &ChatRequest,
    tag: SchemaTag,
    mut accept: impl FnMut(ParsedRecord) -> Result<T, E>,
) -> Result<T, RepairFailure<E>> {
    let mut req = request.clone();
    let mut last = None;
    for attempt in 1..=MAX_ATTEMPTS {
        let raw = provider.complete(&req).map_err(RepairFailure::Provider)?;
        let reason = match parse_structured(&raw, tag) {
            ParseOutcome::Parsed(rec) => match accept(rec) {
                Ok(v) => return Ok(v),
                Err(rejection) => {
                    let reason = rejection.to_string();
                    last = Some(RepairFailure::Rejected {
                        attempts: attempt,
                        rejection,
                    });
                    reason
                }
            },
            ParseOutcome::RepairNeeded { reason, .. } => {
                last = Some(RepairFailure::Unparseable {
                    attempts: attempt,
                    reason: reason.clone(),
                });
                reason
            }
        };
        req.user_prompt = format!(
            "{}\n\n{}",
            request.user_prompt,
            repair_instruction(tag, &reason)
        );
    }
    Err(last.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnProvider, RoleTag};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn parsed(raw: &str, tag: SchemaTag) -> ParsedRecord {
        match parse_structured(raw, tag) {
            ParseOutcome::Parsed(p) => p,
            other => panic!("expected parse of {raw:?}, got {other:?}"),
        }
    }

    #[test]
    fn decision_record() {
        let p = parsed(
            r#"{"action_type":"click","target_element_id":"el_7","description":"Tap it"}"#,
            SchemaTag::Decision,
        );
        assert_eq!(
            p,
            ParsedRecord::Decision {
                action: ActionCommand::click("el_7"),
                description: "Tap it".into()
            }
        );
    }

    #[test]
    fn prose_wrapped_record_same_as_bare() {
        let bare = r#"{"action_type":"click","target_element_id":"el_7","description":"Tap it"}"#;
        let wrapped = format!(
            "Sure! Looking at the {{screen}}, I'd do:\n```json\n{bare}\n```\nHope that helps [1]."
        );
        assert_eq!(
            parsed(&wrapped, SchemaTag::Decision),
            parsed(bare, SchemaTag::Decision)
        );
    }

    #[test]
    fn nested_and_braces_in_strings() {
        let raw = r#"{"success": false, "summary": "saw a } brace and {nested: [1]}", "extra": {"a": [1, {"b": 2}]}}"#;
        assert_eq!(
            parsed(raw, SchemaTag::Verdict),
            ParsedRecord::Verdict(
                ReflectionVerdict::new(false, "saw a } brace and {nested: [1]}").unwrap()
            )
        );
    }

    #[test]
    fn skips_non_matching_records() {
        let raw = r#"first {"note": 1} then {"need_feedback": true, "query": "Which size?"}"#;
        assert_eq!(
            parsed(raw, SchemaTag::Feedback),
            ParsedRecord::Feedback(FeedbackExchange::ask("Which size?"))
        );
    }

    #[test]
    fn feedback_false_drops_query() {
        let p = parsed(
            r#"{"need_feedback": false, "query": "ignored"}"#,
            SchemaTag::Feedback,
        );
        assert_eq!(p, ParsedRecord::Feedback(FeedbackExchange::none()));
    }

    #[test]
    fn recall_id_forms() {
        let want = ParsedRecord::RecallIds(vec!["el_3".into(), "el_9".into()]);
        assert_eq!(parsed("el_3, el_9", SchemaTag::RecallIds), want);
        assert_eq!(parsed(r#"["el_3", "el_9"]"#, SchemaTag::RecallIds), want);
        assert_eq!(
            parsed(
                r#"Relevant: {"ids": ["el_3","el_9"]}"#,
                SchemaTag::RecallIds
            ),
            want
        );
        assert_eq!(
            parsed("none", SchemaTag::RecallIds),
            ParsedRecord::RecallIds(vec![])
        );
        assert!(matches!(
            parse_structured("I am not sure!", SchemaTag::RecallIds),
            ParseOutcome::RepairNeeded { .. }
        ));
    }

    #[test]
    fn invalid_action_needs_repair() {
        let raw = r#"{"action_type":"click","description":"no target"}"#;
        assert!(matches!(
            parse_structured(raw, SchemaTag::Decision),
            ParseOutcome::RepairNeeded { .. }
        ));
        let raw = r#"{"action_type":"teleport","description":"x"}"#;
        match parse_structured(raw, SchemaTag::Decision) {
            ParseOutcome::RepairNeeded {
                reason,
                repair_prompt,
            } => {
                assert!(reason.contains("teleport"));
                assert!(repair_prompt.contains("action_type"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn garbage_twice_is_malformed() {
        let calls = AtomicUsize::new(0);
        let p = FnProvider(|_: &ChatRequest| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("no record here".to_string())
        });
        let req = ChatRequest::new(RoleTag::Decision, "s", "u");
        let res = complete_with_repair(&p, &req, SchemaTag::Decision, Ok::<_, String>);
        assert!(matches!(
            res,
            Err(RepairFailure::Unparseable { attempts: 2, .. })
        ));
        assert_eq!(calls.load(Ordering::SeqCst), MAX_ATTEMPTS);
        let err = res.unwrap_err().into_llm_error(SchemaTag::Decision);
        assert!(matches!(
            err,
            LlmError::MalformedOutput {
                shape: SchemaTag::Decision,
                ..
            }
        ));
    }

    #[test]
    fn repair_succeeds_on_second_call() {
        let p = FnProvider(|r: &ChatRequest| {
            Ok(if r.user_prompt.contains("could not be used") {
                r#"{"subgoal":"open the app"}"#.to_string()
            } else {
                "hmm".to_string()
            })
        });
        let req = ChatRequest::new(RoleTag::Planner, "s", "u");
        let res = complete_with_repair(&p, &req, SchemaTag::Plan, Ok::<_, String>).unwrap();
        assert_eq!(
            res,
            ParsedRecord::Plan(Subgoal::new("open the app").unwrap())
        );
    }

    proptest::proptest! {
        #[test]
        fn parse_is_total(raw in ".{0,200}") {
            for tag in [SchemaTag::Plan, SchemaTag::Decision, SchemaTag::Verdict, SchemaTag::Feedback, SchemaTag::RecallIds] {
                let _ = parse_structured(&raw, tag);
            }
        }

        #[test]
        fn parse_is_total_on_bracket_soup(raw in "[\\[\\]{}\",:a-z0-9 \\\\]{0,120}") {
            for tag in [SchemaTag::Decision, SchemaTag::RecallIds] {
                let _ = parse_structured(&raw, tag);
            }
        }
    }
}
