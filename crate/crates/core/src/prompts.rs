//! Versioned prompt templates with `{{slot}}` interpolation.

use crate::llm::RoleTag;
use crate::model::{ScreenState, UiElement};

pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy)]
pub struct PromptPair {
    pub role: RoleTag,
    pub system: &'static str,
    pub user: &'static str,
}

macro_rules! pair {
    ($role:expr, $name:literal) => {
        PromptPair {
            role: $role,
            system: include_str!(concat!("../assets/prompts/v1/", $name, ".system.txt")),
            user: include_str!(concat!("../assets/prompts/v1/", $name, ".user.txt")),
        }
    };
}

pub const PLANNER: PromptPair = pair!(RoleTag::Planner, "planner");
pub const DECISION: PromptPair = pair!(RoleTag::Decision, "decision");
pub const REFLECTION: PromptPair = pair!(RoleTag::Reflection, "reflection");
pub const INTERACTION: PromptPair = pair!(RoleTag::Interaction, "interaction");
pub const RECALL: PromptPair = pair!(RoleTag::Recall, "recall");

pub const ALL: [PromptPair; 5] = [PLANNER, DECISION, REFLECTION, INTERACTION, RECALL];

/// Fills `{{name}}` slots. Unknown slots are left in place.
pub fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.trim_end().to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}

/// Slot names used by a template, in order of first appearance.
pub fn slots(template: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = after[..end].to_string();
                if !out.contains(&name) {
                    out.push(name);
                }
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out
}

/// One roster line: `el_3 | button | "Search" | desc "search box" | clickable`.
pub fn element_line(el: &UiElement) -> String {
    let mut line = format!(
        "{} | {}",
        el.element_id,
        if el.element_class.is_empty() {
            "-"
        } else {
            &el.element_class
        }
    );
    if !el.text.is_empty() {
        line.push_str(&format!(" | {:?}", el.text));
    }
    if !el.content_description.is_empty() {
        line.push_str(&format!(" | desc {:?}", el.content_description));
    }
    let b = el.bounds;
    line.push_str(&format!(
        " | [{},{},{},{}]",
        b.left, b.top, b.right, b.bottom
    ));
    if el.clickable {
        line.push_str(" | clickable");
    }
    if !el.visible {
        line.push_str(" | hidden");
    }
    line
}

pub fn render_elements<'a>(elements: impl IntoIterator<Item = &'a UiElement>) -> String {
    let lines: Vec<String> = elements.into_iter().map(element_line).collect();
    if lines.is_empty() {
        "(no elements)".to_string()
    } else {
        lines.join("\n")
    }
}

pub fn render_screen(state: &ScreenState) -> String {
    render_elements(&state.elements)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_has_expected_slots() {
        let expect: [(&PromptPair, &[&str]); 5] = [
            (&PLANNER, &["task", "state_id", "screen", "memory"]),
            (
                &DECISION,
                &["subgoal", "state_id", "candidate_note", "candidates"],
            ),
            (
                &REFLECTION,
                &[
                    "subgoal",
                    "action",
                    "before_id",
                    "after_id",
                    "side_note",
                    "diff",
                ],
            ),
            (
                &INTERACTION,
                &["subgoal", "action", "description", "state_id", "screen"],
            ),
            (&RECALL, &["subgoal", "roster"]),
        ];
        for (pair, want) in expect {
            assert_eq!(
                slots(pair.user),
                want.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                "{}",
                pair.role
            );
            assert!(slots(pair.system).is_empty(), "{}", pair.role);
            let filled: Vec<(&str, &str)> = want.iter().map(|s| (*s, "x")).collect();
            assert!(!render(pair.user, &filled).contains("{{"));
        }
    }

    #[test]
    fn render_replaces_all_occurrences() {
        assert_eq!(
            render("{{a}}-{{a}} {{b}}\n", &[("a", "1"), ("b", "2")]),
            "1-1 2"
        );
    }
}
