//! Built-in demo scenarios and a table-driven chat policy.
//!
//! The policy reads the screen id and candidate list out of each rendered
//! prompt and answers from its tables. It is used to author the scripted
//! fixtures under `fixtures/` and as a stand-in model in tests; it is not
//! meant to be smart.

use std::collections::BTreeMap;

use serde_json::json;

use crate::llm::{ChatProvider, ChatRequest, LlmError, RoleTag};
use crate::model::ActionType;
use crate::model::{ActionCommand, Bounds, ScreenState, UiElement};
use crate::sim::{Canvas, GroundTruth, Scenario, ScenarioMeta, SceneFixture, TransitionRule};

#[derive(Debug, Clone, Default)]
pub struct Policy {
    /// Screen id to the subgoal the planner proposes there.
    pub plans: BTreeMap<String, String>,
    /// Screen id to preferred actions, best first. The first one whose
    /// target is among the offered candidates is chosen.
    pub decisions: BTreeMap<String, Vec<(ActionCommand, String)>>,
    /// Rendered action (`click el_latte`) to the question asked after it
    /// succeeds.
    pub questions: BTreeMap<String, String>,
    /// Failure summaries keyed by the rendered action.
    pub failure_notes: BTreeMap<String, String>,
    /// Element ids the recall role names whenever they are on screen.
    pub recall: Vec<String>,
}

fn field<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
}

fn roster_ids(prompt: &str) -> Vec<&str> {
    prompt
        .lines()
        .filter(|l| l.contains(" | "))
        .filter_map(|l| l.split(" | ").next())
        .map(str::trim)
        .collect()
}

impl Policy {
    pub fn plan(mut self, state: &str, subgoal: &str) -> Self {
        self.plans.insert(state.into(), subgoal.into());
        self
    }

    pub fn decide(mut self, state: &str, action: ActionCommand, description: &str) -> Self {
        self.decisions
            .entry(state.into())
            .or_default()
            .push((action, description.into()));
        self
    }

    pub fn ask_after(mut self, action: &ActionCommand, query: &str) -> Self {
        self.questions.insert(action.to_string(), query.into());
        self
    }

    pub fn fail_note(mut self, action: &ActionCommand, note: &str) -> Self {
        self.failure_notes.insert(action.to_string(), note.into());
        self
    }

    pub fn recall<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.recall.extend(ids.into_iter().map(Into::into));
        self
    }

    fn respond(&self, req: &ChatRequest) -> String {
        let p = req.user_prompt.as_str();
        match req.role_tag {
            RoleTag::Planner => {
                let screen = field(p, "Screen:").unwrap_or_default();
                let subgoal = self
                    .plans
                    .get(screen)
                    .cloned()
                    .unwrap_or_else(|| "finish the task".into());
                json!({ "subgoal": subgoal }).to_string()
            }
            RoleTag::Decision => {
                let screen = field(p, "Screen:").unwrap_or_default();
                let offered = roster_ids(p);
                let prefs = self.decisions.get(screen).map(Vec::as_slice).unwrap_or(&[]);
                let chosen = prefs
                    .iter()
                    .find(|(a, _)| a.target().is_none_or(|t| offered.contains(&t)))
                    .or_else(|| prefs.first());
                let (action, description) = match chosen {
                    Some((a, d)) => (a.clone(), d.clone()),
                    None => (ActionCommand::complete(), "Task finished".to_string()),
                };
                json!({
                    "action_type": action.action_type.as_str(),
                    "target_element_id": action.target_element_id,
                    "text_payload": action.text_payload,
                    "description": description,
                })
                .to_string()
            }
            RoleTag::Reflection => {
                let action = field(p, "Action:").unwrap_or_default();
                let (before, after) = field(p, "Screen:")
                    .and_then(|s| s.split_once(" -> "))
                    .unwrap_or_default();
                let note = field(p, "Observed change:").filter(|n| *n != "(none)");
                if action == "complete" {
                    json!({"success": true, "summary": "The task is finished"}).to_string()
                } else if before != after {
                    let summary = note
                        .map(str::to_string)
                        .unwrap_or_else(|| format!("The screen moved from {before} to {after}"));
                    json!({"success": true, "summary": summary}).to_string()
                } else {
                    let summary = self
                        .failure_notes
                        .get(action)
                        .cloned()
                        .unwrap_or_else(|| "The screen did not change".into());
                    json!({"success": false, "summary": summary}).to_string()
                }
            }
            RoleTag::Interaction => {
                let action = field(p, "Action:").unwrap_or_default();
                match self.questions.get(action) {
                    Some(q) => json!({"need_feedback": true, "query": q}).to_string(),
                    None => json!({"need_feedback": false, "query": null}).to_string(),
                }
            }
            RoleTag::Recall => {
                let offered = roster_ids(p);
                let ids: Vec<&str> = self
                    .recall
                    .iter()
                    .map(String::as_str)
                    .filter(|id| offered.contains(id))
                    .collect();
                json!(ids).to_string()
            }
        }
    }
}

impl ChatProvider for Policy {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        Ok(self.respond(request))
    }
}

/// Shorthand for a visible, clickable element; `slot` places it on a
/// five-column grid.
pub fn element(id: &str, class: &str, text: &str, desc: &str, slot: i32) -> UiElement {
    let (left, top) = (40 + (slot % 5) * 200, 200 + (slot / 5) * 200);
    UiElement {
        element_id: id.into(),
        text: text.into(),
        content_description: desc.into(),
        element_class: class.into(),
        bounds: Bounds::new(left, top, left + 180, top + 180),
        clickable: true,
        visible: true,
    }
}

fn scene(id: &str, elements: Vec<UiElement>) -> SceneFixture {
    SceneFixture::new(
        id,
        ScreenState::new(id, elements).expect("demo scene is valid"),
    )
}

fn meta(name: &str, initial: &str) -> ScenarioMeta {
    ScenarioMeta {
        name: name.into(),
        initial_scene: initial.into(),
        canvas: Canvas::default(),
    }
}

pub const COFFEE_TASK: &str = "order a latte from the coffee app";
pub const SWEETNESS_QUERY: &str = "What level of sweetness do you prefer?";

/// Three screens: launcher, drink menu, sweetness picker.
pub fn coffee() -> (Scenario, Policy) {
    let mut home = scene(
        "home",
        vec![
            element("el_coffee", "icon", "Coffee", "coffee app", 0),
            element("el_mail", "icon", "Mail", "", 1),
            element("el_maps", "icon", "Maps", "", 2),
            element("el_camera", "icon", "Camera", "", 3),
            element("el_weather", "icon", "Weather", "", 4),
        ],
    );
    home.transitions.push(
        TransitionRule::on(ActionType::Click, Some("el_coffee"), "menu")
            .with_note("The coffee app opened on its drink menu"),
    );
    let mut menu = scene(
        "menu",
        vec![
            element("el_latte", "button", "Latte", "", 0),
            element("el_americano", "button", "Americano", "", 1),
            element("el_mocha", "button", "Mocha", "", 2),
            element("el_back", "button", "", "Back", 3),
        ],
    );
    menu.transitions.push(
        TransitionRule::on(ActionType::Click, Some("el_latte"), "sweetness")
            .with_note("The latte customization sheet opened with sweetness options"),
    );
    menu.transitions.push(TransitionRule::on(
        ActionType::Click,
        Some("el_back"),
        "home",
    ));
    let mut sweet = scene(
        "sweetness",
        vec![
            element("el_full_sugar", "radio", "Full sugar", "", 0),
            element("el_half_sugar", "radio", "Half sugar", "", 1),
            element("el_no_sugar", "radio", "No sugar", "", 2),
            element("el_place_order", "button", "Place order", "", 3),
        ],
    );
    sweet.is_goal = true;
    let scenario = Scenario::from_parts(meta("coffee", "home"), vec![home, menu, sweet])
        .expect("coffee scenario is valid");
    let latte = ActionCommand::click("el_latte");
    let policy = Policy::default()
        .plan("home", "open the coffee app")
        .plan("menu", "choose a latte")
        .plan("sweetness", "confirm the latte order")
        .decide(
            "home",
            ActionCommand::click("el_coffee"),
            "Click on the coffee app icon to open it",
        )
        .decide(
            "menu",
            latte.clone(),
            "Click on Latte to customize the drink",
        )
        .decide("sweetness", ActionCommand::complete(), "Task finished")
        .ask_after(&latte, SWEETNESS_QUERY)
        .recall(["el_coffee", "el_latte"]);
    (scenario, policy)
}

pub const DECOY_TASK: &str = "search for running shoes";
pub const DECOY_ID: &str = "el_search_label";

/// A search label that looks right but does nothing, next to the real
/// search box.
pub fn decoy() -> (Scenario, Policy) {
    let mut home = scene(
        "home",
        vec![
            element("el_logo", "image", "", "Store logo", 0),
            element(DECOY_ID, "text_view", "Search", "", 1),
            element("el_search_box", "edit_text", "", "search box", 2),
            element("el_cart", "button", "", "Cart", 3),
            element("el_profile", "button", "", "Profile", 4),
        ],
    );
    home.transitions.push(
        TransitionRule::on(ActionType::Click, Some("el_search_box"), "search_input")
            .with_note("The keyboard appeared and the search box is focused"),
    );
    let mut input = scene(
        "search_input",
        vec![
            element("el_query", "edit_text", "", "search box", 0),
            element("el_cancel", "button", "Cancel", "", 1),
        ],
    );
    input.transitions.push(
        TransitionRule::on(ActionType::InputText, Some("el_query"), "results")
            .with_note("Search results for running shoes are shown"),
    );
    input.transitions.push(TransitionRule::on(
        ActionType::Click,
        Some("el_cancel"),
        "home",
    ));
    let mut results = scene(
        "results",
        vec![
            element("el_item_1", "card", "Trail runner", "", 0),
            element("el_item_2", "card", "Road runner", "", 1),
        ],
    );
    results.is_goal = true;
    let scenario = Scenario::from_parts(meta("decoy", "home"), vec![home, input, results])
        .expect("decoy scenario is valid");
    let wrong = ActionCommand::click(DECOY_ID);
    let type_query = ActionCommand::new(
        ActionType::InputText,
        Some("el_query".into()),
        Some("running shoes".into()),
    )
    .expect("valid input action");
    let policy = Policy::default()
        .plan("home", "click the search bar")
        .plan("search_input", "type the search query")
        .plan("results", "confirm the results are shown")
        .decide(
            "home",
            wrong.clone(),
            "Click on the search bar to begin entering the query",
        )
        .decide(
            "home",
            ActionCommand::click("el_search_box"),
            "Click on the search box to begin entering the query",
        )
        .decide(
            "search_input",
            type_query,
            "Type running shoes into the search box",
        )
        .decide("results", ActionCommand::complete(), "Task finished")
        .fail_note(
            &wrong,
            "The search bar was clicked, but no keyboard appeared",
        )
        .recall([DECOY_ID, "el_search_box", "el_query"]);
    (scenario, policy)
}

pub const SHOPPING_GOAL: &str = "open a shopping app";
pub const SHOPPING_APPS: [&str; 5] = ["el_taobao", "el_jd", "el_pdd", "el_amazon", "el_ebay"];

/// Launcher with 47 icons, five of them shopping apps.
pub fn shopping_home() -> (Scenario, Policy) {
    let shops = [
        ("el_taobao", "Taobao"),
        ("el_jd", "JD"),
        ("el_pdd", "Pinduoduo"),
        ("el_amazon", "Amazon"),
        ("el_ebay", "eBay"),
    ];
    let others = [
        "Mail",
        "Maps",
        "Camera",
        "Weather",
        "Clock",
        "Calculator",
        "Calendar",
        "Contacts",
        "Phone",
        "Messages",
        "Music",
        "Videos",
        "Gallery",
        "Notes",
        "Files",
        "Settings",
        "Compass",
        "Recorder",
        "Radio",
        "Podcasts",
        "Books",
        "News",
        "Translate",
        "Health",
        "Fitness",
        "Wallet",
        "Banking",
        "Stocks",
        "Flashlight",
        "Scanner",
        "Keyboard",
        "Themes",
        "Backup",
        "Security",
        "Cleaner",
        "Battery",
        "Browser",
        "Reminders",
        "Tips",
        "Feedback",
        "Games",
        "Magnifier",
    ];
    let mut els = Vec::new();
    for (i, (id, name)) in shops.iter().enumerate() {
        els.push(element(
            id,
            "icon",
            name,
            &format!("{name} shopping app"),
            i as i32,
        ));
    }
    for (i, name) in others.iter().enumerate() {
        let id = format!("el_{}", name.to_lowercase());
        els.push(element(&id, "icon", name, "", (i + shops.len()) as i32));
    }
    let home = scene("launcher", els);
    let scenario =
        Scenario::from_parts(meta("shopping-home", "launcher"), vec![home]).expect("valid");
    let policy = Policy::default()
        .plan("launcher", SHOPPING_GOAL)
        .recall(SHOPPING_APPS);
    (scenario, policy)
}

/// Ground truth helper for benchmark scenes.
pub fn click_truth(target: &str) -> GroundTruth {
    GroundTruth {
        action_type: ActionType::Click,
        target_element_id: target.into(),
    }
}

/// Writes `scenario` as a bundle under `dir` together with a `script.jsonl`
/// recorded from running `task` once with `policy` and the given answers.
/// Returns the recorded run.
pub fn record_bundle(
    dir: &std::path::Path,
    scenario: &Scenario,
    policy: Policy,
    task: &str,
    answers: &[&str],
    config: crate::orchestrator::SessionConfig,
) -> std::io::Result<crate::orchestrator::RunReport> {
    use crate::llm::{HashEmbedder, RecordingProvider};
    use crate::orchestrator::{Agent, ScriptedFeedback};

    let io = |e: &dyn std::fmt::Display| std::io::Error::other(e.to_string());
    scenario.save_bundle(dir).map_err(|e| io(&e))?;
    let mut fresh = Scenario::load(dir).map_err(|e| io(&e))?;
    let recorder = RecordingProvider::new(policy);
    let embed = HashEmbedder::default();
    let agent = Agent::new(&recorder, &embed, config).map_err(|e| io(&e))?;
    let feedback = ScriptedFeedback::new(answers.iter().copied());
    let report = agent.run_task(task, &mut fresh, &feedback, None);
    let path = dir.join(crate::bench::SCRIPT_FILE);
    let mut merged = BTreeMap::new();
    if let Ok(text) = std::fs::read_to_string(&path) {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let e: crate::llm::ScriptEntry = serde_json::from_str(line).map_err(|e| io(&e))?;
            merged.insert((e.role, e.digest.clone()), e);
        }
    }
    for e in recorder.entries() {
        merged.insert((e.role, e.digest.clone()), e);
    }
    let text: String = merged
        .values()
        .map(|e| serde_json::to_string(e).expect("serializable") + "\n")
        .collect();
    std::fs::write(path, text)?;
    Ok(report)
}

pub const SUITE_NAME: &str = "complexaction-synth";

fn suite_spec(seed: u64) -> (usize, crate::bench::TargetSpec) {
    use crate::bench::{ActionLabel, Overlap, TargetSpec};
    let label = ActionLabel::ALL[((seed - 1) / 4) as usize];
    let overlap = match seed {
        s if s % 4 == 0 => Overlap::High,
        1 | 5 | 9 | 13 => Overlap::Low,
        _ => Overlap::None,
    };
    (
        100 + (seed as usize - 1) * 21,
        TargetSpec { label, overlap },
    )
}

/// Twenty generated cases (seeds 1 to 20, four per label, 100 to 499
/// elements) and a policy that picks the ground truth when the default
/// recommender offers it and otherwise the top recommended element. The
/// same element is chosen with and without recommendation.
pub fn complexaction_suite() -> (Vec<crate::bench::BenchmarkCase>, Policy) {
    use crate::crm::{CrmConfig, Recommender};
    use crate::llm::HashEmbedder;

    let embed = HashEmbedder::default();
    let mut policy = Policy::default();
    let mut cases = Vec::new();
    for seed in 1..=20 {
        let (n, spec) = suite_spec(seed);
        let case = crate::bench::synthetic_case(seed, n, spec);
        let scene = &case.scene;
        policy = policy.plan(&scene.scene_id, &case.instruction);
        let goal = crate::model::Subgoal::new(case.instruction.clone()).expect("non-empty");
        let set = Recommender::new(&policy, &embed, CrmConfig::default()).recommend(
            &goal,
            &scene.state,
            &Default::default(),
        );
        let truth = &scene
            .ground_truth
            .as_ref()
            .expect("generated")
            .target_element_id;
        let (target, desc) = if set.contains(truth) {
            (
                truth.as_str(),
                "Click the element that matches the instruction",
            )
        } else {
            (set.ids()[0], "Click the closest match")
        };
        policy = policy.decide(&scene.scene_id, ActionCommand::click(target), desc);
        cases.push(case);
    }
    (cases, policy)
}
