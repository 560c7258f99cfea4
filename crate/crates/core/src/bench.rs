//! Single-step action benchmark.
//!
//! A case is one scene with a ground-truth `(action_type, target)`. The
//! agent plans, optionally narrows candidates, and decides once; the case
//! succeeds on an exact match of both parts. Suites are directories of
//! `*.case.json` records, optionally with a `script.jsonl` for the
//! scripted provider.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crm::{CandidateSet, CrmConfig, Recommender};
use crate::llm::{ChatProvider, EmbeddingProvider};
use crate::model::{ActionCommand, ActionType, Bounds, ScreenState, UiElement};
use crate::roles::{RoleError, Roles};
use crate::sim::{GroundTruth, SceneFixture};
use crate::text::tokenize;

pub const CASE_SUFFIX: &str = ".case.json";
pub const SCRIPT_FILE: &str = "script.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionLabel {
    ClickSearchBox,
    CreateNewContent,
    LikeUpvote,
    RefreshInterface,
    SortItems,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; 5] = [
        ActionLabel::ClickSearchBox,
        ActionLabel::CreateNewContent,
        ActionLabel::LikeUpvote,
        ActionLabel::RefreshInterface,
        ActionLabel::SortItems,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionLabel::ClickSearchBox => "click_search_box",
            ActionLabel::CreateNewContent => "create_new_content",
            ActionLabel::LikeUpvote => "like_upvote",
            ActionLabel::RefreshInterface => "refresh_interface",
            ActionLabel::SortItems => "sort_items",
        }
    }

    /// Instruction and the target element's (class, text, description).
    fn template(self) -> (&'static str, &'static str, &'static str, &'static str) {
        match self {
            ActionLabel::ClickSearchBox => ("click the search box", "edit_text", "", "Search box"),
            ActionLabel::CreateNewContent => {
                ("create a new post", "image_button", "", "Compose new post")
            }
            ActionLabel::LikeUpvote => ("like this post", "image_button", "", "Like"),
            ActionLabel::RefreshInterface => ("refresh the page", "image_button", "", "Refresh"),
            ActionLabel::SortItems => ("sort the items by price", "button", "Sort by price", ""),
        }
    }

    pub fn instruction(self) -> &'static str {
        self.template().0
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("case {0}: scene has no ground truth")]
    MissingGroundTruth(String),
    #[error("case {case}: {message}")]
    InvalidCase { case: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("suite {0} has no cases")]
    EmptySuite(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub case_id: String,
    pub action_type_label: ActionLabel,
    pub scene: SceneFixture,
    pub instruction: String,
}

impl BenchmarkCase {
    pub fn validate(&self) -> Result<&GroundTruth, BenchError> {
        let gt = self
            .scene
            .ground_truth
            .as_ref()
            .ok_or_else(|| BenchError::MissingGroundTruth(self.case_id.clone()))?;
        self.scene
            .check_local()
            .map_err(|e| BenchError::InvalidCase {
                case: self.case_id.clone(),
                message: e.to_string(),
            })?;
        Ok(gt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub case_id: String,
    pub action_type_label: ActionLabel,
    pub success: bool,
    pub action_type_match: bool,
    pub target_match: bool,
    pub expected: GroundTruth,
    pub predicted: Option<ActionCommand>,
    pub total_elements: usize,
    pub candidate_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBreakdown {
    pub label: ActionLabel,
    pub n: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub mean_before: f64,
    pub max_before: usize,
    pub mean_after: f64,
    pub max_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub use_crm: bool,
    pub total: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub success_rate_text: String,
    pub breakdown: Vec<LabelBreakdown>,
    pub candidate_sizes: SizeStats,
    pub cases: Vec<CaseVerdict>,
}

/// `num/den` rounded half-up to `decimals` places, using integers only.
pub fn format_ratio(num: usize, den: usize, scale_pow10: u32, decimals: u32) -> String {
    if den == 0 {
        return "n/a".into();
    }
    let unit = 10u128.pow(decimals);
    let scaled = num as u128 * 10u128.pow(scale_pow10) * unit;
    let rounded = (scaled * 2 + den as u128) / (2 * den as u128);
    if decimals == 0 {
        return rounded.to_string();
    }
    format!(
        "{}.{:0width$}",
        rounded / unit,
        rounded % unit,
        width = decimals as usize
    )
}

/// Percentage with one decimal: 13 of 20 gives `65.0%`.
pub fn percent(num: usize, den: usize) -> String {
    match den {
        0 => "n/a".into(),
        _ => format!("{}%", format_ratio(num, den, 2, 1)),
    }
}

/// Scores the agent's single-step choice on one scene.
pub fn evaluate_case(
    chat: &dyn ChatProvider,
    embedder: &dyn EmbeddingProvider,
    crm: &CrmConfig,
    case: &BenchmarkCase,
    use_crm: bool,
) -> CaseVerdict {
    let state = &case.scene.state;
    let mut verdict = CaseVerdict {
        case_id: case.case_id.clone(),
        action_type_label: case.action_type_label,
        success: false,
        action_type_match: false,
        target_match: false,
        expected: case.scene.ground_truth.clone().unwrap_or(GroundTruth {
            action_type: ActionType::Click,
            target_element_id: String::new(),
        }),
        predicted: None,
        total_elements: state.elements.len(),
        candidate_count: 0,
        error: None,
    };
    if let Err(e) = case.validate() {
        verdict.error = Some(e.to_string());
        return verdict;
    }
    let roles = Roles::new(chat).with_temperature(crm.temperature);
    let goal = match roles.plan_subgoal(&case.instruction, state, &[]) {
        Ok(g) => g,
        Err(e) => {
            verdict.error = Some(format!("planner: {e}"));
            return verdict;
        }
    };
    let candidates = if use_crm {
        Recommender::new(chat, embedder, crm.clone()).recommend(&goal, state, &BTreeSet::new())
    } else {
        CandidateSet::unfiltered(state)
    };
    verdict.candidate_count = candidates.len();
    let predicted = match roles.decide_action(&goal, &candidates) {
        Ok((a, _)) => a,
        Err(RoleError::OutOfSetTarget { action, .. }) => {
            verdict.error = Some("decision targeted an element outside the candidates".into());
            action
        }
        Err(e) => {
            verdict.error = Some(format!("decision: {e}"));
            return verdict;
        }
    };
    verdict.action_type_match = predicted.action_type == verdict.expected.action_type;
    verdict.target_match = predicted.target() == Some(verdict.expected.target_element_id.as_str());
    verdict.success = verdict.error.is_none() && verdict.action_type_match && verdict.target_match;
    verdict.predicted = Some(predicted);
    verdict
}

/// Aggregates verdicts. Order of `verdicts` does not matter.
pub fn aggregate(mut verdicts: Vec<CaseVerdict>, use_crm: bool) -> BenchmarkReport {
    verdicts.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let total = verdicts.len();
    let successes = verdicts.iter().filter(|v| v.success).count();
    let breakdown = ActionLabel::ALL
        .iter()
        .map(|&label| {
            let of: Vec<_> = verdicts
                .iter()
                .filter(|v| v.action_type_label == label)
                .collect();
            LabelBreakdown {
                label,
                n: of.len(),
                successes: of.iter().filter(|v| v.success).count(),
            }
        })
        .collect();
    let mean = |f: fn(&CaseVerdict) -> usize| {
        if total == 0 {
            0.0
        } else {
            verdicts.iter().map(f).sum::<usize>() as f64 / total as f64
        }
    };
    let candidate_sizes = SizeStats {
        mean_before: mean(|v| v.total_elements),
        max_before: verdicts.iter().map(|v| v.total_elements).max().unwrap_or(0),
        mean_after: mean(|v| v.candidate_count),
        max_after: verdicts
            .iter()
            .map(|v| v.candidate_count)
            .max()
            .unwrap_or(0),
    };
    BenchmarkReport {
        use_crm,
        total,
        successes,
        success_rate: if total == 0 {
            0.0
        } else {
            successes as f64 / total as f64
        },
        success_rate_text: percent(successes, total),
        breakdown,
        candidate_sizes,
        cases: verdicts,
    }
}

/// Evaluates every case, in parallel, and aggregates.
pub fn evaluate_suite(
    chat: &dyn ChatProvider,
    embedder: &dyn EmbeddingProvider,
    crm: &CrmConfig,
    cases: &[BenchmarkCase],
    use_crm: bool,
) -> BenchmarkReport {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .clamp(1, 8)
        .min(cases.len().max(1));
    let chunk = cases.len().div_ceil(workers).max(1);
    let verdicts = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|c| evaluate_case(chat, embedder, crm, c, use_crm))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("case evaluation panicked"))
            .collect::<Vec<_>>()
    });
    aggregate(verdicts, use_crm)
}

impl BenchmarkReport {
    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "candidate recommendation: {}",
            if self.use_crm { "on" } else { "off" }
        );
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>8} {:>8}",
            "label", "n", "success", "rate"
        );
        for b in &self.breakdown {
            let rate = if b.n == 0 {
                "n=0".to_string()
            } else {
                percent(b.successes, b.n)
            };
            let _ = writeln!(
                out,
                "{:<20} {:>5} {:>8} {:>8}",
                b.label.as_str(),
                b.n,
                b.successes,
                rate
            );
        }
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>8} {:>8}",
            "total", self.total, self.successes, self.success_rate_text
        );
        let s = &self.candidate_sizes;
        let _ = writeln!(
            out,
            "candidates per case: mean {:.1} (max {}) of mean {:.1} (max {}) elements",
            s.mean_after, s.max_after, s.mean_before, s.max_before
        );
        out
    }
}

pub fn load_case(path: &Path) -> Result<BenchmarkCase, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let case: BenchmarkCase = serde_json::from_str(&text).map_err(|e| BenchError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    case.validate()?;
    Ok(case)
}

/// Reads every `*.case.json` in `dir`, sorted by file name.
pub fn load_suite(dir: &Path) -> Result<Vec<BenchmarkCase>, BenchError> {
    let io = |e: std::io::Error| BenchError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(CASE_SUFFIX))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(BenchError::EmptySuite(dir.to_path_buf()));
    }
    paths.iter().map(|p| load_case(p)).collect()
}

pub fn save_case(dir: &Path, case: &BenchmarkCase) -> Result<PathBuf, BenchError> {
    let path = dir.join(format!("{}{CASE_SUFFIX}", case.case_id));
    let text = serde_json::to_string_pretty(case).expect("case serializes");
    fs::write(&path, text + "\n").map_err(|e| BenchError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    None,
    Low,
    High,
}

impl Overlap {
    /// Fraction of distractors, in percent, that reuse an instruction word.
    fn percent(self) -> usize {
        match self {
            Overlap::None => 0,
            Overlap::Low => 5,
            Overlap::High => 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub label: ActionLabel,
    pub overlap: Overlap,
}

const QUALIFIERS: [&str; 16] = [
    "My", "Recent", "Saved", "Top", "Daily", "Hidden", "Shared", "Local", "Quick", "Old", "Family",
    "Work", "Travel", "Weekly", "Pinned", "Archived",
];

const NOUNS: [&str; 24] = [
    "Profile", "Wallet", "Orders", "Coupons", "Messages", "Help", "Photos", "Music", "Videos",
    "Maps", "Weather", "Notes", "Files", "Calendar", "Contacts", "Camera", "Clock", "News",
    "Games", "Books", "Tickets", "Friends", "Groups", "Alerts",
];

const CLASSES: [&str; 4] = ["button", "text_view", "image_button", "icon"];

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Deterministic scene of `n_elements` with exactly one ground-truth
/// element for `spec.label`. Distractor names avoid instruction words
/// except for the overlap share, which reuses one on purpose.
pub fn generate_synthetic_scene(seed: u64, n_elements: usize, spec: TargetSpec) -> SceneFixture {
    assert!(n_elements >= 1, "a scene needs at least one element");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (instruction, gt_class, gt_text, gt_desc) = spec.label.template();
    let words = tokenize(instruction);
    let distractors = n_elements - 1;
    let overlapping = (distractors * spec.overlap.percent()).div_ceil(100);
    let mut overlap_slots: Vec<usize> = (0..distractors).collect();
    overlap_slots.shuffle(&mut rng);
    let overlap_slots: BTreeSet<usize> = overlap_slots.into_iter().take(overlapping).collect();
    let gt_index = rng.random_range(0..n_elements);

    let cols = 10i32;
    let rows = (n_elements as i32 + cols - 1) / cols;
    let cell_w = 1080 / cols;
    let cell_h = (2200 / rows).max(2);
    let bounds = |i: usize| {
        let (c, r) = (i as i32 % cols, i as i32 / cols);
        let (l, t) = (c * cell_w, 100 + r * cell_h);
        Bounds::new(l + 1, t + 1, l + cell_w - 1, t + cell_h - 1)
    };

    let mut elements = Vec::with_capacity(n_elements);
    let mut d = 0usize;
    for i in 0..n_elements {
        let element_id = format!("el_{i:04}");
        if i == gt_index {
            elements.push(UiElement {
                element_id,
                text: gt_text.into(),
                content_description: gt_desc.into(),
                element_class: gt_class.into(),
                bounds: bounds(i),
                clickable: true,
                visible: true,
            });
            continue;
        }
        let noun = NOUNS[rng.random_range(0..NOUNS.len())];
        let name = if overlap_slots.contains(&d) {
            format!(
                "{} {noun}",
                capitalize(&words[rng.random_range(0..words.len())])
            )
        } else {
            format!(
                "{} {noun}",
                QUALIFIERS[rng.random_range(0..QUALIFIERS.len())]
            )
        };
        let class = CLASSES[rng.random_range(0..CLASSES.len())];
        let (text, desc) = if class == "image_button" || class == "icon" {
            (String::new(), name)
        } else {
            (name, String::new())
        };
        elements.push(UiElement {
            element_id,
            text,
            content_description: desc,
            element_class: class.into(),
            bounds: bounds(i),
            clickable: rng.random_bool(0.9),
            visible: true,
        });
        d += 1;
    }
    let scene_id = format!("synth-{}-{seed}", spec.label.as_str());
    let state = ScreenState::new(scene_id.clone(), elements).expect("generated scene is valid");
    let mut scene = SceneFixture::new(scene_id, state);
    scene.ground_truth = Some(GroundTruth {
        action_type: ActionType::Click,
        target_element_id: format!("el_{gt_index:04}"),
    });
    scene
}

/// A generated scene wrapped as a benchmark case.
pub fn synthetic_case(seed: u64, n_elements: usize, spec: TargetSpec) -> BenchmarkCase {
    let scene = generate_synthetic_scene(seed, n_elements, spec);
    BenchmarkCase {
        case_id: format!("case-{seed:03}-{}", spec.label.as_str()),
        action_type_label: spec.label,
        instruction: spec.label.instruction().into(),
        scene,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(label: ActionLabel, overlap: Overlap) -> TargetSpec {
        TargetSpec { label, overlap }
    }

    #[test]
    fn ratio_formatting() {
        assert_eq!(percent(13, 20), "65.0%");
        assert_eq!(format_ratio(3, 5, 0, 3), "0.600");
        assert_eq!(percent(2, 3), "66.7%");
        assert_eq!(percent(1, 8), "12.5%");
        assert_eq!(percent(0, 0), "n/a");
        assert_eq!(percent(20, 20), "100.0%");
    }

    #[test]
    fn generator_shape_and_determinism() {
        let s = spec(ActionLabel::ClickSearchBox, Overlap::High);
        let a = generate_synthetic_scene(7, 300, s);
        assert_eq!(a.state.elements.len(), 300);
        let gt = a.ground_truth.as_ref().unwrap();
        assert!(a.state.contains(&gt.target_element_id));
        a.check_local().unwrap();
        let b = generate_synthetic_scene(7, 300, s);
        assert_eq!(
            crate::model::to_canonical(&a),
            crate::model::to_canonical(&b)
        );
        assert_ne!(a, generate_synthetic_scene(8, 300, s));
    }

    #[test]
    fn single_element_scene_is_the_target() {
        let s = generate_synthetic_scene(1, 1, spec(ActionLabel::LikeUpvote, Overlap::High));
        assert_eq!(s.state.elements.len(), 1);
        assert_eq!(s.ground_truth.unwrap().target_element_id, "el_0000");
    }

    #[test]
    fn empty_bucket_reported_as_n0() {
        let r = aggregate(Vec::new(), true);
        assert_eq!(r.breakdown.len(), 5);
        assert!(r.to_table().contains("n=0"));
    }
}
