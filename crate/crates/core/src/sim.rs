//! Deterministic scene-graph simulator of a mobile GUI.
//!
//! A scenario is a set of scenes, each a fixed [`ScreenState`] plus a
//! transition table keyed by `(action_type, target)`. Actions without a
//! matching rule are observable no-ops; judging them is reflection's job.
//!
//! Bundle layout on disk:
//!
//! ```text
//! <bundle>/scenario.meta     {"name", "initial_scene", "canvas": {"width", "height"}}
//! <bundle>/scenes/*.json     one SceneFixture record per file
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionCommand, ActionType, ModelError, ScreenState};

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

pub const META_FILE: &str = "scenario.meta";
pub const SCENES_DIR: &str = "scenes";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed record in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("element {element_id:?} not present in state {state_id:?}")]
    UnknownElement {
        element_id: String,
        state_id: String,
    },
    #[error("snapshot {snapshot_id} belongs to another scenario instance")]
    StaleSnapshot { snapshot_id: u64 },
    #[error("invalid action: {0}")]
    InvalidAction(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Default for Canvas {
    fn default() -> Self {
        Canvas {
            width: 1080,
            height: 2400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub initial_scene: String,
    #[serde(default)]
    pub canvas: Canvas,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub match_action_type: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_target_element_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_text_payload: Option<String>,
    pub next_scene_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_note: Option<String>,
}

impl TransitionRule {
    pub fn on(action_type: ActionType, target: Option<&str>, next: impl Into<String>) -> Self {
        TransitionRule {
            match_action_type: action_type,
            match_target_element_id: target.map(str::to_string),
            match_text_payload: None,
            next_scene_id: next.into(),
            side_note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.side_note = Some(note.into());
        self
    }

    pub fn with_payload(mut self, payload: impl Into<String>) -> Self {
        self.match_text_payload = Some(payload.into());
        self
    }

    pub fn matches(&self, action: &ActionCommand) -> bool {
        self.match_action_type == action.action_type
            && self.match_target_element_id.as_deref() == action.target()
            && self
                .match_text_payload
                .as_deref()
                .is_none_or(|p| Some(p) == action.text_payload.as_deref())
    }
}

/// Ground truth of a single-step benchmark scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub action_type: ActionType,
    pub target_element_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneFixture {
    pub scene_id: String,
    pub state: ScreenState,
    #[serde(default)]
    pub transitions: Vec<TransitionRule>,
    #[serde(default)]
    pub is_goal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

impl SceneFixture {
    pub fn new(scene_id: impl Into<String>, state: ScreenState) -> Self {
        SceneFixture {
            scene_id: scene_id.into(),
            state,
            transitions: Vec::new(),
            is_goal: false,
            ground_truth: None,
        }
    }

    /// Checks the scene on its own: transition targets exist and each
    /// `(action_type, target)` pair has at most one rule.
    pub fn check_local(&self) -> Result<(), SimError> {
        self.state.validate()?;
        let mut seen = BTreeMap::new();
        for rule in &self.transitions {
            match (
                &rule.match_target_element_id,
                rule.match_action_type.requires_target(),
            ) {
                (Some(t), true) if !self.state.contains(t) => {
                    return Err(SimError::Integrity(format!(
                        "scene {:?}: transition references missing element {t:?}",
                        self.scene_id
                    )))
                }
                (Some(_), true) | (None, false) => {}
                _ => {
                    return Err(SimError::Integrity(format!(
                        "scene {:?}: {} transition has wrong target presence",
                        self.scene_id, rule.match_action_type
                    )))
                }
            }
            let key = (rule.match_action_type, rule.match_target_element_id.clone());
            if seen.insert(key, ()).is_some() {
                return Err(SimError::Integrity(format!(
                    "scene {:?}: duplicate transition for {} {:?}",
                    self.scene_id, rule.match_action_type, rule.match_target_element_id
                )));
            }
        }
        if let Some(gt) = &self.ground_truth {
            if !self.state.contains(&gt.target_element_id) {
                return Err(SimError::Integrity(format!(
                    "scene {:?}: ground truth target {:?} missing",
                    self.scene_id, gt.target_element_id
                )));
            }
        }
        Ok(())
    }
}

/// Handle to a restorable point in one scenario instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub scene_id: String,
    pub snapshot_id: u64,
    instance_id: u64,
}

/// The environment contract the orchestrator drives.
///
/// `restore` is exact for the simulator. Adapters over real devices can
/// only offer best-effort rollback, and a failed real-world action is not
/// guaranteed to leave the screen unchanged.
pub trait Environment {
    fn observe(&self) -> ScreenState;
    fn apply_action(&mut self, action: &ActionCommand) -> Result<ScreenState, SimError>;
    fn snapshot(&mut self) -> EnvSnapshot;
    fn restore(&mut self, snap: &EnvSnapshot) -> Result<ScreenState, SimError>;
    /// Side note of the transition taken by the last `apply_action`, if any.
    fn last_side_note(&self) -> Option<&str>;
}

/// A loaded scenario instance. Single owner; load twice for two sessions.
#[derive(Debug)]
pub struct Scenario {
    instance_id: u64,
    meta: ScenarioMeta,
    scenes: BTreeMap<String, SceneFixture>,
    current: String,
    next_snapshot: u64,
    last_side_note: Option<String>,
}

impl Scenario {
    pub fn from_parts(meta: ScenarioMeta, scenes: Vec<SceneFixture>) -> Result<Self, SimError> {
        let mut index = BTreeMap::new();
        for scene in scenes {
            scene.check_local()?;
            if index.contains_key(&scene.scene_id) {
                return Err(SimError::Integrity(format!(
                    "duplicate scene_id {:?}",
                    scene.scene_id
                )));
            }
            index.insert(scene.scene_id.clone(), scene);
        }
        for scene in index.values() {
            for rule in &scene.transitions {
                if !index.contains_key(&rule.next_scene_id) {
                    return Err(SimError::Integrity(format!(
                        "scene {:?} transitions to missing scene {:?}",
                        scene.scene_id, rule.next_scene_id
                    )));
                }
            }
        }
        if !index.contains_key(&meta.initial_scene) {
            return Err(SimError::Integrity(format!(
                "initial scene {:?} missing",
                meta.initial_scene
            )));
        }
        Ok(Scenario {
            instance_id: NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed),
            current: meta.initial_scene.clone(),
            meta,
            scenes: index,
            next_snapshot: 0,
            last_side_note: None,
        })
    }

    /// Reads a fixture bundle directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, SimError> {
        let (meta, scenes) = read_bundle(dir.as_ref())?;
        Scenario::from_parts(meta, scenes)
    }

    pub fn meta(&self) -> &ScenarioMeta {
        &self.meta
    }

    pub fn scene_ids(&self) -> impl Iterator<Item = &str> {
        self.scenes.keys().map(String::as_str)
    }

    pub fn scene(&self, id: &str) -> Option<&SceneFixture> {
        self.scenes.get(id)
    }

    pub fn scene_count(&self) -> usize {
        self.scenes.len()
    }

    pub fn current_scene(&self) -> &SceneFixture {
        &self.scenes[&self.current]
    }

    /// Writes the scenario as a bundle directory, scenes in id order.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<(), SimError> {
        write_bundle(dir.as_ref(), &self.meta, self.scenes.values())
    }
}

impl Environment for Scenario {
    fn observe(&self) -> ScreenState {
        self.current_scene().state.clone()
    }

    fn apply_action(&mut self, action: &ActionCommand) -> Result<ScreenState, SimError> {
        action.validate()?;
        let scene = &self.scenes[&self.current];
        if let Some(target) = action.target() {
            if !scene.state.contains(target) {
                return Err(SimError::UnknownElement {
                    element_id: target.to_string(),
                    state_id: scene.state.state_id.clone(),
                });
            }
        }
        match scene.transitions.iter().find(|r| r.matches(action)) {
            Some(rule) => {
                self.last_side_note = rule.side_note.clone();
                self.current = rule.next_scene_id.clone();
            }
            None => self.last_side_note = None,
        }
        Ok(self.observe())
    }

    fn snapshot(&mut self) -> EnvSnapshot {
        self.next_snapshot += 1;
        EnvSnapshot {
            scene_id: self.current.clone(),
            snapshot_id: self.next_snapshot,
            instance_id: self.instance_id,
        }
    }

    fn restore(&mut self, snap: &EnvSnapshot) -> Result<ScreenState, SimError> {
        if snap.instance_id != self.instance_id || !self.scenes.contains_key(&snap.scene_id) {
            return Err(SimError::StaleSnapshot {
                snapshot_id: snap.snapshot_id,
            });
        }
        self.current = snap.scene_id.clone();
        self.last_side_note = None;
        Ok(self.observe())
    }

    fn last_side_note(&self) -> Option<&str> {
        self.last_side_note.as_deref()
    }
}

fn read_file(path: &Path) -> Result<String, SimError> {
    fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_record<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, SimError> {
    serde_json::from_str(text).map_err(|e| SimError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads `scenario.meta` and every scene record of a bundle, without
/// cross-scene integrity checks.
pub fn read_bundle(dir: &Path) -> Result<(ScenarioMeta, Vec<SceneFixture>), SimError> {
    let meta_path = dir.join(META_FILE);
    let meta: ScenarioMeta = parse_record(&meta_path, &read_file(&meta_path)?)?;
    let scenes_dir = dir.join(SCENES_DIR);
    let mut paths: Vec<PathBuf> = fs::read_dir(&scenes_dir)
        .map_err(|source| SimError::Io {
            path: scenes_dir.clone(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let scenes = paths
        .iter()
        .map(|p| parse_record(p, &read_file(p)?))
        .collect::<Result<Vec<SceneFixture>, _>>()?;
    Ok((meta, scenes))
}

pub fn write_bundle<'a>(
    dir: &Path,
    meta: &ScenarioMeta,
    scenes: impl IntoIterator<Item = &'a SceneFixture>,
) -> Result<(), SimError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SimError::Io { path, source }
    };
    let scenes_dir = dir.join(SCENES_DIR);
    fs::create_dir_all(&scenes_dir).map_err(io(&scenes_dir))?;
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, pretty(meta)).map_err(io(&meta_path))?;
    for scene in scenes {
        let path = scenes_dir.join(format!("{}.json", scene.scene_id));
        fs::write(&path, pretty(scene)).map_err(io(&path))?;
    }
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}
