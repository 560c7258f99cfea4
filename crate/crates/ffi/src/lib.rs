//! C interface to the recagent engine.
//!
//! Structured values cross the boundary as JSON strings in the same
//! record format the CLI and service use. Every function returns a
//! [`RecagentStatus`]; on failure `recagent_last_error` describes it.
//! Strings handed out must be released with `recagent_string_free`.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use recagent::crm::Recommender;
use recagent::llm::{HashEmbedder, ScriptedProvider};
use recagent::model::{from_canonical, to_canonical, ActionCommand, Subgoal};
use recagent::orchestrator::{Agent, ScriptedFeedback, SessionConfig};
use recagent::sim::{EnvSnapshot, Environment, Scenario, SimError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecagentStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON or a value that fails validation.
    InvalidInput = 3,
    /// Missing or unreadable fixture files.
    Io = 4,
    /// Action or snapshot rejected by the simulator.
    Rejected = 5,
    Panic = 6,
}

/// A loaded scenario instance.
pub struct RecagentScenario {
    inner: Scenario,
}

/// A restorable point in one scenario instance.
pub struct RecagentSnapshot {
    inner: EnvSnapshot,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(RecagentStatus, String);

type Result<T> = std::result::Result<T, Failure>;

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<()>) -> RecagentStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RecagentStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RecagentStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str> {
    if p.is_null() {
        return Err(Failure(
            RecagentStatus::NullArgument,
            format!("{name} is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RecagentStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, name).map(Some)
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure(RecagentStatus::InvalidInput, e.to_string())
}

fn sim_failure(e: SimError) -> Failure {
    let status = match e {
        SimError::Io { .. } => RecagentStatus::Io,
        SimError::Parse { .. } | SimError::Integrity(_) => RecagentStatus::InvalidInput,
        _ => RecagentStatus::Rejected,
    };
    Failure(status, e.to_string())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<()> {
    if out.is_null() {
        return Err(Failure(
            RecagentStatus::NullArgument,
            "output pointer is null".into(),
        ));
    }
    let c = CString::new(s).map_err(invalid)?;
    *out = c.into_raw();
    Ok(())
}

fn session_config(json: Option<&str>) -> Result<SessionConfig> {
    let config: SessionConfig = match json {
        Some(j) => serde_json::from_str(j).map_err(invalid)?,
        None => SessionConfig::default(),
    };
    config.validate().map_err(invalid)?;
    Ok(config)
}

fn script(path: Option<&str>) -> Result<Option<ScriptedProvider>> {
    path.map(|p| ScriptedProvider::load(p).map_err(|e| Failure(RecagentStatus::Io, e.to_string())))
        .transpose()
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn recagent_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn recagent_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn recagent_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads the bundle directory `dir`.
///
/// # Safety
/// `dir` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recagent_scenario_load(
    dir: *const c_char,
    out: *mut *mut RecagentScenario,
) -> RecagentStatus {
    guard(|| {
        let dir = text(dir, "dir")?;
        if out.is_null() {
            return Err(Failure(RecagentStatus::NullArgument, "out is null".into()));
        }
        let inner = Scenario::load(dir).map_err(sim_failure)?;
        *out = Box::into_raw(Box::new(RecagentScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from `recagent_scenario_load` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn recagent_scenario_free(s: *mut RecagentScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

unsafe fn scenario<'a>(s: *mut RecagentScenario) -> Result<&'a mut Scenario> {
    s.as_mut().map(|s| &mut s.inner).ok_or(Failure(
        RecagentStatus::NullArgument,
        "scenario is null".into(),
    ))
}

/// Current screen as a JSON record.
///
/// # Safety
/// `s` must be a live scenario handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn recagent_scenario_observe(
    s: *const RecagentScenario,
    out_json: *mut *mut c_char,
) -> RecagentStatus {
    guard(|| {
        let sc = scenario(s.cast_mut())?;
        put_string(out_json, to_canonical(&sc.observe()))
    })
}

/// Applies an action record such as `{"action_type":"click","target_element_id":"el_ok"}`
/// and returns the resulting screen.
///
/// # Safety
/// `s` must be a live scenario handle; `action_json` a valid C string;
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn recagent_scenario_apply(
    s: *mut RecagentScenario,
    action_json: *const c_char,
    out_json: *mut *mut c_char,
) -> RecagentStatus {
    guard(|| {
        let sc = scenario(s)?;
        let action: ActionCommand =
            from_canonical(text(action_json, "action_json")?).map_err(invalid)?;
        let state = sc.apply_action(&action).map_err(sim_failure)?;
        put_string(out_json, to_canonical(&state))
    })
}

/// # Safety
/// `s` must be a live scenario handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn recagent_scenario_snapshot(
    s: *mut RecagentScenario,
    out: *mut *mut RecagentSnapshot,
) -> RecagentStatus {
    guard(|| {
        let sc = scenario(s)?;
        if out.is_null() {
            return Err(Failure(RecagentStatus::NullArgument, "out is null".into()));
        }
        *out = Box::into_raw(Box::new(RecagentSnapshot {
            inner: sc.snapshot(),
        }));
        Ok(())
    })
}

/// Restores a snapshot taken from the same scenario handle. The snapshot
/// stays valid and can be restored again.
///
/// # Safety
/// Both handles must be live; `out_json` may be null when the state is not
/// wanted.
#[no_mangle]
pub unsafe extern "C" fn recagent_scenario_restore(
    s: *mut RecagentScenario,
    snap: *const RecagentSnapshot,
    out_json: *mut *mut c_char,
) -> RecagentStatus {
    guard(|| {
        let sc = scenario(s)?;
        let snap = snap.as_ref().ok_or(Failure(
            RecagentStatus::NullArgument,
            "snapshot is null".into(),
        ))?;
        let state = sc.restore(&snap.inner).map_err(sim_failure)?;
        if !out_json.is_null() {
            put_string(out_json, to_canonical(&state))?;
        }
        Ok(())
    })
}

/// # Safety
/// `snap` must come from `recagent_scenario_snapshot` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn recagent_snapshot_free(snap: *mut RecagentSnapshot) {
    if !snap.is_null() {
        drop(Box::from_raw(snap));
    }
}

/// Candidate set for `goal` on the current screen.
///
/// `script_path` holds scripted recall responses; when null the model
/// pathway is skipped. `config_json` is a session config record or null
/// for defaults. `excluded_json` is a JSON array of element ids or null.
///
/// # Safety
/// `s` must be a live handle; string arguments valid C strings or null
/// where allowed; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn recagent_recommend(
    s: *const RecagentScenario,
    goal: *const c_char,
    script_path: *const c_char,
    config_json: *const c_char,
    excluded_json: *const c_char,
    out_json: *mut *mut c_char,
) -> RecagentStatus {
    guard(|| {
        let sc = scenario(s.cast_mut())?;
        let goal = Subgoal::new(text(goal, "goal")?).map_err(invalid)?;
        let mut config = session_config(optional_text(config_json, "config_json")?)?;
        let chat = script(optional_text(script_path, "script_path")?)?;
        if chat.is_none() {
            config.crm.pathways.llm = false;
        }
        let excluded: BTreeSet<String> = match optional_text(excluded_json, "excluded_json")? {
            Some(j) => serde_json::from_str(j).map_err(invalid)?,
            None => BTreeSet::new(),
        };
        let chat = chat.unwrap_or_default();
        let embed = HashEmbedder::default();
        let set =
            Recommender::new(&chat, &embed, config.crm).recommend(&goal, &sc.observe(), &excluded);
        put_string(out_json, to_canonical(&set))
    })
}

/// Runs `task` on a fresh instance of the bundle at `scenario_dir`, with
/// the scripted responses in its `script.jsonl`. `answers_json` is a JSON
/// array of feedback answers (null for none). Writes the run log: one
/// event per line, then the report line.
///
/// # Safety
/// String arguments must be valid C strings or null where allowed;
/// `out_log` writable.
#[no_mangle]
pub unsafe extern "C" fn recagent_run_task(
    scenario_dir: *const c_char,
    task: *const c_char,
    answers_json: *const c_char,
    config_json: *const c_char,
    out_log: *mut *mut c_char,
) -> RecagentStatus {
    guard(|| {
        let dir = text(scenario_dir, "scenario_dir")?;
        let task = text(task, "task")?;
        if task.trim().is_empty() {
            return Err(invalid("task is empty"));
        }
        let config = session_config(optional_text(config_json, "config_json")?)?;
        let answers: Vec<String> = match optional_text(answers_json, "answers_json")? {
            Some(j) => serde_json::from_str(j).map_err(invalid)?,
            None => Vec::new(),
        };
        let mut sc = Scenario::load(dir).map_err(sim_failure)?;
        let script_path = Path::new(dir).join(recagent::bench::SCRIPT_FILE);
        let chat = script(script_path.to_str())?.unwrap_or_default();
        let embed = HashEmbedder::default();
        let agent = Agent::new(&chat, &embed, config).map_err(invalid)?;
        let report = agent.run_task(task, &mut sc, &ScriptedFeedback::new(answers), None);
        put_string(out_log, report.to_log())
    })
}
