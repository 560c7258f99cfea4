use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use recagent::orchestrator::RunReport;
use recagent_ffi::*;

fn fixture(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a string returned by the library.
unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    recagent_string_free(p);
    s
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(recagent_last_error()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn state_id(json: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(json).unwrap();
    v["state_id"].as_str().unwrap().to_string()
}

#[test]
fn scenario_handles_round_trip() {
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(
            recagent_scenario_load(fixture("coffee").as_ptr(), &mut sc),
            RecagentStatus::Ok
        );

        let mut out = ptr::null_mut();
        assert_eq!(recagent_scenario_observe(sc, &mut out), RecagentStatus::Ok);
        assert_eq!(state_id(&take(out)), "home");

        let mut snap = ptr::null_mut();
        assert_eq!(
            recagent_scenario_snapshot(sc, &mut snap),
            RecagentStatus::Ok
        );

        let click = cs(r#"{"action_type":"click","target_element_id":"el_coffee"}"#);
        assert_eq!(
            recagent_scenario_apply(sc, click.as_ptr(), &mut out),
            RecagentStatus::Ok
        );
        assert_eq!(state_id(&take(out)), "menu");

        assert_eq!(
            recagent_scenario_restore(sc, snap, &mut out),
            RecagentStatus::Ok
        );
        assert_eq!(state_id(&take(out)), "home");
        // restoring twice is allowed and the state can be skipped
        assert_eq!(
            recagent_scenario_restore(sc, snap, ptr::null_mut()),
            RecagentStatus::Ok
        );

        let ghost = cs(r#"{"action_type":"click","target_element_id":"el_ghost"}"#);
        assert_eq!(
            recagent_scenario_apply(sc, ghost.as_ptr(), &mut out),
            RecagentStatus::Rejected
        );
        assert!(last_error().contains("el_ghost"));

        // a snapshot from one instance does not restore another
        let mut other = ptr::null_mut();
        recagent_scenario_load(fixture("coffee").as_ptr(), &mut other);
        assert_eq!(
            recagent_scenario_restore(other, snap, ptr::null_mut()),
            RecagentStatus::Rejected
        );

        recagent_snapshot_free(snap);
        recagent_scenario_free(sc);
        recagent_scenario_free(other);
    }
}

#[test]
fn argument_errors_have_codes_and_messages() {
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(
            recagent_scenario_load(ptr::null(), &mut sc),
            RecagentStatus::NullArgument
        );
        assert!(sc.is_null());
        assert_eq!(
            recagent_scenario_load(cs("/nonexistent").as_ptr(), &mut sc),
            RecagentStatus::Io
        );
        assert!(!last_error().is_empty());

        recagent_scenario_load(fixture("coffee").as_ptr(), &mut sc);
        let mut out = ptr::null_mut();
        let bad = cs("{not json");
        assert_eq!(
            recagent_scenario_apply(sc, bad.as_ptr(), &mut out),
            RecagentStatus::InvalidInput
        );
        let bytes = [0xffu8, 0xfe, 0];
        assert_eq!(
            recagent_scenario_apply(sc, bytes.as_ptr().cast(), &mut out),
            RecagentStatus::InvalidUtf8
        );
        assert_eq!(recagent_scenario_observe(sc, &mut out), RecagentStatus::Ok);
        assert_eq!(last_error(), "");
        recagent_string_free(out);
        recagent_scenario_free(sc);
        recagent_scenario_free(ptr::null_mut());
        recagent_string_free(ptr::null_mut());
    }
}

#[test]
fn recommend_reduces_the_launcher() {
    unsafe {
        let mut sc = ptr::null_mut();
        recagent_scenario_load(fixture("shopping-home").as_ptr(), &mut sc);
        let script = PathBuf::from(fixture("shopping-home").to_str().unwrap()).join("script.jsonl");
        let script = cs(script.to_str().unwrap());
        let goal = cs("open a shopping app");
        let mut out = ptr::null_mut();
        let st = recagent_recommend(
            sc,
            goal.as_ptr(),
            script.as_ptr(),
            ptr::null(),
            ptr::null(),
            &mut out,
        );
        assert_eq!(st, RecagentStatus::Ok, "{}", last_error());
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["candidates"].as_array().unwrap().len(), 5);

        let excluded = cs(r#"["el_amazon"]"#);
        let st = recagent_recommend(
            sc,
            goal.as_ptr(),
            ptr::null(),
            ptr::null(),
            excluded.as_ptr(),
            &mut out,
        );
        assert_eq!(st, RecagentStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        let ids: Vec<&str> = v["candidates"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["element"]["element_id"].as_str().unwrap())
            .collect();
        assert!(!ids.contains(&"el_amazon"));
        recagent_scenario_free(sc);
    }
}

#[test]
fn run_task_returns_the_run_log() {
    unsafe {
        let task = cs("order a latte from the coffee app");
        let answers = cs(r#"["half sugar"]"#);
        let mut out = ptr::null_mut();
        let st = recagent_run_task(
            fixture("coffee").as_ptr(),
            task.as_ptr(),
            answers.as_ptr(),
            ptr::null(),
            &mut out,
        );
        assert_eq!(st, RecagentStatus::Ok, "{}", last_error());
        let report = RunReport::from_log(&take(out)).unwrap();
        assert_eq!(report.memory.len(), 3);
        assert_eq!(report.memory[1].user_answer.as_deref(), Some("half sugar"));

        let bad = cs(r#"{"max_steps":0}"#);
        let st = recagent_run_task(
            fixture("coffee").as_ptr(),
            task.as_ptr(),
            ptr::null(),
            bad.as_ptr(),
            &mut out,
        );
        assert_eq!(st, RecagentStatus::InvalidInput);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(recagent_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> String {
    std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/recagent.h"))
        .unwrap()
}

#[test]
fn header_declares_every_export() {
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs"))
        .unwrap();
    let h = header();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for name in exports {
        assert!(
            h.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    assert!(h.contains("typedef struct RecagentScenario RecagentScenario;"));
    assert!(h.contains("RECAGENT_STATUS_OK = 0"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let inc = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"recagent.h\"\n\
         int main(void) {\n\
           RecagentScenario *s = 0;\n\
           enum RecagentStatus st = recagent_scenario_load(\"x\", &s);\n\
           return st == RECAGENT_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(&inc)
            .arg(&src)
            .output()
            .unwrap_or_else(|e| panic!("{compiler} not runnable: {e}"));
        assert!(
            out.status.success(),
            "{compiler}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
