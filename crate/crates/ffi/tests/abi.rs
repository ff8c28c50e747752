use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use serde_json::Value;
use sqlreflect_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Take ownership of a returned string.
unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    sr_string_free(p);
    s
}

fn last_error() -> String {
    let p = sr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn classify_returns_json() {
    let mut out = ptr::null_mut();
    let st = unsafe { sr_classify(c("CREATE INDEX i ON t (a, b); SELECT 1").as_ptr(), &mut out) };
    assert_eq!(st, SrStatus::Ok);
    let v: Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert!(sr_last_error().is_null());
}

#[test]
fn null_and_bad_utf8_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sr_classify(ptr::null(), &mut out) }, SrStatus::NullArgument);
    assert_eq!(last_error(), "sql is null");
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { sr_classify(bad.as_ptr().cast(), &mut out) }, SrStatus::InvalidUtf8);
    assert_eq!(unsafe { sr_classify(c("SELECT 1").as_ptr(), ptr::null_mut()) }, SrStatus::NullArgument);
    unsafe { sr_string_free(ptr::null_mut()) };
    unsafe { sr_session_free(ptr::null_mut()) };
}

#[test]
fn syntax_check() {
    let (mut pass, mut reason) = (-1, ptr::null_mut());
    assert_eq!(unsafe { sr_check_syntax(c("SELECT a FROM t").as_ptr(), &mut pass, &mut reason) }, SrStatus::Ok);
    assert_eq!((pass, reason.is_null()), (1, true));
    assert_eq!(unsafe { sr_check_syntax(c("SELECT a FROM").as_ptr(), &mut pass, &mut reason) }, SrStatus::Ok);
    assert_eq!(pass, 0);
    assert!(!unsafe { take(reason) }.is_empty());
}

#[test]
fn session_lifecycle() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(sr_session_new(c("x").as_ptr(), 300.0, &mut s), SrStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(sr_session_submit(s, c("CREATE TABLE t (a INT, b INT)").as_ptr(), 0.0, &mut out), SrStatus::Ok);
        take(out);
        assert_eq!(sr_session_submit(s, c("CREATE INDEX i ON t (a, b)").as_ptr(), 1.0, &mut out), SrStatus::Ok);
        let v: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["triggers"][0]["decision"], "show_now");
        assert_eq!(v["triggers"][0]["origin"], "dynamic");
        assert_eq!(sr_session_submit(s, c("CREATE INDEX j ON t (b)").as_ptr(), 2.0, &mut out), SrStatus::Ok);
        let v: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["triggers"][0]["decision"], "queued");

        assert_eq!(sr_session_submit(s, c("SELECT 1").as_ptr(), 1.0, &mut out), SrStatus::SessionError);
        assert_eq!(sr_session_advance_task(s, 3, 10.0, &mut out), SrStatus::Ok);
        let flushed: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(flushed.as_array().unwrap().len(), 1);
        assert_eq!(sr_session_advance_task(s, 2, 11.0, &mut out), SrStatus::SessionError);
        assert!(last_error().contains("task"));
        sr_session_free(s);

        assert_eq!(sr_session_new(c("y").as_ptr(), -1.0, &mut s), SrStatus::InvalidArgument);
    }
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/replay_fixture.jsonl")
}

#[test]
fn replay_matches_core() {
    let mut out = ptr::null_mut();
    let path = c(fixture().to_str().unwrap());
    assert_eq!(unsafe { sr_replay_log(path.as_ptr(), 300.0, 1, &mut out) }, SrStatus::Ok);
    let v: Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(v["intervals"], serde_json::json!([520.0, 580.0, 390.0, 80.0, 10.0]));
    assert_eq!(unsafe { sr_replay_log(c("/nonexistent.jsonl").as_ptr(), 300.0, 1, &mut out) }, SrStatus::Io);
    assert_eq!(unsafe { sr_replay_log(path.as_ptr(), f64::NAN, 1, &mut out) }, SrStatus::InvalidArgument);
}

#[test]
fn header_is_current() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sqlreflect.h")).unwrap();
    for name in [
        "sr_last_error",
        "sr_string_free",
        "sr_classify",
        "sr_check_syntax",
        "sr_session_new",
        "sr_session_free",
        "sr_session_submit",
        "sr_session_advance_task",
        "sr_replay_log",
        "typedef struct SrSession SrSession;",
        "SR_STATUS_SESSION_ERROR = 4",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compile the C demo against the header and static library and run it.
#[test]
fn c_demo_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    // tests run from target/<profile>/deps
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libsqlreflect_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("demo");
    let status = Command::new("cc")
        .arg(manifest.join("examples/demo.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("classify [{\"kind\""), "{text}");
    assert!(lines[1].starts_with("syntax 0 "), "{text}");
    assert!(lines[2].contains("\"DATATYPE_COMPARISON\"") && lines[2].contains("Compare tradeoffs of using INT vs BIGINT"), "{text}");
    assert_eq!(lines[3], "bad task 4 task 0 is outside 1..=3");
}
