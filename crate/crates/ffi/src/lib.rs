//! C ABI over the sqlreflect engine.
//!
//! Every function returns an [`SrStatus`]. On failure a message is
//! available from [`sr_last_error`] on the same thread. Strings handed
//! out through `out` parameters are owned by the caller and must be
//! released with [`sr_string_free`]. Sessions use the mock completion
//! backend.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use sqlreflect::matcher::{self, SqlEvent};
use sqlreflect::pipeline::Pipeline;
use sqlreflect::replay::{self, ReplayConfig, DEFAULT_EDGES};
use sqlreflect::scheduler::{ClockMode, SchedulerConfig};
use sqlreflect::session::{SessionError, SessionState};
use sqlreflect::validator::{self, SyntaxCheck};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    SessionError = 4,
    Io = 5,
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(SrStatus, String);

impl Fail {
    fn new(status: SrStatus, msg: impl Into<String>) -> Self {
        Fail(status, msg.into())
    }
}

/// Run `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SrStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(SrStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(SrStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::new(SrStatus::NullArgument, "output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| Fail::new(SrStatus::Internal, "output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Fail> {
    serde_json::to_string(v).map_err(|e| Fail::new(SrStatus::Internal, e.to_string()))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn sr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Classify `sql` (one or more statements). Writes a JSON array of
/// matches to `out_json`.
///
/// # Safety
/// `sql` must be a NUL-terminated string; `out_json` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sr_classify(sql: *const c_char, out_json: *mut *mut c_char) -> SrStatus {
    guard(|| {
        let sql = text(sql, "sql")?;
        let matches: Vec<_> = matcher::split_statements(sql)
            .iter()
            .flat_map(|s| matcher::classify_all(s))
            .collect();
        put_string(out_json, to_json(&matches)?)
    })
}

/// Syntax-check one statement. `out_pass` receives 1 or 0; on 0 the
/// reason is written to `out_reason` when that pointer is not null.
///
/// # Safety
/// `sql` must be a NUL-terminated string; `out_pass` writable;
/// `out_reason` null or writable.
#[no_mangle]
pub unsafe extern "C" fn sr_check_syntax(sql: *const c_char, out_pass: *mut i32, out_reason: *mut *mut c_char) -> SrStatus {
    guard(|| {
        let sql = text(sql, "sql")?;
        if out_pass.is_null() {
            return Err(Fail::new(SrStatus::NullArgument, "out_pass is null"));
        }
        match validator::check_syntax(sql) {
            SyntaxCheck::Pass => *out_pass = 1,
            SyntaxCheck::Fail(reason) => {
                *out_pass = 0;
                if !out_reason.is_null() {
                    put_string(out_reason, reason)?;
                }
            }
        }
        Ok(())
    })
}

/// A live session driven by the mock backend.
pub struct SrSession {
    state: SessionState,
    pipeline: Pipeline,
    rt: tokio::runtime::Runtime,
}

/// Create a session with spacing `tau_s` seconds. Free with
/// [`sr_session_free`].
///
/// # Safety
/// `session_id` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_session_new(session_id: *const c_char, tau_s: f64, out: *mut *mut SrSession) -> SrStatus {
    guard(|| {
        let id = text(session_id, "session_id")?;
        if out.is_null() {
            return Err(Fail::new(SrStatus::NullArgument, "out is null"));
        }
        let config = SchedulerConfig {
            tau_s,
            ..SchedulerConfig::default()
        };
        let state = SessionState::new(id, config).map_err(|e| Fail::new(SrStatus::InvalidArgument, e.to_string()))?;
        let rt = tokio::runtime::Builder::new_current_thread()
            .build()
            .map_err(|e| Fail::new(SrStatus::Internal, e.to_string()))?;
        *out = Box::into_raw(Box::new(SrSession {
            state,
            pipeline: Pipeline::mock(),
            rt,
        }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or come from [`sr_session_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn sr_session_free(session: *mut SrSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

unsafe fn session_mut<'a>(p: *mut SrSession) -> Result<&'a mut SrSession, Fail> {
    p.as_mut().ok_or_else(|| Fail::new(SrStatus::NullArgument, "session is null"))
}

fn session_fail(e: SessionError) -> Fail {
    Fail::new(SrStatus::SessionError, e.to_string())
}

/// Submit a command at `ts` seconds. Writes the JSON outcome (decision
/// and delivered reflection per trigger) to `out_json`.
///
/// # Safety
/// `session` from [`sr_session_new`]; `sql` NUL-terminated; `out_json`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sr_session_submit(
    session: *mut SrSession,
    sql: *const c_char,
    ts: f64,
    out_json: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        let s = session_mut(session)?;
        let sql = text(sql, "sql")?;
        let ev = SqlEvent {
            session_id: s.state.session_id.clone(),
            task_id: s.state.task_id(),
            author: None,
            timestamp: ts,
            raw_sql: sql.to_string(),
        };
        let outcome = s.rt.block_on(s.pipeline.submit(&mut s.state, ev)).map_err(session_fail)?;
        put_string(out_json, to_json(&outcome)?)
    })
}

/// Move to `task` at `ts`. Writes the JSON array of reflections released
/// by the move (non-empty only when entering task 3).
///
/// # Safety
/// `session` from [`sr_session_new`]; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_session_advance_task(
    session: *mut SrSession,
    task: u8,
    ts: f64,
    out_json: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        let s = session_mut(session)?;
        let flushed = s.state.advance_task(task, ts).map_err(session_fail)?;
        put_string(out_json, to_json(&flushed)?)
    })
}

/// Replay a JSONL command log. `scheduling` 0 fires every trigger
/// immediately. Writes the JSON report to `out_json`.
///
/// # Safety
/// `path` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_replay_log(
    path: *const c_char,
    tau_s: f64,
    scheduling: i32,
    out_json: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        let path = text(path, "path")?;
        let log = replay::load_log(Path::new(path)).map_err(|e| Fail::new(SrStatus::Io, e.to_string()))?;
        let cfg = ReplayConfig {
            tau_s,
            scheduling_enabled: scheduling != 0,
            clock: ClockMode::LastShown,
            edges: DEFAULT_EDGES.to_vec(),
        };
        let report = replay::replay(&log, &cfg).map_err(|e| Fail::new(SrStatus::InvalidArgument, e.to_string()))?;
        put_string(out_json, to_json(&report)?)
    })
}
