//! Line-oriented session driver behind `sqlreflect session`.
//!
//! Input lines:
//! - `quit` or `exit` ends the session
//! - `:task N` moves to task N
//! - `@T <sql>` submits `<sql>` at simulated time T seconds
//! - anything else is submitted at the current simulated time

use std::io::{self, BufRead, Write};

use crate::matcher::SqlEvent;
use crate::pipeline::Pipeline;
use crate::reflection::{Origin, Reflection};
use crate::scheduler::SchedulerConfig;
use crate::session::{SessionError, SessionState};

enum Line<'a> {
    Quit,
    Task(&'a str),
    Sql { at: Option<f64>, sql: &'a str },
    Blank,
}

fn parse_line(line: &str) -> Result<Line<'_>, String> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(Line::Blank);
    }
    if line.eq_ignore_ascii_case("quit") || line.eq_ignore_ascii_case("exit") {
        return Ok(Line::Quit);
    }
    if let Some(rest) = line.strip_prefix(":task") {
        return Ok(Line::Task(rest.trim()));
    }
    if let Some(rest) = line.strip_prefix('@') {
        let (ts, sql) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let at: f64 = ts.parse().map_err(|_| format!("bad timestamp `{ts}`"))?;
        return Ok(Line::Sql { at: Some(at), sql: sql.trim() });
    }
    Ok(Line::Sql { at: None, sql: line })
}

fn fmt_ts(ts: f64) -> String {
    format!("{ts:.1}")
}

fn print_reflection(out: &mut impl Write, r: &Reflection) -> io::Result<()> {
    let origin = match r.origin {
        Origin::Dynamic => "dynamic",
        Origin::StaticFallback => "static",
    };
    writeln!(out, "  >> {} {} ({origin})", r.id, r.intervention)?;
    for line in r.message.lines() {
        writeln!(out, "  | {line}")?;
    }
    Ok(())
}

/// Run a session over `input`, writing decisions and delivered messages to
/// `out`. `clock` gives the simulated time for lines without `@T`.
pub async fn run_session(
    pipeline: &Pipeline,
    session_id: &str,
    config: SchedulerConfig,
    input: impl BufRead,
    out: &mut impl Write,
    mut clock: impl FnMut() -> f64,
) -> io::Result<SessionState> {
    let mut state = SessionState::new(session_id, config).map_err(io::Error::other)?;
    for line in input.lines() {
        let line = line?;
        let parsed = match parse_line(&line) {
            Ok(p) => p,
            Err(e) => {
                writeln!(out, "error: {e}")?;
                continue;
            }
        };
        match parsed {
            Line::Blank => {}
            Line::Quit => break,
            Line::Task(n) => {
                let Ok(task) = n.parse::<u8>() else {
                    writeln!(out, "error: bad task number `{n}`")?;
                    continue;
                };
                let now = clock().max(state.last_ts());
                match state.advance_task(task, now) {
                    Ok(flushed) => {
                        writeln!(out, "[t={}] task {task} (flushed {})", fmt_ts(now), flushed.len())?;
                        for r in &flushed {
                            print_reflection(out, r)?;
                        }
                    }
                    Err(e) => writeln!(out, "error: {e}")?,
                }
            }
            Line::Sql { at, sql } => {
                let now = at.unwrap_or_else(|| clock().max(state.last_ts()));
                let ev = SqlEvent {
                    session_id: session_id.to_string(),
                    task_id: state.task_id(),
                    author: None,
                    timestamp: now,
                    raw_sql: sql.to_string(),
                };
                match pipeline.submit(&mut state, ev).await {
                    Ok(outcome) if outcome.triggers.is_empty() => writeln!(out, "[t={}] no-match", fmt_ts(now))?,
                    Ok(outcome) => {
                        for t in &outcome.triggers {
                            writeln!(out, "[t={}] {} -> {}", fmt_ts(now), t.classification, t.decision)?;
                            if let Some(r) = &t.reflection {
                                print_reflection(out, r)?;
                            }
                        }
                    }
                    Err(SessionError::EmptySql) => writeln!(out, "[t={}] no-match", fmt_ts(now))?,
                    Err(e) => writeln!(out, "error: {e}")?,
                }
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_lines() {
        let script = "@0 CREATE TABLE t (a INT, b INT)\n@5 CREATE INDEX idx_1 ON t (a, b)\nnonsense here\n:task 2\n:task 1\nquit\n@9 SELECT 1\n";
        let mut out = Vec::new();
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let state = rt
            .block_on(run_session(&Pipeline::mock(), "s", SchedulerConfig::default(), script.as_bytes(), &mut out, || 0.0))
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "[t=0.0] no-match");
        assert_eq!(lines[1], "[t=5.0] COMPOSITE_IND_COL_ORDER -> show_now");
        assert!(text.contains("[t=5.0] no-match\n[t=5.0] task 2 (flushed 0)\nerror: "));
        assert_eq!(state.events().len(), 3);
    }
}
