//! Per-session state and its append-only event log.
//!
//! A session is rebuilt by replaying its log: command lines go through
//! [`SessionState::record_command`], task lines through
//! [`SessionState::advance_task`]. Anything derivable from those two calls
//! (registry, task, scheduler, fired list) is never written to disk.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::lexer::{self, Token, TokenKind};
use crate::matcher::{self, Cursor, InterventionType, MatcherOptions, SqlEvent, TriggerMatch};
use crate::prompt;
use crate::reflection::{Origin, Reflection};
use crate::scheduler::{ScheduleDecision, SchedulerConfig, SchedulerError, SchedulerState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRegistryEntry {
    pub table: String,
    /// Most recent `CREATE TABLE` for this name, as entered. `None` when
    /// the table is known only from an `ALTER`.
    pub creation_command: Option<String>,
    /// Lower-cased column name to datatype text, in definition order.
    pub columns: IndexMap<String, String>,
    /// Datatype a column had before its latest `MODIFY`, when known.
    pub previous_types: IndexMap<String, String>,
}

impl TableRegistryEntry {
    fn new(table: &str) -> Self {
        TableRegistryEntry {
            table: table.to_string(),
            creation_command: None,
            columns: IndexMap::new(),
            previous_types: IndexMap::new(),
        }
    }
}

/// Tables seen in a session, keyed case-insensitively.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRegistry {
    tables: IndexMap<String, TableRegistryEntry>,
}

impl TableRegistry {
    pub fn get(&self, table: &str) -> Option<&TableRegistryEntry> {
        self.tables.get(&table.to_ascii_lowercase())
    }

    pub fn iter(&self) -> impl Iterator<Item = &TableRegistryEntry> {
        self.tables.values()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn creation_command(&self, table: &str) -> Option<&str> {
        self.get(table)?.creation_command.as_deref()
    }

    pub fn column_type(&self, table: &str, column: &str) -> Option<&str> {
        self.get(table)?.columns.get(&column.to_ascii_lowercase()).map(String::as_str)
    }

    /// Register a plain table definition, e.g. for fixtures or pre-loaded
    /// schemas the session never saw created.
    pub fn define(&mut self, table: &str, columns: &[(&str, &str)]) {
        let entry = self.entry(table);
        entry.columns = columns
            .iter()
            .map(|(c, t)| (c.to_ascii_lowercase(), t.to_string()))
            .collect();
    }

    fn entry(&mut self, table: &str) -> &mut TableRegistryEntry {
        self.tables
            .entry(table.to_ascii_lowercase())
            .or_insert_with(|| TableRegistryEntry::new(table))
    }

    /// Apply the schema effect of one statement, if it has any.
    pub fn apply(&mut self, statement: &str) {
        let Ok(toks) = lexer::tokenize(statement) else {
            return;
        };
        let Some(first) = toks.first() else {
            return;
        };
        if first.is_kw("CREATE") {
            self.apply_create(statement, &toks);
        } else if first.is_kw("ALTER") {
            self.apply_alter(statement);
        } else if first.is_kw("DROP") {
            self.apply_drop(&toks);
        }
    }

    fn apply_create(&mut self, statement: &str, toks: &[Token]) {
        let mut c = Cursor::new(toks);
        c.eat_kw("CREATE");
        c.eat_kw("TEMPORARY");
        if !c.eat_kw("TABLE") {
            return;
        }
        c.eat_kws(&["IF", "NOT", "EXISTS"]);
        let Some(name) = c.object_name() else {
            return;
        };
        let columns = if matcher::ctas_shape(toks).is_some() {
            IndexMap::new()
        } else if c.peek().is_some_and(|t| t.kind == TokenKind::LParen) {
            column_definitions(toks, c.pos)
        } else {
            // CREATE TABLE t LIKE u, or something we cannot read
            IndexMap::new()
        };
        let key = name.to_ascii_lowercase();
        self.tables.insert(
            key,
            TableRegistryEntry {
                table: name,
                creation_command: Some(statement.trim().to_string()),
                columns,
                previous_types: IndexMap::new(),
            },
        );
    }

    fn apply_alter(&mut self, statement: &str) {
        for m in matcher::classify_all(statement) {
            if let TriggerMatch::DatatypeComparison { table, column, new_datatype } = m {
                self.set_column_type(&table, &column, &new_datatype);
            }
        }
    }

    fn set_column_type(&mut self, table: &str, column: &str, datatype: &str) {
        let entry = self.entry(table);
        let key = column.to_ascii_lowercase();
        match entry.columns.insert(key.clone(), datatype.to_string()) {
            Some(prev) => {
                entry.previous_types.insert(key, prev);
            }
            None => {
                entry.previous_types.shift_remove(&key);
            }
        }
    }

    fn apply_drop(&mut self, toks: &[Token]) {
        let mut c = Cursor::new(toks);
        c.eat_kw("DROP");
        c.eat_kw("TEMPORARY");
        if !c.eat_kw("TABLE") {
            return;
        }
        c.eat_kws(&["IF", "EXISTS"]);
        while let Some(name) = c.object_name() {
            self.tables.shift_remove(&name.to_ascii_lowercase());
            if !c.eat_kind(TokenKind::Comma) {
                break;
            }
        }
    }
}

fn column_definitions(toks: &[Token], open: usize) -> IndexMap<String, String> {
    const CONSTRAINTS: [&str; 8] = [
        "PRIMARY", "KEY", "INDEX", "UNIQUE", "CONSTRAINT", "FOREIGN", "FULLTEXT", "CHECK",
    ];
    let Some(close) = lexer::matching_paren(toks, open) else {
        return IndexMap::new();
    };
    let mut out = IndexMap::new();
    for (s, e) in matcher::split_top_level(toks, open + 1, close) {
        let Some(name) = toks.get(s).filter(|t| t.is_ident() && s < e) else {
            continue;
        };
        if CONSTRAINTS.iter().any(|kw| name.is_kw(kw)) {
            continue;
        }
        if let Some(dt) = matcher::datatype_at(&toks[..e], s + 1) {
            out.insert(name.ident().to_ascii_lowercase(), dt);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("event at {got}s is earlier than the last recorded event at {last}s")]
    OutOfOrder { last: f64, got: f64 },
    #[error("empty SQL command")]
    EmptySql,
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

/// A reflection that reached the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiredReflection {
    pub ts: f64,
    pub intervention: InterventionType,
    pub task_id: u8,
    pub reflection_id: String,
}

/// A trigger found while recording a command.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedTrigger {
    pub event_index: usize,
    pub matched: TriggerMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionState {
    pub session_id: String,
    task_id: u8,
    events: Vec<SqlEvent>,
    registry: TableRegistry,
    scheduler: SchedulerState,
    fired: Vec<FiredReflection>,
    delivered: Vec<Reflection>,
    last_ts: f64,
    next_reflection: u64,
    #[serde(skip)]
    matcher: MatcherOptions,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>, scheduler: SchedulerConfig) -> Result<Self, SessionError> {
        Ok(SessionState {
            session_id: session_id.into(),
            task_id: 1,
            events: Vec::new(),
            registry: TableRegistry::default(),
            scheduler: SchedulerState::new(scheduler)?,
            fired: Vec::new(),
            delivered: Vec::new(),
            last_ts: 0.0,
            next_reflection: 0,
            matcher: MatcherOptions::default(),
        })
    }

    pub fn with_matcher(mut self, opts: MatcherOptions) -> Self {
        self.matcher = opts;
        self
    }

    pub fn task_id(&self) -> u8 {
        self.task_id
    }

    pub fn events(&self) -> &[SqlEvent] {
        &self.events
    }

    pub fn registry(&self) -> &TableRegistry {
        &self.registry
    }

    pub fn scheduler(&self) -> &SchedulerState {
        &self.scheduler
    }

    /// Every shown reflection, across all tasks.
    pub fn fired(&self) -> &[FiredReflection] {
        &self.fired
    }

    pub fn fired_in_task(&self, task_id: u8) -> impl Iterator<Item = &FiredReflection> {
        self.fired.iter().filter(move |f| f.task_id == task_id)
    }

    /// Timestamp of the latest recorded event or task change.
    /// Every reflection shown so far, in show order.
    pub fn delivered(&self) -> &[Reflection] {
        &self.delivered
    }

    /// Reflections shown strictly after `since`.
    pub fn delivered_since(&self, since: f64) -> impl Iterator<Item = &Reflection> {
        self.delivered.iter().filter(move |r| r.shown_at.is_some_and(|t| t > since))
    }

    pub fn last_ts(&self) -> f64 {
        self.last_ts
    }

    pub fn lookup_table_creation(&self, table: &str) -> Option<&str> {
        self.registry.creation_command(table)
    }

    pub fn lookup_column_type(&self, table: &str, column: &str) -> Option<&str> {
        self.registry.column_type(table, column)
    }

    /// Datatype a column had before `new_datatype` was applied. Works both
    /// before and after the `MODIFY` itself has been recorded.
    pub fn prior_column_type(&self, table: &str, column: &str, new_datatype: &str) -> Option<&str> {
        let entry = self.registry.get(table)?;
        let key = column.to_ascii_lowercase();
        let current = entry.columns.get(&key)?;
        if current.eq_ignore_ascii_case(new_datatype) {
            entry.previous_types.get(&key).map(String::as_str)
        } else {
            Some(current)
        }
    }

    fn check_time(&self, ts: f64) -> Result<(), SessionError> {
        if !ts.is_finite() || ts < self.last_ts {
            return Err(SessionError::OutOfOrder { last: self.last_ts, got: ts });
        }
        Ok(())
    }

    /// Append `ev`, splitting multi-statement input into one event per
    /// statement, and update the registry. Returns the triggers found.
    pub fn record_command(&mut self, ev: SqlEvent) -> Result<Vec<RecordedTrigger>, SessionError> {
        self.check_time(ev.timestamp)?;
        let statements = matcher::split_statements(&ev.raw_sql);
        if statements.is_empty() {
            return Err(SessionError::EmptySql);
        }
        self.last_ts = ev.timestamp;
        let mut triggers = Vec::new();
        for statement in statements {
            let normalized = matcher::normalize(&statement);
            let matches = matcher::classify_with(&normalized, self.matcher);
            self.registry.apply(&statement);
            let event_index = self.events.len();
            self.events.push(SqlEvent {
                session_id: self.session_id.clone(),
                task_id: self.task_id,
                author: ev.author.clone(),
                timestamp: ev.timestamp,
                raw_sql: statement,
            });
            triggers.extend(matches.into_iter().map(|matched| RecordedTrigger { event_index, matched }));
        }
        Ok(triggers)
    }

    /// Move to a later task. Entering task 3 returns the flushed queue.
    pub fn advance_task(&mut self, task_id: u8, now: f64) -> Result<Vec<Reflection>, SessionError> {
        self.check_time(now)?;
        let flushed = self.scheduler.set_task(task_id, now)?;
        self.task_id = task_id;
        self.last_ts = now;
        for r in &flushed {
            self.note_fired(r);
        }
        Ok(flushed)
    }

    /// Fresh reflection id, unique within the session.
    pub fn next_reflection_id(&mut self) -> String {
        self.next_reflection += 1;
        format!("{}-r{}", self.session_id, self.next_reflection)
    }

    pub fn offer(&mut self, r: Reflection, now: f64) -> ScheduleDecision {
        let decision = self.scheduler.offer(r, now);
        if let Some(shown) = decision.shown().cloned() {
            self.note_fired(&shown);
        }
        decision
    }

    pub fn tick(&mut self, now: f64) -> Option<Reflection> {
        let shown = self.scheduler.tick(now)?;
        self.note_fired(&shown);
        Some(shown)
    }

    fn note_fired(&mut self, r: &Reflection) {
        self.fired.push(FiredReflection {
            ts: r.shown_at.unwrap_or(r.created_at),
            intervention: r.intervention,
            task_id: self.task_id,
            reflection_id: r.id.clone(),
        });
        self.delivered.push(r.clone());
    }

    /// Reflection carrying only the static message for `trigger`. Used when
    /// content does not matter, e.g. timing-only reconstruction.
    pub fn static_reflection(&mut self, trigger: &RecordedTrigger) -> Reflection {
        let ev = &self.events[trigger.event_index];
        let (task_id, created_at, sql) = (ev.task_id, ev.timestamp, ev.raw_sql.clone());
        Reflection {
            id: self.next_reflection_id(),
            intervention: trigger.matched.intervention_type(),
            session_id: self.session_id.clone(),
            task_id,
            trigger_event: trigger.event_index,
            trigger_sql: sql,
            message: prompt::static_fallback(&trigger.matched),
            alternatives: vec![],
            origin: Origin::StaticFallback,
            created_at,
            shown_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Command,
    TaskAdvance,
}

/// One line of the session event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub ts: f64,
    pub session: String,
    pub task: u8,
    pub author: Option<String>,
    pub sql: String,
    pub kind: LogKind,
}

impl LogRecord {
    pub fn command(ev: &SqlEvent) -> Self {
        LogRecord {
            ts: ev.timestamp,
            session: ev.session_id.clone(),
            task: ev.task_id,
            author: ev.author.clone(),
            sql: ev.raw_sql.clone(),
            kind: LogKind::Command,
        }
    }

    pub fn task_advance(session: &str, task: u8, ts: f64) -> Self {
        LogRecord {
            ts,
            session: session.to_string(),
            task,
            author: None,
            sql: String::new(),
            kind: LogKind::TaskAdvance,
        }
    }

    pub fn to_event(&self) -> SqlEvent {
        SqlEvent {
            session_id: self.session.clone(),
            task_id: self.task,
            author: self.author.clone(),
            timestamp: self.ts,
            raw_sql: self.sql.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl LogError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        LogError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub fn persist_event(path: &Path, record: &LogRecord) -> Result<(), LogError> {
    let mut line = serde_json::to_string(record).map_err(|e| LogError::Malformed {
        line: 0,
        message: e.to_string(),
    })?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| LogError::io(path, e))?;
    file.write_all(line.as_bytes()).map_err(|e| LogError::io(path, e))
}

/// Read every record of a log file. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    let file = File::open(path).map_err(|e| LogError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LogError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("line {line}: {source}")]
    Replay {
        line: usize,
        #[source]
        source: SessionError,
    },
    #[error("line {line}: record belongs to session `{found}`, expected `{expected}`")]
    ForeignSession { line: usize, expected: String, found: String },
}

/// Rebuild a session from its log. Reflections are reconstructed with their
/// static text, so timing state (scheduler, fired list) matches the live
/// session while generated content is not reproduced.
pub fn load_session(path: &Path, scheduler: SchedulerConfig) -> Result<SessionState, LoadError> {
    let records = read_log(path)?;
    let fallback_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let session_id = records.first().map(|r| r.session.clone()).unwrap_or(fallback_id);
    let mut state = SessionState::new(session_id, scheduler).map_err(|source| LoadError::Replay { line: 0, source })?;
    for (i, record) in records.iter().enumerate() {
        let line = i + 1;
        if record.session != state.session_id {
            return Err(LoadError::ForeignSession {
                line,
                expected: state.session_id.clone(),
                found: record.session.clone(),
            });
        }
        let replay = |source| LoadError::Replay { line, source };
        match record.kind {
            LogKind::TaskAdvance => {
                state.advance_task(record.task, record.ts).map_err(replay)?;
            }
            LogKind::Command => {
                for trigger in state.record_command(record.to_event()).map_err(replay)? {
                    let r = state.static_reflection(&trigger);
                    state.offer(r, record.ts);
                }
            }
        }
    }
    Ok(state)
}
