//! Timing replay over historical command logs.
//!
//! Replay runs classification and scheduling only. Reflection content is
//! irrelevant to when things fire, so no prompts are built.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::matcher::{InterventionType, SqlEvent};
use crate::scheduler::{ClockMode, DrainMode, SchedulerConfig, DEFAULT_TAU_S};
use crate::session::{self, LogError, LogKind, LogRecord, SessionState};

pub const DEFAULT_EDGES: [f64; 3] = [60.0, 120.0, 300.0];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("bucket edges must be positive and strictly increasing, got {0:?}")]
    BadEdges(Vec<f64>),
    #[error("tau must be finite and non-negative, got {0}")]
    BadTau(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub tau_s: f64,
    pub scheduling_enabled: bool,
    pub clock: ClockMode,
    pub edges: Vec<f64>,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            tau_s: DEFAULT_TAU_S,
            scheduling_enabled: true,
            clock: ClockMode::LastShown,
            edges: DEFAULT_EDGES.to_vec(),
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        validate_edges(&self.edges)?;
        if !self.tau_s.is_finite() || self.tau_s < 0.0 {
            return Err(ReplayError::BadTau(self.tau_s));
        }
        Ok(())
    }
}

pub fn validate_edges(edges: &[f64]) -> Result<(), ReplayError> {
    let ok = !edges.is_empty()
        && edges.iter().all(|e| e.is_finite() && *e > 0.0)
        && edges.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(ReplayError::BadEdges(edges.to_vec()))
    }
}

/// All records of one session, in timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub session: String,
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn commands(&self) -> impl Iterator<Item = SqlEvent> + '_ {
        self.records.iter().filter(|r| r.kind == LogKind::Command).map(LogRecord::to_event)
    }
}

/// Group records by session (first-appearance order) and sort each group
/// by timestamp. The sort is stable, so ties keep file order.
pub fn group_records(records: Vec<LogRecord>) -> Vec<SessionLog> {
    let mut groups: Vec<SessionLog> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let i = *index.entry(r.session.clone()).or_insert_with(|| {
            groups.push(SessionLog {
                session: r.session.clone(),
                records: Vec::new(),
            });
            groups.len() - 1
        });
        groups[i].records.push(r);
    }
    for g in &mut groups {
        g.records.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    }
    groups
}

pub fn load_log(path: &Path) -> Result<Vec<SessionLog>, LogError> {
    Ok(group_records(session::read_log(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Firing {
    pub session: String,
    pub ts: f64,
    pub task: u8,
    pub intervention: InterventionType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub lo: f64,
    /// `None` for the open-ended last bucket.
    pub hi: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub buckets: Vec<Bucket>,
    pub total: usize,
    /// Share of the last bucket, in percent, rounded to one decimal.
    pub percent_at_or_above_last_edge: f64,
}

fn fmt_secs(s: f64) -> String {
    if s.fract() == 0.0 {
        format!("{}", s as i64)
    } else {
        format!("{s}")
    }
}

/// Bucket `intervals` into `[0,e1), [e1,e2), ..., [en,inf)`.
pub fn interval_histogram(intervals: &[f64], edges: &[f64]) -> Histogram {
    let mut buckets: Vec<Bucket> = Vec::with_capacity(edges.len() + 1);
    let mut lo = 0.0;
    for &e in edges {
        buckets.push(Bucket {
            label: format!("{}-{}s", fmt_secs(lo), fmt_secs(e)),
            lo,
            hi: Some(e),
            count: 0,
        });
        lo = e;
    }
    buckets.push(Bucket {
        label: format!(">={}s", fmt_secs(lo)),
        lo,
        hi: None,
        count: 0,
    });
    for &x in intervals {
        let i = edges.iter().position(|&e| x < e).unwrap_or(edges.len());
        buckets[i].count += 1;
    }
    let total = intervals.len();
    let last = buckets.last().map_or(0, |b| b.count);
    Histogram {
        buckets,
        total,
        percent_at_or_above_last_edge: percent(last, total),
    }
}

pub fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (count as f64 / total as f64 * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub firings: Vec<Firing>,
    pub intervals: Vec<f64>,
    pub histogram: Histogram,
    pub total_intervals: usize,
    pub percent: f64,
}

/// Firing times for one session.
fn replay_session(log: &SessionLog, cfg: &ReplayConfig) -> Vec<Firing> {
    let sched = SchedulerConfig {
        tau_s: cfg.tau_s,
        drain: DrainMode::EventDriven,
        clock: cfg.clock,
    };
    let mut state = SessionState::new(log.session.clone(), sched).expect("config validated by caller");
    let mut firings = Vec::new();
    let mut fire = |ts: f64, task: u8, intervention| {
        firings.push(Firing {
            session: log.session.clone(),
            ts,
            task,
            intervention,
        })
    };
    for (i, record) in log.records.iter().enumerate() {
        match record.kind {
            LogKind::TaskAdvance => match state.advance_task(record.task, record.ts) {
                Ok(flushed) => flushed.iter().for_each(|r| fire(record.ts, record.task, r.intervention)),
                Err(e) => tracing::warn!(session = %log.session, record = i, error = %e, "skipping task record"),
            },
            LogKind::Command => {
                // logs without explicit task records carry the task on each command
                if record.task > state.task_id() {
                    if let Ok(flushed) = state.advance_task(record.task, record.ts) {
                        flushed.iter().for_each(|r| fire(record.ts, record.task, r.intervention));
                    }
                }
                let mut ev = record.to_event();
                ev.task_id = state.task_id();
                let triggers = match state.record_command(ev) {
                    Ok(t) => t,
                    Err(e) => {
                        tracing::warn!(session = %log.session, record = i, error = %e, "skipping command record");
                        continue;
                    }
                };
                let task = state.task_id();
                for t in triggers {
                    if !cfg.scheduling_enabled {
                        fire(record.ts, task, t.matched.intervention_type());
                        continue;
                    }
                    let r = state.static_reflection(&t);
                    if let Some(shown) = state.offer(r, record.ts).into_shown() {
                        fire(record.ts, task, shown.intervention);
                    }
                }
            }
        }
    }
    firings
}

/// Replay every session and pool per-session firing gaps.
pub fn replay(log: &[SessionLog], cfg: &ReplayConfig) -> Result<ReplayReport, ReplayError> {
    cfg.validate()?;
    let mut firings = Vec::new();
    let mut intervals = Vec::new();
    for session in log {
        let f = replay_session(session, cfg);
        intervals.extend(f.windows(2).map(|w| w[1].ts - w[0].ts));
        firings.extend(f);
    }
    let histogram = interval_histogram(&intervals, &cfg.edges);
    Ok(ReplayReport {
        total_intervals: intervals.len(),
        percent: histogram.percent_at_or_above_last_edge,
        firings,
        intervals,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub range: String,
    pub counts: Vec<usize>,
}

/// Rows are interval ranges, columns are tau values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub taus: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub totals: Vec<usize>,
    pub percents: Vec<f64>,
}

pub fn sweep_tau(log: &[SessionLog], taus: &[f64], edges: &[f64]) -> Result<SweepTable, ReplayError> {
    validate_edges(edges)?;
    let reports = taus
        .iter()
        .map(|&tau_s| {
            replay(
                log,
                &ReplayConfig {
                    tau_s,
                    scheduling_enabled: true,
                    clock: ClockMode::LastShown,
                    edges: edges.to_vec(),
                },
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let template = interval_histogram(&[], edges);
    let rows = template
        .buckets
        .iter()
        .enumerate()
        .map(|(i, b)| SweepRow {
            range: b.label.clone(),
            counts: reports.iter().map(|r| r.histogram.buckets[i].count).collect(),
        })
        .collect();
    Ok(SweepTable {
        taus: taus.to_vec(),
        rows,
        totals: reports.iter().map(|r| r.total_intervals).collect(),
        percents: reports.iter().map(|r| r.percent).collect(),
    })
}

pub fn render_report_table(report: &ReplayReport) -> String {
    let mut out = String::new();
    let sessions: std::collections::BTreeSet<&str> = report.firings.iter().map(|f| f.session.as_str()).collect();
    let _ = writeln!(out, "sessions: {}  firings: {}  intervals: {}", sessions.len(), report.firings.len(), report.total_intervals);
    let _ = writeln!(out, "{:<12} {:>8} {:>8}", "interval", "count", "percent");
    for b in &report.histogram.buckets {
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>7.1}%",
            b.label,
            b.count,
            percent(b.count, report.total_intervals)
        );
    }
    out
}

pub fn render_report_csv(report: &ReplayReport) -> String {
    let mut out = String::from("range,count\n");
    for b in &report.histogram.buckets {
        let _ = writeln!(out, "{},{}", b.label, b.count);
    }
    out
}

pub fn render_sweep_table(table: &SweepTable) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "interval");
    for t in &table.taus {
        let _ = write!(out, " {:>10}", format!("tau={}", fmt_secs(*t)));
    }
    out.push('\n');
    for row in &table.rows {
        let _ = write!(out, "{:<12}", row.range);
        for c in &row.counts {
            let _ = write!(out, " {c:>10}");
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<12}", "total");
    for c in &table.totals {
        let _ = write!(out, " {c:>10}");
    }
    out.push('\n');
    let _ = write!(out, "{:<12}", "% last");
    for p in &table.percents {
        let _ = write!(out, " {:>10}", format!("{p:.1}"));
    }
    out.push('\n');
    out
}

pub fn render_sweep_csv(table: &SweepTable) -> String {
    let mut out = String::from("range");
    for t in &table.taus {
        let _ = write!(out, ",tau_{}", fmt_secs(*t));
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.range);
        for c in &row.counts {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Parameters for [`synthetic_log`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub sessions: usize,
    pub commands_per_task: usize,
    pub mean_gap_s: f64,
    /// Probability that a command is a trigger.
    pub trigger_density: f64,
    pub tasks: u8,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            sessions: 4,
            commands_per_task: 30,
            mean_gap_s: 45.0,
            trigger_density: 0.4,
            tasks: 3,
        }
    }
}

fn trigger_sql(t: InterventionType, n: usize) -> String {
    match t {
        InterventionType::DatatypeComparison => format!("ALTER TABLE employees MODIFY col_{n} INT"),
        InterventionType::CompositeVsMultiSingle => format!("CREATE INDEX idx_{n} ON employees (hire_date)"),
        InterventionType::CompositeIndColOrder => format!("CREATE INDEX idx_{n} ON employees (last_name, first_name)"),
        InterventionType::DenormalizationWhen => format!(
            "SELECT e.first_name, s.salary FROM employees e INNER JOIN salaries s ON e.emp_no = s.emp_no WHERE s.salary > {n}"
        ),
        InterventionType::TableChoiceDenormalization => format!(
            "CREATE TABLE denorm_{n} AS (SELECT e.emp_no, t.title FROM employees e INNER JOIN titles t ON e.emp_no = t.emp_no)"
        ),
    }
}

fn plain_sql(rng: &mut impl Rng, n: usize) -> String {
    match rng.random_range(0..4) {
        0 => format!("SELECT * FROM employees WHERE emp_no = {n}"),
        1 => format!("SELECT count(*) FROM salaries WHERE salary > {n}"),
        2 => "SHOW INDEX FROM employees".to_string(),
        _ => format!("EXPLAIN SELECT * FROM titles WHERE emp_no = {n}"),
    }
}

/// Seeded synthetic command log with exponential inter-command gaps.
/// Timestamps are rounded to milliseconds and strictly increasing.
pub fn synthetic_log(cfg: &SyntheticConfig) -> Vec<LogRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gap = Exp::new(1.0 / cfg.mean_gap_s.max(1e-3)).expect("rate is positive");
    let mut out = Vec::new();
    for s in 0..cfg.sessions {
        let session = format!("group-{:02}", s + 1);
        let mut ts = 0.0_f64;
        let mut n = 0;
        for task in 1..=cfg.tasks.max(1) {
            if task > 1 {
                ts = ((ts + gap.sample(&mut rng)) * 1000.0).round() / 1000.0 + 0.001;
                out.push(LogRecord::task_advance(&session, task, ts));
            }
            for _ in 0..cfg.commands_per_task {
                n += 1;
                ts = ((ts + gap.sample(&mut rng)) * 1000.0).round() / 1000.0 + 0.001;
                let sql = if rng.random_bool(cfg.trigger_density.clamp(0.0, 1.0)) {
                    let t = InterventionType::ALL[rng.random_range(0..InterventionType::ALL.len())];
                    trigger_sql(t, n)
                } else {
                    plain_sql(&mut rng, n)
                };
                out.push(LogRecord {
                    ts,
                    session: session.clone(),
                    task,
                    author: Some(format!("student{}", rng.random_range(1..=4))),
                    sql,
                    kind: LogKind::Command,
                });
            }
        }
    }
    out
}

pub fn write_log(path: &Path, records: &[LogRecord]) -> std::io::Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(std::io::Error::other)?);
        text.push('\n');
    }
    std::fs::write(path, text)
}
