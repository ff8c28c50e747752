//! Queue-based pacing of reflections.
//!
//! Within tasks 1 and 2 a reflection is shown only when more than `tau`
//! seconds have passed since the previous one. A reflection that arrives
//! too early waits in a FIFO queue holding at most one entry per
//! intervention type; a later trigger of an already-queued type releases
//! the queue head once spacing allows, and is itself discarded. Task 3
//! bypasses pacing entirely, and entering it flushes the queue.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::matcher::InterventionType;
use crate::reflection::Reflection;

pub const DEFAULT_TAU_S: f64 = 300.0;
/// Task in which pacing is switched off.
pub const UNSCHEDULED_TASK: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DrainMode {
    /// The queue only moves when a new trigger arrives.
    EventDriven,
    /// `tick` may release the queue head on a fixed interval.
    Timer { interval_s: f64 },
}

/// What spacing is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Time since the last shown reflection.
    #[default]
    LastShown,
    /// Time since the queue head was triggered; falls back to `LastShown`
    /// when the queue is empty.
    HeadTrigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub tau_s: f64,
    pub drain: DrainMode,
    pub clock: ClockMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            tau_s: DEFAULT_TAU_S,
            drain: DrainMode::EventDriven,
            clock: ClockMode::LastShown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "decision", content = "reflection", rename_all = "snake_case")]
pub enum ScheduleDecision {
    ShowNow(Reflection),
    Queued,
    ShowQueued(Reflection),
    Dropped,
}

impl ScheduleDecision {
    pub fn label(&self) -> &'static str {
        match self {
            ScheduleDecision::ShowNow(_) => "show_now",
            ScheduleDecision::Queued => "queued",
            ScheduleDecision::ShowQueued(_) => "show_queued",
            ScheduleDecision::Dropped => "dropped",
        }
    }

    pub fn shown(&self) -> Option<&Reflection> {
        match self {
            ScheduleDecision::ShowNow(r) | ScheduleDecision::ShowQueued(r) => Some(r),
            _ => None,
        }
    }

    pub fn into_shown(self) -> Option<Reflection> {
        match self {
            ScheduleDecision::ShowNow(r) | ScheduleDecision::ShowQueued(r) => Some(r),
            _ => None,
        }
    }
}

/// A reflection discarded because one of its type was already waiting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedReflection {
    pub id: String,
    pub intervention: InterventionType,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("task cannot go back from {current} to {requested}")]
    TaskRegression { current: u8, requested: u8 },
    #[error("task {0} is outside 1..=3")]
    InvalidTask(u8),
    #[error("tau must be a finite non-negative number of seconds, got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulerState {
    pending: VecDeque<Reflection>,
    last_shown_at: Option<f64>,
    tau_s: f64,
    task_id: u8,
    shown_types_this_task: BTreeSet<InterventionType>,
    drain: DrainMode,
    clock: ClockMode,
    dropped: Vec<DroppedReflection>,
}

impl SchedulerState {
    pub fn new(config: SchedulerConfig) -> Result<Self, SchedulerError> {
        if !config.tau_s.is_finite() || config.tau_s < 0.0 {
            return Err(SchedulerError::InvalidTau(config.tau_s));
        }
        Ok(SchedulerState {
            pending: VecDeque::new(),
            last_shown_at: None,
            tau_s: config.tau_s,
            task_id: 1,
            shown_types_this_task: BTreeSet::new(),
            drain: config.drain,
            clock: config.clock,
            dropped: Vec::new(),
        })
    }

    pub fn tau_s(&self) -> f64 {
        self.tau_s
    }

    pub fn task_id(&self) -> u8 {
        self.task_id
    }

    pub fn last_shown_at(&self) -> Option<f64> {
        self.last_shown_at
    }

    pub fn pending(&self) -> impl ExactSizeIterator<Item = &Reflection> {
        self.pending.iter()
    }

    pub fn shown_types_this_task(&self) -> &BTreeSet<InterventionType> {
        &self.shown_types_this_task
    }

    pub fn dropped(&self) -> &[DroppedReflection] {
        &self.dropped
    }

    pub fn config(&self) -> SchedulerConfig {
        SchedulerConfig {
            tau_s: self.tau_s,
            drain: self.drain,
            clock: self.clock,
        }
    }

    fn spacing_ok(&self, now: f64) -> bool {
        if self.clock == ClockMode::HeadTrigger {
            if let Some(head) = self.pending.front() {
                return now - head.created_at > self.tau_s;
            }
        }
        self.last_shown_at.is_none_or(|last| now - last > self.tau_s)
    }

    fn show(&mut self, mut r: Reflection, now: f64) -> Reflection {
        r.shown_at = Some(now);
        self.last_shown_at = Some(now);
        self.shown_types_this_task.insert(r.intervention);
        r
    }

    fn drop_reflection(&mut self, r: &Reflection, now: f64) {
        tracing::debug!(id = %r.id, intervention = %r.intervention, "dropping duplicate reflection");
        self.dropped.push(DroppedReflection {
            id: r.id.clone(),
            intervention: r.intervention,
            at: now,
        });
    }

    pub fn offer(&mut self, r: Reflection, now: f64) -> ScheduleDecision {
        if self.task_id == UNSCHEDULED_TASK {
            return ScheduleDecision::ShowNow(self.show(r, now));
        }
        let type_pending = self.pending.iter().any(|p| p.intervention == r.intervention);
        let spacing_ok = self.spacing_ok(now);
        match (type_pending, spacing_ok) {
            (false, true) => ScheduleDecision::ShowNow(self.show(r, now)),
            (false, false) => {
                self.pending.push_back(r);
                ScheduleDecision::Queued
            }
            (true, true) => {
                self.drop_reflection(&r, now);
                let head = self.pending.pop_front().expect("a reflection of this type is pending");
                ScheduleDecision::ShowQueued(self.show(head, now))
            }
            (true, false) => {
                self.drop_reflection(&r, now);
                ScheduleDecision::Dropped
            }
        }
    }

    /// Timer drain: release the queue head if spacing allows.
    pub fn tick(&mut self, now: f64) -> Option<Reflection> {
        if self.drain == DrainMode::EventDriven {
            tracing::debug!("tick ignored: scheduler drains on trigger events only");
            return None;
        }
        if self.pending.is_empty() || !self.spacing_ok(now) {
            return None;
        }
        let head = self.pending.pop_front()?;
        Some(self.show(head, now))
    }

    /// Move to `task_id`. Entering task 3 shows every pending reflection
    /// in queue order.
    pub fn set_task(&mut self, task_id: u8, now: f64) -> Result<Vec<Reflection>, SchedulerError> {
        if !(1..=3).contains(&task_id) {
            return Err(SchedulerError::InvalidTask(task_id));
        }
        if task_id < self.task_id {
            return Err(SchedulerError::TaskRegression {
                current: self.task_id,
                requested: task_id,
            });
        }
        if task_id == self.task_id {
            return Ok(vec![]);
        }
        self.task_id = task_id;
        self.shown_types_this_task.clear();
        if task_id != UNSCHEDULED_TASK {
            return Ok(vec![]);
        }
        let pending = std::mem::take(&mut self.pending);
        Ok(pending.into_iter().map(|r| self.show(r, now)).collect())
    }
}
