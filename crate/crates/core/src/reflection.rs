use serde::{Deserialize, Serialize};

use crate::matcher::InterventionType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Message built around LLM alternatives that passed validation.
    Dynamic,
    StaticFallback,
}

/// A discussion prompt waiting to be, or already, shown to a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub id: String,
    pub intervention: InterventionType,
    pub session_id: String,
    pub task_id: u8,
    /// Index of the triggering event in the session's event list.
    pub trigger_event: usize,
    pub trigger_sql: String,
    pub message: String,
    pub alternatives: Vec<String>,
    pub origin: Origin,
    pub created_at: f64,
    pub shown_at: Option<f64>,
}
