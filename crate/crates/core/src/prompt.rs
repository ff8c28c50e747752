//! Prompt construction and discussion-message rendering.
//!
//! Prompt templates are plain text files, one per LLM-backed intervention
//! type, with named placeholders:
//!
//! * `{creation_command}` – latest `CREATE TABLE` for the target table
//! * `{trigger_command}` – the statement that fired the trigger
//! * `{query}` – same as `{trigger_command}`, for query-shaped triggers
//!
//! Lines between `{#creation}` and `{/creation}` are emitted only when a
//! creation command is known. The built-in set is compiled in; a directory
//! holding `<intervention_type>.txt` files overrides individual entries.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::matcher::{self, InterventionType, TriggerMatch};
use crate::session::SessionState;

pub const DISCUSSION_HEADER: &str = "**DISCUSSION PROMPT:**";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo-instruct";
/// Chunk size used when message chunking is switched on.
pub const DEFAULT_CHUNK_CHARS: usize = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.7,
            max_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmPrompt {
    pub intervention: InterventionType,
    pub text: String,
    pub expected_alternatives: usize,
    pub params: GenerationParams,
    /// Built without the table-creation context the template asks for.
    pub degraded: bool,
}

/// Number of alternatives each prompt asks for. The datatype reflection
/// never calls the LLM.
pub fn expected_alternatives(t: InterventionType) -> usize {
    match t {
        InterventionType::DatatypeComparison => 0,
        InterventionType::CompositeVsMultiSingle => 2,
        InterventionType::CompositeIndColOrder => 3,
        InterventionType::DenormalizationWhen | InterventionType::TableChoiceDenormalization => 1,
    }
}

fn template_file_name(t: InterventionType) -> String {
    format!("{}.txt", t.as_str().to_ascii_lowercase())
}

#[derive(Debug, thiserror::Error)]
#[error("cannot read template {path}: {source}")]
pub struct TemplateError {
    path: String,
    #[source]
    source: std::io::Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: HashMap<InterventionType, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = HashMap::from([
            (
                InterventionType::CompositeIndColOrder,
                include_str!("../templates/composite_ind_col_order.txt").to_string(),
            ),
            (
                InterventionType::CompositeVsMultiSingle,
                include_str!("../templates/composite_vs_multi_single.txt").to_string(),
            ),
            (
                InterventionType::DenormalizationWhen,
                include_str!("../templates/denormalization_when.txt").to_string(),
            ),
            (
                InterventionType::TableChoiceDenormalization,
                include_str!("../templates/table_choice_denormalization.txt").to_string(),
            ),
        ]);
        TemplateSet { templates }
    }

    /// Built-in templates, overridden by any matching file in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for t in InterventionType::ALL.into_iter().filter(|t| t.uses_llm()) {
            let path = dir.join(template_file_name(t));
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    set.templates.insert(t, text);
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => {
                    return Err(TemplateError {
                        path: path.display().to_string(),
                        source,
                    })
                }
            }
        }
        Ok(set)
    }

    pub fn get(&self, t: InterventionType) -> Option<&str> {
        self.templates.get(&t).map(String::as_str)
    }
}

/// Fill `template`. Returns the text and whether a creation section had to
/// be left out.
fn instantiate(template: &str, creation: Option<&str>, trigger: &str) -> (String, bool) {
    let mut out = Vec::new();
    let mut in_creation = false;
    let mut skipped = false;
    for line in template.lines() {
        match line.trim() {
            "{#creation}" => {
                in_creation = true;
                continue;
            }
            "{/creation}" => {
                in_creation = false;
                continue;
            }
            _ => {}
        }
        if in_creation && creation.is_none() {
            skipped = true;
            continue;
        }
        out.push(
            line.replace("{creation_command}", creation.unwrap_or(""))
                .replace("{trigger_command}", trigger)
                .replace("{query}", trigger),
        );
    }
    (out.join("\n"), skipped)
}

#[derive(Debug, Clone, Default)]
pub struct PromptBuilder {
    pub templates: TemplateSet,
    pub params: GenerationParams,
}

impl PromptBuilder {
    pub fn new(templates: TemplateSet, params: GenerationParams) -> Self {
        PromptBuilder { templates, params }
    }

    /// Prompt for the reflection fired by `trigger_sql`, or `None` for
    /// the datatype reflection, which is never personalized.
    pub fn build(&self, m: &TriggerMatch, trigger_sql: &str, state: &SessionState) -> Option<LlmPrompt> {
        let intervention = m.intervention_type();
        let template = self.templates.get(intervention)?;
        let creation = match m {
            TriggerMatch::SingleColumnIndex { table, .. } | TriggerMatch::CompositeIndex { table, .. } => {
                state.lookup_table_creation(table)
            }
            _ => None,
        };
        let (text, degraded) = instantiate(template, creation, trigger_sql.trim());
        Some(LlmPrompt {
            intervention,
            text,
            expected_alternatives: expected_alternatives(intervention),
            params: self.params.clone(),
            degraded,
        })
    }
}

/// [`PromptBuilder::build`] with the built-in templates and default
/// generation parameters.
pub fn build_prompt(m: &TriggerMatch, trigger_sql: &str, state: &SessionState) -> Option<LlmPrompt> {
    PromptBuilder::default().build(m, trigger_sql, state)
}

const COL_ORDER_QUESTION: &str = "Reflect on why the order of columns matter in a composite index.";
const VS_SINGLE_QUESTION: &str =
    "When should you choose a composite index or multiple single column indices for optimization?";
const DENORM_WHEN_QUESTION: &str = "What are the trade-offs of using it?";
const TABLE_CHOICE_QUESTION: &str = "Why would/wouldn't this be appropriate? Think about the tradeoffs behind \
     choosing tables to join for denormalization.";
const UNKNOWN_PRIOR_TYPE: &str = "the previous type";

fn with_header(body: &str) -> String {
    format!("{DISCUSSION_HEADER}\n{body}")
}

fn terminated(sql: &str) -> String {
    let sql = sql.trim().trim_end_matches(';');
    format!("{sql};")
}

/// Wrap validated alternatives in the discussion frame for `m`'s type.
pub fn render_message(m: &TriggerMatch, alternatives: &[String], state: &SessionState) -> String {
    let mut lines: Vec<String> = Vec::new();
    match m {
        TriggerMatch::DatatypeComparison { table, column, new_datatype } => {
            let prior = state
                .prior_column_type(table, column, new_datatype)
                .unwrap_or(UNKNOWN_PRIOR_TYPE);
            lines.push(format!("Compare tradeoffs of using {prior} vs {new_datatype}"));
        }
        TriggerMatch::CompositeIndex { .. } => {
            lines.push("Consider the following alternative composite indices:".into());
            lines.extend(alternatives.iter().map(|a| terminated(a)));
            lines.push(COL_ORDER_QUESTION.into());
        }
        TriggerMatch::SingleColumnIndex { .. } => {
            lines.push("Consider the alternative composite index and another single column index:".into());
            let (composite, single): (Vec<_>, Vec<_>) = alternatives
                .iter()
                .partition(|a| matches!(matcher::classify(a), Some(TriggerMatch::CompositeIndex { .. })));
            lines.extend(composite.iter().map(|a| format!("Composite index: {a}")));
            lines.extend(single.iter().map(|a| format!("Single column index: {a}")));
            lines.push(VS_SINGLE_QUESTION.into());
        }
        TriggerMatch::InnerJoinSelect { .. } => {
            lines.push("Consider this SQL command for denormalization:".into());
            lines.extend(alternatives.first().map(|a| terminated(a)));
            lines.push(DENORM_WHEN_QUESTION.into());
        }
        TriggerMatch::CreateTableAsJoin { .. } => {
            lines.push("Consider this alternative denormalization:".into());
            lines.extend(alternatives.first().cloned());
            lines.push(TABLE_CHOICE_QUESTION.into());
        }
    }
    with_header(&lines.join("\n"))
}

/// Context-free message for `t`, used when no validated alternatives exist.
pub fn static_fallback_for(t: InterventionType) -> String {
    let body = match t {
        InterventionType::DatatypeComparison => {
            "Compare tradeoffs of using the previous datatype vs the one you just chose.".to_string()
        }
        InterventionType::CompositeVsMultiSingle => VS_SINGLE_QUESTION.to_string(),
        InterventionType::CompositeIndColOrder => COL_ORDER_QUESTION.to_string(),
        InterventionType::DenormalizationWhen => {
            format!("Consider denormalizing the tables joined in your query. {DENORM_WHEN_QUESTION}")
        }
        InterventionType::TableChoiceDenormalization => {
            format!("Consider removing one of the joins from your denormalized table. {TABLE_CHOICE_QUESTION}")
        }
    };
    with_header(&body)
}

pub fn static_fallback(m: &TriggerMatch) -> String {
    static_fallback_for(m.intervention_type())
}

/// Split a long message into `PART (i/n)` chunks of at most `limit`
/// body characters, breaking on line boundaries where possible.
pub fn chunk_message(message: &str, limit: usize) -> Vec<String> {
    let limit = limit.max(1);
    if message.chars().count() <= limit {
        return vec![message.to_string()];
    }
    let body = message
        .strip_prefix(DISCUSSION_HEADER)
        .map(|b| b.trim_start_matches('\n'))
        .unwrap_or(message);
    let mut parts: Vec<String> = Vec::new();
    let mut current = String::new();
    for line in body.lines() {
        let mut line = line.to_string();
        loop {
            let needed = line.chars().count() + usize::from(!current.is_empty());
            if current.chars().count() + needed <= limit {
                if !current.is_empty() {
                    current.push('\n');
                }
                current.push_str(&line);
                break;
            }
            if !current.is_empty() {
                parts.push(std::mem::take(&mut current));
                continue;
            }
            // a single line longer than the limit
            let head: String = line.chars().take(limit).collect();
            line = line.chars().skip(limit).collect();
            parts.push(head);
            if line.is_empty() {
                break;
            }
        }
    }
    if !current.is_empty() {
        parts.push(current);
    }
    let n = parts.len();
    parts
        .into_iter()
        .enumerate()
        .map(|(i, p)| format!("**DISCUSSION PROMPT: PART ({}/{n})**\n{p}", i + 1))
        .collect()
}
