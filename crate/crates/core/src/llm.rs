//! Completion backends: a live client for OpenAI-compatible `/completions`
//! endpoints and a deterministic mock used offline.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::lexer::{self, TokenKind};
use crate::matcher::{self, TriggerMatch};
use crate::prompt::{GenerationParams, LlmPrompt};

pub const API_KEY_ENV: &str = "LLM_API_KEY";
pub const DEFAULT_TIMEOUT_S: f64 = 20.0;
pub const DEFAULT_RETRIES: u32 = 2;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_s: f64,
    pub retries: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, params: &GenerationParams) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            model: params.model.clone(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            timeout_s: DEFAULT_TIMEOUT_S,
            retries: DEFAULT_RETRIES,
        }
    }

    pub fn from_prompt(p: &LlmPrompt) -> Self {
        CompletionRequest::new(p.text.clone(), &p.params)
    }

    pub fn with_limits(mut self, timeout_s: f64, retries: u32) -> Self {
        self.timeout_s = timeout_s;
        self.retries = retries;
        self
    }

    /// Wire body for the completions endpoint. Field order is fixed.
    pub fn body(&self) -> CompletionBody<'_> {
        CompletionBody {
            model: &self.model,
            prompt: &self.prompt,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CompletionBody<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Mock,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Live => "live",
            BackendKind::Mock => "mock",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(BackendKind::Live),
            "mock" => Ok(BackendKind::Mock),
            other => Err(LlmError::Config(format!("unknown backend `{other}` (expected live or mock)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub backend: BackendKind,
    pub latency_s: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("request timed out after {0}s")]
    Timeout(f64),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Protocol(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
    #[error("prompt does not match any known template")]
    UnrecognizedPrompt,
}

impl LlmError {
    fn is_transient(&self) -> bool {
        match self {
            LlmError::Timeout(_) | LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Exponential backoff with multiplicative jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub initial_s: f64,
    pub factor: f64,
    pub jitter: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            initial_s: 0.5,
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (0-based); `unit` in [-1, 1]
    /// scales the jitter.
    pub fn delay(&self, retry: u32, unit: f64) -> Duration {
        let base = self.initial_s * self.factor.powi(retry as i32);
        let scaled = base * (1.0 + self.jitter * unit.clamp(-1.0, 1.0));
        Duration::from_secs_f64(scaled.max(0.0))
    }

    fn delay_random(&self, retry: u32) -> Duration {
        self.delay(retry, rand::rng().random_range(-1.0..=1.0))
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub backoff: Backoff,
}

impl LiveConfig {
    /// Read the credential from `LLM_API_KEY`.
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| LlmError::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(LiveConfig {
            base_url: base_url.into(),
            api_key,
            backoff: Backoff::default(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    text: String,
}

#[derive(Debug, Clone)]
pub struct LiveClient {
    http: reqwest::Client,
    url: String,
    api_key: String,
    backoff: Backoff,
}

impl LiveClient {
    pub fn new(cfg: LiveConfig) -> Result<Self, LlmError> {
        if cfg.base_url.trim().is_empty() {
            return Err(LlmError::Config("llm.base_url is empty".into()));
        }
        let http = reqwest::Client::builder()
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(LiveClient {
            http,
            url: format!("{}/completions", cfg.base_url.trim_end_matches('/')),
            api_key: cfg.api_key,
            backoff: cfg.backoff,
        })
    }

    async fn attempt(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let resp = self
            .http
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .timeout(Duration::from_secs_f64(req.timeout_s))
            .json(&req.body())
            .send()
            .await
            .map_err(|e| classify_reqwest(e, req.timeout_s))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(LlmError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: CompletionResponse = resp.json().await.map_err(|e| LlmError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| LlmError::Protocol("no choices in response".into()))
    }

    pub async fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let mut retry = 0;
        loop {
            match self.attempt(req).await {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && retry < req.retries => {
                    let delay = self.backoff.delay_random(retry);
                    tracing::warn!(error = %e, retry = retry + 1, delay_s = delay.as_secs_f64(), "retrying completion");
                    tokio::time::sleep(delay).await;
                    retry += 1;
                }
                Err(e) if e.is_transient() => {
                    return Err(LlmError::Exhausted {
                        attempts: retry + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn classify_reqwest(e: reqwest::Error, timeout_s: f64) -> LlmError {
    if e.is_timeout() {
        LlmError::Timeout(timeout_s)
    } else {
        LlmError::Transport(e.to_string())
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Mock,
    Live(LiveClient),
}

/// Entry point for completions, limiting concurrent requests.
#[derive(Debug, Clone)]
pub struct LlmGateway {
    backend: Backend,
    permits: Arc<Semaphore>,
}

impl LlmGateway {
    pub fn mock() -> Self {
        LlmGateway {
            backend: Backend::Mock,
            permits: Arc::new(Semaphore::new(DEFAULT_MAX_IN_FLIGHT)),
        }
    }

    pub fn live(cfg: LiveConfig) -> Result<Self, LlmError> {
        Ok(LlmGateway {
            backend: Backend::Live(LiveClient::new(cfg)?),
            permits: Arc::new(Semaphore::new(DEFAULT_MAX_IN_FLIGHT)),
        })
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.permits = Arc::new(Semaphore::new(n.max(1)));
        self
    }

    pub fn kind(&self) -> BackendKind {
        match self.backend {
            Backend::Mock => BackendKind::Mock,
            Backend::Live(_) => BackendKind::Live,
        }
    }

    pub async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        if req.timeout_s.is_nan() || req.timeout_s <= 0.0 {
            return Err(LlmError::InvalidRequest(format!("timeout must be positive, got {}", req.timeout_s)));
        }
        let started = Instant::now();
        let text = match &self.backend {
            Backend::Mock => mock_generate(&req.prompt)?,
            Backend::Live(client) => {
                let _permit = self.permits.acquire().await.expect("semaphore is never closed");
                client.complete(req).await?
            }
        };
        Ok(CompletionResult {
            text,
            backend: self.kind(),
            latency_s: started.elapsed().as_secs_f64(),
        })
    }
}

const COL_ORDER_MARKER: &str = "Now look at this command to create a composite index:";
const VS_SINGLE_MARKER: &str = "Now look at this command to create a single column index:";
const CREATION_MARKER: &str = "Look at the following SQL table creation command:";
const DENORM_QUERY_MARKER: &str = "SQL Query:";
const DENORM_ANSWER_MARKER: &str = "Helpful Denormalization:";
const TABLE_CHOICE_MARKER: &str = "COMMAND:";
const TABLE_CHOICE_ANSWER_MARKER: &str = "ALTERNATIVE:";

/// Text between `start` and the next line beginning with `Generate`.
fn section_after<'a>(prompt: &'a str, start: &str) -> Option<&'a str> {
    let from = prompt.find(start)? + start.len();
    let rest = &prompt[from..];
    let end = rest.find("\nGenerate").unwrap_or(rest.len());
    Some(rest[..end].trim())
}

fn creation_section(prompt: &str) -> Option<&str> {
    let from = prompt.find(CREATION_MARKER)? + CREATION_MARKER.len();
    let rest = &prompt[from..];
    let end = rest.find("\nNow look at").unwrap_or(rest.len());
    Some(rest[..end].trim())
}

const CONSTRAINT_WORDS: [&str; 8] = ["PRIMARY", "KEY", "INDEX", "UNIQUE", "CONSTRAINT", "FOREIGN", "CHECK", "FULLTEXT"];

/// Output column names of a creation command, in order.
fn creation_columns(sql: &str) -> Vec<String> {
    let Ok(toks) = lexer::tokenize(sql) else {
        return vec![];
    };
    let mut cols = Vec::new();
    if let Some(shape) = matcher::ctas_shape(&toks) {
        let (s, e) = shape.body;
        let depths = lexer::depths(&toks);
        let mut list_start = s + 1;
        if toks.get(list_start).is_some_and(|t| t.is_kw("DISTINCT")) {
            list_start += 1;
        }
        let from = (list_start..e).find(|&i| depths[i] == depths[s] && toks[i].is_kw("FROM")).unwrap_or(e);
        for (a, b) in matcher::split_top_level(&toks, list_start, from) {
            if let Some(last) = toks[a..b].last().filter(|t| t.is_ident()) {
                cols.push(last.ident().to_string());
            }
        }
        return cols;
    }
    let Some(open) = toks.iter().position(|t| t.kind == TokenKind::LParen) else {
        return cols;
    };
    let close = lexer::matching_paren(&toks, open).unwrap_or(toks.len());
    for (a, b) in matcher::split_top_level(&toks, open + 1, close) {
        if let Some(first) = toks[a..b].first() {
            if first.is_ident() && !CONSTRAINT_WORDS.iter().any(|kw| first.is_kw(kw)) {
                cols.push(first.ident().to_string());
            }
        }
    }
    cols
}

/// `idx_3` becomes `idx_4`, `idx_5`, ...; other names get an `_altN` suffix.
fn alt_index_name(name: &str, k: u32) -> String {
    if let Some((stem, n)) = name.rsplit_once('_') {
        if let Ok(n) = n.parse::<u32>() {
            return format!("{stem}_{}", n + k);
        }
    }
    format!("{name}_alt{k}")
}

fn index_sql(name: &str, table: &str, cols: &[&str]) -> String {
    format!("CREATE INDEX {name} ON {table} ({});", cols.join(", "))
}

/// Pick columns from `candidates` (then generic defaults) not in `used`.
fn pick_columns(candidates: &[String], used: &[&str], n: usize) -> Vec<String> {
    let defaults = ["id", "created_at", "name"].map(String::from);
    let mut out: Vec<String> = Vec::new();
    for c in candidates.iter().chain(defaults.iter()) {
        if out.len() == n {
            break;
        }
        let taken = used.iter().any(|u| u.eq_ignore_ascii_case(c)) || out.iter().any(|o| o.eq_ignore_ascii_case(c));
        if !taken {
            out.push(c.clone());
        }
    }
    out
}

fn mock_col_order(prompt: &str) -> Result<String, LlmError> {
    let trigger = section_after(prompt, COL_ORDER_MARKER).ok_or(LlmError::UnrecognizedPrompt)?;
    let Some(TriggerMatch::CompositeIndex { index, table, columns }) = matcher::classify(trigger) else {
        return Err(LlmError::UnrecognizedPrompt);
    };
    let candidates = creation_section(prompt).map(creation_columns).unwrap_or_default();
    let used: Vec<&str> = columns.iter().map(String::as_str).collect();
    let s = pick_columns(&candidates, &used, 1).remove(0);
    let (c1, c2) = (used[0], used[1]);
    let mut swapped = vec![c2, c1];
    swapped.extend(&used[2..]);
    let alternatives = [
        index_sql(&alt_index_name(&index, 1), &table, &swapped),
        index_sql(&alt_index_name(&index, 2), &table, &[&s, c2]),
        index_sql(&alt_index_name(&index, 3), &table, &[c2, &s]),
    ];
    Ok(alternatives.join("\n"))
}

fn mock_vs_single(prompt: &str) -> Result<String, LlmError> {
    let trigger = section_after(prompt, VS_SINGLE_MARKER).ok_or(LlmError::UnrecognizedPrompt)?;
    let Some(TriggerMatch::SingleColumnIndex { index, table, column }) = matcher::classify(trigger) else {
        return Err(LlmError::UnrecognizedPrompt);
    };
    let candidates = creation_section(prompt).map(creation_columns).unwrap_or_default();
    let picked = pick_columns(&candidates, &[&column], 2);
    Ok([
        index_sql(&alt_index_name(&index, 1), &table, &[&column, &picked[0]]),
        index_sql(&alt_index_name(&index, 2), &table, &[&picked[1]]),
    ]
    .join("\n"))
}

fn mock_denormalization_when(prompt: &str) -> Result<String, LlmError> {
    let from = prompt.rfind(DENORM_QUERY_MARKER).ok_or(LlmError::UnrecognizedPrompt)? + DENORM_QUERY_MARKER.len();
    let rest = &prompt[from..];
    let end = rest.rfind(DENORM_ANSWER_MARKER).ok_or(LlmError::UnrecognizedPrompt)?;
    let query = rest[..end].trim().trim_end_matches(';').trim();
    let Some(TriggerMatch::InnerJoinSelect { tables, .. }) = matcher::classify(query) else {
        return Err(LlmError::UnrecognizedPrompt);
    };
    let name = match tables.as_slice() {
        [a, b, ..] => format!("{a}_{b}_denormalized"),
        [a] => format!("{a}_denormalized"),
        [] => "query_denormalized".to_string(),
    };
    Ok(format!("CREATE TABLE {name} AS ({query});"))
}

const JOIN_START: [&str; 8] = ["INNER", "JOIN", "LEFT", "RIGHT", "CROSS", "FULL", "NATURAL", "STRAIGHT_JOIN"];
const CLAUSE_END: [&str; 6] = ["WHERE", "GROUP", "ORDER", "HAVING", "LIMIT", "UNION"];

/// `ctas` with its last top-level inner join clause cut out.
fn remove_last_inner_join(ctas: &str) -> Option<String> {
    let toks = lexer::tokenize(ctas).ok()?;
    let (s, e) = matcher::ctas_shape(&toks)?.body;
    let depths = lexer::depths(&toks);
    let base = depths[s];
    let at_base = |i: usize| depths[i] == base;
    let join = (s..e).rev().find(|&i| {
        at_base(i)
            && toks[i].is_kw("JOIN")
            && !(i > 0 && ["LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "OUTER"].iter().any(|k| toks[i - 1].is_kw(k)))
    })?;
    let start = if join > s && toks[join - 1].is_kw("INNER") { join - 1 } else { join };
    let end = (join + 1..e)
        .find(|&i| {
            at_base(i)
                && (toks[i].kind == TokenKind::Comma
                    || JOIN_START.iter().chain(CLAUSE_END.iter()).any(|k| toks[i].is_kw(k)))
        })
        .unwrap_or(e);
    let cut_from = toks[start].span.start;
    let cut_to = if end < toks.len() { toks[end].span.start } else { ctas.len() };
    let mut out = String::with_capacity(ctas.len());
    out.push_str(ctas[..cut_from].trim_end());
    let tail = &ctas[cut_to..];
    if !tail.is_empty() && !tail.starts_with(')') {
        out.push(' ');
    }
    out.push_str(tail);
    Some(out)
}

fn mock_table_choice(prompt: &str) -> Result<String, LlmError> {
    let from = prompt.rfind(TABLE_CHOICE_MARKER).ok_or(LlmError::UnrecognizedPrompt)? + TABLE_CHOICE_MARKER.len();
    let rest = &prompt[from..];
    let end = rest.rfind(TABLE_CHOICE_ANSWER_MARKER).ok_or(LlmError::UnrecognizedPrompt)?;
    let command = rest[..end].trim().trim_end_matches(';').trim();
    let alternative = remove_last_inner_join(command).ok_or(LlmError::UnrecognizedPrompt)?;
    Ok(alternative)
}

/// Deterministic stand-in for the completion model. Recognizes the four
/// built-in prompt shapes and errors on anything else.
pub fn mock_generate(prompt: &str) -> Result<String, LlmError> {
    if prompt.contains(COL_ORDER_MARKER) {
        mock_col_order(prompt)
    } else if prompt.contains(VS_SINGLE_MARKER) {
        mock_vs_single(prompt)
    } else if prompt.trim_end().ends_with(DENORM_ANSWER_MARKER) {
        mock_denormalization_when(prompt)
    } else if prompt.trim_end().ends_with(TABLE_CHOICE_ANSWER_MARKER) {
        mock_table_choice(prompt)
    } else {
        Err(LlmError::UnrecognizedPrompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::SqlEvent;
    use crate::prompt::build_prompt;
    use crate::scheduler::SchedulerConfig;
    use crate::session::SessionState;
    use crate::validator::check_syntax;

    const ROW2_CTAS: &str = "CREATE TABLE result2 AS (SELECT employees.emp_no, dept_emp_list.dept_name, titles.title \
        FROM employees INNER JOIN dept_emp_list ON employees.emp_no=dept_emp_list.emp_no \
        INNER JOIN titles ON dept_emp_list.emp_no=titles.emp_no)";

    fn prompt_after(setup: &[&str], trigger: &str) -> String {
        let mut state = SessionState::new("s", SchedulerConfig::default()).unwrap();
        for (i, sql) in setup.iter().chain([&trigger]).enumerate() {
            state
                .record_command(SqlEvent {
                    session_id: "s".into(),
                    task_id: 1,
                    author: None,
                    timestamp: i as f64,
                    raw_sql: sql.to_string(),
                })
                .unwrap();
        }
        let m = matcher::classify(trigger).unwrap();
        build_prompt(&m, trigger, &state).unwrap().text
    }

    #[test]
    fn col_order_swaps_then_substitutes() {
        let p = prompt_after(&[ROW2_CTAS], "CREATE INDEX idx_1 ON result2 (dept_name, title)");
        let out = mock_generate(&p).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(
            lines,
            [
                "CREATE INDEX idx_2 ON result2 (title, dept_name);",
                "CREATE INDEX idx_3 ON result2 (emp_no, title);",
                "CREATE INDEX idx_4 ON result2 (title, emp_no);",
            ]
        );
        assert_eq!(mock_generate(&p).unwrap(), out);
    }

    #[test]
    fn col_order_without_creation_context() {
        let p = prompt_after(&[], "CREATE INDEX dept_title ON t (a, b, c)");
        assert_eq!(
            mock_generate(&p).unwrap(),
            "CREATE INDEX dept_title_alt1 ON t (b, a, c);\n\
             CREATE INDEX dept_title_alt2 ON t (id, b);\n\
             CREATE INDEX dept_title_alt3 ON t (b, id);"
        );
    }

    #[test]
    fn vs_single_pair() {
        let p = prompt_after(
            &["CREATE TABLE emp (emp_no INT, PRIMARY KEY (emp_no), hire_date DATE, gender CHAR(1))"],
            "CREATE INDEX idx_hire ON emp (hire_date)",
        );
        assert_eq!(
            mock_generate(&p).unwrap(),
            "CREATE INDEX idx_hire_alt1 ON emp (hire_date, emp_no);\nCREATE INDEX idx_hire_alt2 ON emp (gender);"
        );
    }

    #[test]
    fn denormalization_wraps_query() {
        let q = "SELECT e.first_name, s.salary FROM salaries s INNER JOIN employees e ON s.emp_no = e.emp_no WHERE s.salary > 100000;";
        let p = prompt_after(&[], q);
        let out = mock_generate(&p).unwrap();
        assert!(out.starts_with("CREATE TABLE salaries_employees_denormalized AS (SELECT e.first_name"));
        assert!(check_syntax(&out).is_pass());
    }

    #[test]
    fn table_choice_drops_last_join() {
        let p = prompt_after(&[], ROW2_CTAS);
        let out = mock_generate(&p).unwrap();
        assert_eq!(
            out,
            "CREATE TABLE result2 AS (SELECT employees.emp_no, dept_emp_list.dept_name, titles.title \
             FROM employees INNER JOIN dept_emp_list ON employees.emp_no=dept_emp_list.emp_no)"
        );
        assert_eq!(out.matches("INNER JOIN").count(), 1);
    }

    #[test]
    fn remove_join_keeps_where() {
        let sql = "CREATE TABLE x AS SELECT a.k FROM a JOIN b ON a.k = b.k JOIN c ON b.k = c.k WHERE a.k > 1";
        assert_eq!(
            remove_last_inner_join(sql).unwrap(),
            "CREATE TABLE x AS SELECT a.k FROM a JOIN b ON a.k = b.k WHERE a.k > 1"
        );
    }

    #[test]
    fn unknown_prompt_is_error() {
        assert!(matches!(mock_generate("hello"), Err(LlmError::UnrecognizedPrompt)));
    }

    #[test]
    fn alt_names() {
        assert_eq!(alt_index_name("idx_1", 2), "idx_3");
        assert_eq!(alt_index_name("by_title", 1), "by_title_alt1");
    }

    #[test]
    fn backoff_schedule() {
        let b = Backoff::default();
        assert_eq!(b.delay(0, 0.0), Duration::from_millis(500));
        assert_eq!(b.delay(1, 0.0), Duration::from_secs(1));
        assert_eq!(b.delay(2, 1.0), Duration::from_secs_f64(2.4));
        assert_eq!(b.delay(0, -1.0), Duration::from_secs_f64(0.4));
    }

    #[test]
    fn request_body_is_stable() {
        let req = CompletionRequest::new("p", &GenerationParams::default());
        assert_eq!(
            serde_json::to_string(&req.body()).unwrap(),
            r#"{"model":"gpt-3.5-turbo-instruct","prompt":"p","temperature":0.7,"max_tokens":256}"#
        );
    }

    #[test]
    fn backend_names() {
        assert_eq!("MOCK".parse::<BackendKind>().unwrap(), BackendKind::Mock);
        assert!("gpt".parse::<BackendKind>().is_err());
    }
}
