//! Post-processing and validation of generated SQL alternatives.
//!
//! Raw completions are cut into candidate statements, each checked against
//! a small grammar subset. Failing candidates go through a fixed, ordered
//! repair list and are checked again. When too few usable alternatives
//! remain, the caller falls back to the static reflection.
//!
//! Repair catalog (version [`FIX_CATALOG_VERSION`]), applied in this order:
//!
//! 1. strip markdown code fences (three backticks, optional language tag)
//! 2. close exactly one unbalanced opening parenthesis
//! 3. add `ON a.col = b.col` to a join without a condition, when both
//!    tables are in the session registry and share a column name
//! 4. drop trailing commas in column and select lists

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::lexer::{self, Token, TokenKind};
use crate::matcher::{self, Cursor, InterventionType, TriggerMatch};
use crate::prompt::LlmPrompt;
use crate::session::TableRegistry;

pub const FIX_CATALOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "reason", rename_all = "snake_case")]
pub enum SyntaxCheck {
    Pass,
    Fail(String),
}

impl SyntaxCheck {
    pub fn is_pass(&self) -> bool {
        *self == SyntaxCheck::Pass
    }
}

type Check = Result<(), String>;

const STATEMENT_STARTS: [&str; 3] = ["CREATE", "SELECT", "ALTER"];

const CONTINUATION_WORDS: [&str; 27] = [
    "FROM", "INNER", "JOIN", "LEFT", "RIGHT", "CROSS", "OUTER", "ON", "WHERE", "AND", "OR", "GROUP", "ORDER",
    "BY", "HAVING", "LIMIT", "AS", "USING", "UNION", "NOT", "IN", "IS", "BETWEEN", "LIKE", "ASC", "DESC",
    "MODIFY",
];

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"```[A-Za-z]*").unwrap());
static NUMBERING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\d+[.)]|[-*•])\s+").unwrap());
static LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[A-Za-z][A-Za-z ]{0,40}:\s*").unwrap());
static TRAILING_COMMA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:,\s*)+(\)|$)").unwrap());
static COMMA_BEFORE_FROM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(?:,\s*)+(FROM\b)").unwrap());

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn first_word(line: &str) -> String {
    line.trim_start()
        .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .next()
        .unwrap_or("")
        .to_ascii_uppercase()
}

fn starts_statement(line: &str) -> bool {
    STATEMENT_STARTS.contains(&first_word(line).as_str())
}

fn paren_balance(s: &str) -> i32 {
    let mut depth = 0;
    let mut quote: Option<char> = None;
    for c in s.chars() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(c),
            (None, '(') => depth += 1,
            (None, ')') => depth -= 1,
            _ => {}
        }
    }
    depth
}

/// Pull candidate statements out of a raw completion: prose lines, code
/// fences, list numbering and `Label:` prefixes are removed, and the rest
/// is split into statements starting with CREATE, SELECT or ALTER.
pub fn extract_statements(raw: &str) -> Vec<String> {
    let cleaned = FENCE.replace_all(raw, "\n");
    let mut statements = Vec::new();
    let mut current: Option<String> = None;

    let finish = |current: &mut Option<String>, out: &mut Vec<String>| {
        if let Some(s) = current.take() {
            let s = collapse_ws(s.trim().trim_end_matches(';'));
            if !s.is_empty() {
                out.push(s);
            }
        }
    };

    for raw_line in cleaned.lines() {
        let mut line = NUMBERING.replace(raw_line, "").into_owned();
        if !starts_statement(&line) {
            if let Some(m) = LABEL.find(&line) {
                if starts_statement(&line[m.end()..]) {
                    line = line[m.end()..].to_string();
                }
            }
        }
        // several statements on one line
        let pieces: Vec<&str> = line.split_inclusive(';').collect();
        for piece in pieces {
            let trimmed = piece.trim();
            if trimmed.is_empty() {
                continue;
            }
            let continues = current.as_ref().is_some_and(|c| {
                paren_balance(c) > 0
                    || CONTINUATION_WORDS.contains(&first_word(trimmed).as_str())
                    || trimmed.starts_with(['(', ')', ',', '='])
                    || c.trim_end().ends_with(',')
            });
            let open_parens = current.as_deref().is_some_and(|c| paren_balance(c) > 0);
            if continues && (!starts_statement(trimmed) || open_parens) {
                let c = current.as_mut().expect("continuing an open statement");
                c.push(' ');
                c.push_str(trimmed);
            } else {
                finish(&mut current, &mut statements);
                if starts_statement(trimmed) {
                    current = Some(trimmed.to_string());
                }
            }
            if trimmed.ends_with(';') && current.as_deref().is_some_and(|c| paren_balance(c) <= 0) {
                finish(&mut current, &mut statements);
            }
        }
    }
    finish(&mut current, &mut statements);
    statements
}

/// Check `sql` against the supported grammar subset.
pub fn check_syntax(sql: &str) -> SyntaxCheck {
    match check(sql) {
        Ok(()) => SyntaxCheck::Pass,
        Err(reason) => SyntaxCheck::Fail(reason),
    }
}

fn check(sql: &str) -> Check {
    let mut toks = lexer::tokenize(sql).map_err(|e| e.to_string())?;
    while toks.last().is_some_and(|t| t.kind == TokenKind::Semicolon) {
        toks.pop();
    }
    if toks.is_empty() {
        return Err("empty statement".into());
    }
    let mut depth = 0i32;
    for t in &toks {
        match t.kind {
            TokenKind::Unknown => return Err(format!("unexpected character `{}`", t.value)),
            TokenKind::Semicolon => return Err("more than one statement".into()),
            TokenKind::LParen => depth += 1,
            TokenKind::RParen => {
                depth -= 1;
                if depth < 0 {
                    return Err("unbalanced parentheses".into());
                }
            }
            TokenKind::Word if t.value.starts_with(|c: char| c.is_ascii_digit()) => {
                return Err(format!("invalid identifier `{}`", t.value))
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err("unbalanced parentheses".into());
    }
    let first = &toks[0];
    if first.is_kw("SELECT") {
        check_select(&toks, 0, toks.len())
    } else if first.is_kw("CREATE") {
        if toks.get(1).is_some_and(|t| t.is_kw("TABLE") || t.is_kw("TEMPORARY")) {
            check_create_table(&toks)
        } else {
            check_create_index(&toks)
        }
    } else if first.is_kw("ALTER") {
        if matcher::classify_all(sql).is_empty() {
            Err("unsupported ALTER statement".into())
        } else {
            Ok(())
        }
    } else {
        Err(format!("unsupported statement `{}`", first.value))
    }
}

fn check_create_index(toks: &[Token]) -> Check {
    let mut c = Cursor::new(toks);
    c.eat_kw("CREATE");
    c.eat_kw("UNIQUE");
    if !c.eat_kw("INDEX") {
        return Err("expected INDEX or TABLE after CREATE".into());
    }
    if c.peek().is_some_and(|t| t.is_kw("ON")) || c.object_name().is_none() {
        return Err("missing index name".into());
    }
    if c.eat_kw("USING") && c.next().is_none() {
        return Err("missing index type".into());
    }
    if !c.eat_kw("ON") {
        return Err("expected ON".into());
    }
    if c.object_name().is_none() {
        return Err("missing table name".into());
    }
    let open = c.pos;
    if !c.peek().is_some_and(|t| t.kind == TokenKind::LParen) {
        return Err("missing column list".into());
    }
    let close = lexer::matching_paren(toks, open).ok_or("unbalanced parentheses")?;
    check_list(toks, open + 1, close, "column list")?;
    if matcher::index_columns(toks, open).is_none() {
        return Err("invalid index column".into());
    }
    c.pos = close + 1;
    if c.eat_kw("USING") {
        c.next();
    }
    match c.peek() {
        None => Ok(()),
        Some(t) => Err(format!("unexpected `{}` after column list", t.value)),
    }
}

/// Non-empty comma-separated list with no empty items.
fn check_list(toks: &[Token], from: usize, to: usize, what: &str) -> Check {
    if from >= to {
        return Err(format!("empty {what}"));
    }
    for (s, e) in matcher::split_top_level(toks, from, to) {
        if s >= e {
            return Err(format!("empty item in {what}"));
        }
    }
    Ok(())
}

fn check_create_table(toks: &[Token]) -> Check {
    if let Some(shape) = matcher::ctas_shape(toks) {
        let (s, e) = shape.body;
        check_select(toks, s, e)?;
        let after = if e < toks.len() && toks[e].kind == TokenKind::RParen { e + 1 } else { e };
        return match toks.get(after) {
            None => Ok(()),
            Some(t) => Err(format!("unexpected `{}` after query", t.value)),
        };
    }
    let mut c = Cursor::new(toks);
    c.eat_kw("CREATE");
    c.eat_kw("TEMPORARY");
    c.eat_kw("TABLE");
    c.eat_kws(&["IF", "NOT", "EXISTS"]);
    if c.object_name().is_none() {
        return Err("missing table name".into());
    }
    if c.eat_kw("AS") {
        return Err("AS must be followed by a SELECT".into());
    }
    if c.eat_kw("LIKE") {
        return c.object_name().map(|_| ()).ok_or_else(|| "missing table after LIKE".into());
    }
    let open = c.pos;
    if !c.peek().is_some_and(|t| t.kind == TokenKind::LParen) {
        return Err("missing column definitions".into());
    }
    let close = lexer::matching_paren(toks, open).ok_or("unbalanced parentheses")?;
    check_list(toks, open + 1, close, "column definitions")
}

const CLAUSE_WORDS: [&str; 17] = [
    "JOIN", "INNER", "LEFT", "RIGHT", "CROSS", "FULL", "NATURAL", "STRAIGHT_JOIN", "ON", "USING", "WHERE",
    "GROUP", "ORDER", "HAVING", "LIMIT", "UNION", "WINDOW",
];

fn is_clause_word(t: &Token) -> bool {
    CLAUSE_WORDS.iter().any(|kw| t.is_kw(kw))
}

/// Validate a SELECT occupying `toks[s..e]`, all at one paren depth.
fn check_select(toks: &[Token], s: usize, e: usize) -> Check {
    let depths = lexer::depths(toks);
    let base = depths[s];
    let at_base = |i: usize| depths[i] == base;
    let find_kw = |from: usize, kw: &str| (from..e).find(|&i| at_base(i) && toks[i].is_kw(kw));

    if !toks[s].is_kw("SELECT") {
        return Err("expected SELECT".into());
    }
    let mut list_start = s + 1;
    if toks.get(list_start).is_some_and(|t| t.is_kw("DISTINCT") || t.is_kw("ALL")) {
        list_start += 1;
    }
    let from = find_kw(list_start, "FROM").ok_or("SELECT without FROM")?;
    check_list(toks, list_start, from, "select list")?;

    let mut i = table_ref(toks, from + 1, e)?;
    while i < e {
        let t = &toks[i];
        if t.kind == TokenKind::Comma {
            i = table_ref(toks, i + 1, e)?;
            continue;
        }
        if t.is_kw("UNION") {
            let mut next = i + 1;
            if toks.get(next).is_some_and(|t| t.is_kw("ALL") || t.is_kw("DISTINCT")) {
                next += 1;
            }
            return check_select(toks, next, e);
        }
        if let Some(after_join) = join_keyword(toks, i, e) {
            let cross = t.is_kw("CROSS") || t.is_kw("NATURAL");
            i = table_ref(toks, after_join, e)?;
            if cross {
                continue;
            }
            if i < e && toks[i].is_kw("ON") {
                i = expression(toks, i + 1, e, &depths, "ON condition")?;
            } else if i < e && toks[i].is_kw("USING") {
                let close = toks
                    .get(i + 1)
                    .filter(|t| t.kind == TokenKind::LParen)
                    .and_then(|_| lexer::matching_paren(toks, i + 1))
                    .ok_or("USING needs a column list")?;
                check_list(toks, i + 2, close, "USING list")?;
                i = close + 1;
            } else {
                return Err("JOIN missing ON condition".into());
            }
            continue;
        }
        if t.is_kw("WHERE") || t.is_kw("HAVING") {
            i = expression(toks, i + 1, e, &depths, &t.value.to_ascii_uppercase())?;
            continue;
        }
        if (t.is_kw("GROUP") || t.is_kw("ORDER")) && toks.get(i + 1).is_some_and(|t| t.is_kw("BY")) {
            let end = expression(toks, i + 2, e, &depths, "BY list")?;
            check_list(toks, i + 2, end, "BY list")?;
            i = end;
            continue;
        }
        if t.is_kw("LIMIT") {
            i = expression(toks, i + 1, e, &depths, "LIMIT")?;
            continue;
        }
        return Err(format!("unexpected `{}`", t.value));
    }
    Ok(())
}

/// If a join keyword sequence starts at `i`, index just past `JOIN`.
fn join_keyword(toks: &[Token], i: usize, e: usize) -> Option<usize> {
    let mut j = i;
    let t = toks.get(j)?;
    if t.is_kw("STRAIGHT_JOIN") {
        return Some(j + 1);
    }
    if t.is_kw("NATURAL") {
        j += 1;
    }
    if toks.get(j).is_some_and(|t| t.is_kw("LEFT") || t.is_kw("RIGHT") || t.is_kw("FULL")) {
        j += 1;
        if toks.get(j).is_some_and(|t| t.is_kw("OUTER")) {
            j += 1;
        }
    } else if toks.get(j).is_some_and(|t| t.is_kw("INNER") || t.is_kw("CROSS")) {
        j += 1;
    }
    (j < e && toks[j].is_kw("JOIN")).then_some(j + 1)
}

/// Table name or derived table with optional alias. Returns the index after it.
fn table_ref(toks: &[Token], i: usize, e: usize) -> Result<usize, String> {
    let t = toks.get(i).filter(|_| i < e).ok_or("missing table reference")?;
    let mut j;
    if t.kind == TokenKind::LParen {
        let close = lexer::matching_paren(toks, i).ok_or("unbalanced parentheses")?;
        if !toks.get(i + 1).is_some_and(|t| t.is_kw("SELECT")) {
            return Err("derived table must be a SELECT".into());
        }
        check_select(toks, i + 1, close)?;
        j = close + 1;
    } else {
        if !t.is_ident() || is_clause_word(t) || t.is_kw("SELECT") {
            return Err(format!("expected table name, found `{}`", t.value));
        }
        let mut c = Cursor::new(toks);
        c.pos = i;
        c.object_name();
        j = c.pos;
    }
    if j < e && toks[j].is_kw("AS") {
        j += 1;
        if !(j < e && toks[j].is_ident()) {
            return Err("missing alias after AS".into());
        }
        return Ok(j + 1);
    }
    if j < e && toks[j].is_ident() && !is_clause_word(&toks[j]) {
        j += 1;
    }
    Ok(j)
}

/// Scan an expression up to the next clause keyword at the current depth.
fn expression(toks: &[Token], i: usize, e: usize, depths: &[i32], what: &str) -> Result<usize, String> {
    let base = depths.get(i).copied().unwrap_or(0);
    let mut j = i;
    while j < e {
        if depths[j] == base {
            let t = &toks[j];
            if is_clause_word(t) {
                break;
            }
        }
        j += 1;
    }
    if j == i {
        return Err(format!("empty {what}"));
    }
    if toks[j - 1].kind == TokenKind::Op || toks[j - 1].kind == TokenKind::Comma {
        return Err(format!("incomplete {what}"));
    }
    if toks[i].kind == TokenKind::Comma {
        return Err(format!("malformed {what}"));
    }
    Ok(j)
}

/// Apply the repair catalog in order. Statements the catalog does not
/// cover come back unchanged apart from whitespace.
pub fn apply_fixes(sql: &str, registry: &TableRegistry) -> String {
    let mut s = FENCE.replace_all(sql, " ").into_owned();
    s = collapse_ws(s.trim().trim_end_matches(';').trim());

    if paren_balance(&s) == 1 {
        s.push(')');
    }
    s = fix_missing_join_conditions(&s, registry);
    s = TRAILING_COMMA.replace_all(&s, "$1").into_owned();
    s = COMMA_BEFORE_FROM.replace_all(&s, " $1").into_owned();
    collapse_ws(s.trim_end_matches(|c: char| c == ';' || c == ',' || c.is_whitespace()))
}

/// A table reference seen in a FROM/JOIN chain.
struct Ref {
    table: String,
    alias: Option<String>,
}

impl Ref {
    fn qualifier(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.table)
    }
}

fn read_ref(toks: &[Token], i: usize) -> Option<(Ref, usize)> {
    let t = toks.get(i)?;
    if !t.is_ident() || is_clause_word(t) {
        return None;
    }
    let mut c = Cursor::new(toks);
    c.pos = i;
    let table = c.object_name()?;
    c.eat_kw("AS");
    let alias = c
        .peek()
        .filter(|t| t.is_ident() && !is_clause_word(t) && !t.is_kw("ON"))
        .map(|t| t.ident().to_string());
    if alias.is_some() {
        c.pos += 1;
    }
    Some((Ref { table, alias }, c.pos))
}

fn fix_missing_join_conditions(sql: &str, registry: &TableRegistry) -> String {
    let Ok(toks) = lexer::tokenize(sql) else {
        return sql.to_string();
    };
    let depths = lexer::depths(&toks);
    let mut inserts: Vec<(usize, String)> = Vec::new();
    // (depth, refs seen so far at that depth)
    let mut chains: Vec<(i32, Vec<Ref>)> = Vec::new();
    for i in 0..toks.len() {
        let t = &toks[i];
        let d = depths[i];
        if t.is_kw("FROM") {
            chains.retain(|(cd, _)| *cd != d);
            if let Some((r, _)) = read_ref(&toks, i + 1) {
                chains.push((d, vec![r]));
            }
            continue;
        }
        if !t.is_kw("JOIN") || i > 0 && (toks[i - 1].is_kw("CROSS") || toks[i - 1].is_kw("NATURAL")) {
            continue;
        }
        let Some((right, after)) = read_ref(&toks, i + 1) else {
            continue;
        };
        let has_condition = toks.get(after).is_some_and(|n| n.is_kw("ON") || n.is_kw("USING"));
        let chain = chains.iter_mut().rev().find(|(cd, _)| *cd == d).map(|(_, refs)| refs);
        let Some(chain) = chain else {
            continue;
        };
        if !has_condition {
            let shared = chain.iter().rev().find_map(|left| {
                let lcols = &registry.get(&left.table)?.columns;
                let rcols = &registry.get(&right.table)?.columns;
                rcols.keys().find(|c| lcols.contains_key(*c)).map(|c| (left.qualifier().to_string(), c.clone()))
            });
            if let Some((lq, col)) = shared {
                let at = toks[after - 1].span.end;
                inserts.push((at, format!(" ON {lq}.{col} = {}.{col}", right.qualifier())));
            }
        }
        chain.push(right);
    }
    let mut out = sql.to_string();
    for (at, text) in inserts.into_iter().rev() {
        out.insert_str(at, &text);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AlternativeStatus {
    Valid { sql: String },
    Repaired { original: String, fixed: String },
    Invalid { sql: String, reason: String },
}

impl AlternativeStatus {
    /// Usable statement text, if any.
    pub fn sql(&self) -> Option<&str> {
        match self {
            AlternativeStatus::Valid { sql } => Some(sql),
            AlternativeStatus::Repaired { fixed, .. } => Some(fixed),
            AlternativeStatus::Invalid { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub alternatives: Vec<AlternativeStatus>,
    pub verdict: Verdict,
    /// Alternatives to show, in order. Empty on fallback.
    pub accepted: Vec<String>,
}

/// Check one candidate, repairing it if needed.
pub fn validate_statement(sql: &str, registry: &TableRegistry) -> AlternativeStatus {
    match check_syntax(sql) {
        SyntaxCheck::Pass => AlternativeStatus::Valid { sql: sql.to_string() },
        SyntaxCheck::Fail(reason) => {
            let fixed = apply_fixes(sql, registry);
            match check_syntax(&fixed) {
                SyntaxCheck::Pass => AlternativeStatus::Repaired {
                    original: sql.to_string(),
                    fixed,
                },
                SyntaxCheck::Fail(_) => AlternativeStatus::Invalid {
                    sql: sql.to_string(),
                    reason,
                },
            }
        }
    }
}

fn fits_intervention(sql: &str, t: InterventionType) -> bool {
    let m = matcher::classify(sql);
    match t {
        InterventionType::CompositeIndColOrder => matches!(m, Some(TriggerMatch::CompositeIndex { .. })),
        InterventionType::CompositeVsMultiSingle => matches!(
            m,
            Some(TriggerMatch::CompositeIndex { .. } | TriggerMatch::SingleColumnIndex { .. })
        ),
        InterventionType::DenormalizationWhen | InterventionType::TableChoiceDenormalization => {
            lexer::tokenize(sql).is_ok_and(|t| matcher::ctas_shape(&t).is_some())
        }
        InterventionType::DatatypeComparison => false,
    }
}

/// Extract, check, repair and count the alternatives in `raw`.
///
/// The composite-order prompt must yield three usable indexes and the
/// composite-vs-single prompt one of each kind; the denormalization
/// prompts need one usable `CREATE TABLE ... AS SELECT`.
pub fn validate_alternatives(raw: &str, prompt: &LlmPrompt, registry: &TableRegistry) -> ValidationOutcome {
    let intervention = prompt.intervention;
    let alternatives: Vec<AlternativeStatus> = extract_statements(raw)
        .iter()
        .map(|s| match validate_statement(s, registry) {
            status @ AlternativeStatus::Invalid { .. } => status,
            status => {
                let sql = status.sql().unwrap_or_default();
                if fits_intervention(sql, intervention) {
                    status
                } else {
                    AlternativeStatus::Invalid {
                        sql: s.clone(),
                        reason: format!("not a usable alternative for {intervention}"),
                    }
                }
            }
        })
        .collect();
    let usable: Vec<&str> = alternatives.iter().filter_map(AlternativeStatus::sql).collect();

    let accepted: Option<Vec<String>> = match intervention {
        InterventionType::CompositeVsMultiSingle => {
            let is_composite = |s: &str| matches!(matcher::classify(s), Some(TriggerMatch::CompositeIndex { .. }));
            let composite = usable.iter().find(|s| is_composite(s));
            let single = usable.iter().find(|s| !is_composite(s));
            composite.zip(single).map(|(c, s)| vec![c.to_string(), s.to_string()])
        }
        _ => {
            let need = prompt.expected_alternatives.max(1);
            (usable.len() >= need).then(|| usable.iter().take(need).map(|s| s.to_string()).collect())
        }
    };
    match accepted {
        Some(accepted) if intervention.uses_llm() => ValidationOutcome {
            alternatives,
            verdict: Verdict::Accept,
            accepted,
        },
        _ => ValidationOutcome {
            alternatives,
            verdict: Verdict::Fallback,
            accepted: vec![],
        },
    }
}
