//! Command classification against the five trigger shapes.
//!
//! The matcher works over lexer tokens rather than a full SQL grammar. Each
//! shape is a short prefix pattern (`ALTER TABLE t MODIFY c dt`,
//! `CREATE INDEX i ON t(...)`, ...) plus, for the join-based shapes, a scan
//! of the statement body at its own paren depth so joins inside nested
//! subqueries are not counted.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lexer::{self, Token, TokenKind};

/// One SQL command entered by a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlEvent {
    pub session_id: String,
    pub task_id: u8,
    pub author: Option<String>,
    /// Seconds since session start.
    pub timestamp: f64,
    pub raw_sql: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InterventionType {
    DatatypeComparison,
    CompositeVsMultiSingle,
    CompositeIndColOrder,
    DenormalizationWhen,
    TableChoiceDenormalization,
}

impl InterventionType {
    pub const ALL: [InterventionType; 5] = [
        InterventionType::DatatypeComparison,
        InterventionType::CompositeVsMultiSingle,
        InterventionType::CompositeIndColOrder,
        InterventionType::DenormalizationWhen,
        InterventionType::TableChoiceDenormalization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterventionType::DatatypeComparison => "DATATYPE_COMPARISON",
            InterventionType::CompositeVsMultiSingle => "COMPOSITE_VS_MULTI_SINGLE",
            InterventionType::CompositeIndColOrder => "COMPOSITE_IND_COL_ORDER",
            InterventionType::DenormalizationWhen => "DENORMALIZATION_WHEN",
            InterventionType::TableChoiceDenormalization => "TABLE_CHOICE_DENORMALIZATION",
        }
    }

    /// Whether reflections of this type are personalized through the LLM.
    pub fn uses_llm(self) -> bool {
        self != InterventionType::DatatypeComparison
    }
}

impl fmt::Display for InterventionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown intervention type `{0}`")]
pub struct UnknownIntervention(pub String);

impl FromStr for InterventionType {
    type Err = UnknownIntervention;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InterventionType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownIntervention(s.to_string()))
    }
}

/// Structured result of matching one command against a trigger shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TriggerMatch {
    DatatypeComparison {
        table: String,
        column: String,
        new_datatype: String,
    },
    SingleColumnIndex {
        index: String,
        table: String,
        column: String,
    },
    CompositeIndex {
        index: String,
        table: String,
        columns: Vec<String>,
    },
    InnerJoinSelect {
        query_text: String,
        tables: Vec<String>,
        join_count: usize,
    },
    CreateTableAsJoin {
        table: String,
        query_text: String,
        tables: Vec<String>,
        join_count: usize,
    },
}

impl TriggerMatch {
    pub fn intervention_type(&self) -> InterventionType {
        intervention_type(self)
    }

    /// Table whose creation command gives context to the prompt, if any.
    pub fn target_table(&self) -> Option<&str> {
        match self {
            TriggerMatch::DatatypeComparison { table, .. }
            | TriggerMatch::SingleColumnIndex { table, .. }
            | TriggerMatch::CompositeIndex { table, .. }
            | TriggerMatch::CreateTableAsJoin { table, .. } => Some(table),
            TriggerMatch::InnerJoinSelect { .. } => None,
        }
    }
}

pub fn intervention_type(m: &TriggerMatch) -> InterventionType {
    match m {
        TriggerMatch::DatatypeComparison { .. } => InterventionType::DatatypeComparison,
        TriggerMatch::SingleColumnIndex { .. } => InterventionType::CompositeVsMultiSingle,
        TriggerMatch::CompositeIndex { .. } => InterventionType::CompositeIndColOrder,
        TriggerMatch::InnerJoinSelect { .. } => InterventionType::DenormalizationWhen,
        TriggerMatch::CreateTableAsJoin { .. } => InterventionType::TableChoiceDenormalization,
    }
}

/// Strip comments, collapse whitespace and drop trailing semicolons.
/// Quoted literals are copied through untouched.
pub fn normalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars().peekable();
    let mut pending_space = false;
    while let Some(c) = chars.next() {
        match c {
            '\'' | '"' | '`' => {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(c);
                while let Some(n) = chars.next() {
                    out.push(n);
                    if n == '\\' && c != '`' {
                        if let Some(esc) = chars.next() {
                            out.push(esc);
                        }
                    } else if n == c {
                        break;
                    }
                }
            }
            '#' | '-' if c == '#' || chars.peek() == Some(&'-') => {
                for n in chars.by_ref() {
                    if n == '\n' {
                        break;
                    }
                }
                pending_space = true;
            }
            '/' if chars.peek() == Some(&'*') => {
                chars.next();
                let mut prev = '\0';
                for n in chars.by_ref() {
                    if prev == '*' && n == '/' {
                        break;
                    }
                    prev = n;
                }
                pending_space = true;
            }
            c if c.is_whitespace() => pending_space = true,
            c => {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(c);
            }
        }
    }
    let kept = out.trim_end_matches([';', ' ']).len();
    out.truncate(kept);
    out
}

/// Split a command buffer into statements on top-level semicolons.
/// Statements are returned trimmed, without their terminator.
pub fn split_statements(raw: &str) -> Vec<String> {
    let Ok(tokens) = lexer::tokenize(raw) else {
        let t = raw.trim();
        return if t.is_empty() { vec![] } else { vec![t.to_string()] };
    };
    let mut out = Vec::new();
    let mut start = 0;
    for t in tokens.iter().filter(|t| t.kind == TokenKind::Semicolon) {
        push_statement(&mut out, &raw[start..t.span.start]);
        start = t.span.end;
    }
    push_statement(&mut out, &raw[start..]);
    out
}

fn push_statement(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    // a chunk holding only comments is not a statement
    if !s.is_empty() && lexer::tokenize(s).map(|t| !t.is_empty()).unwrap_or(true) {
        out.push(s.to_string());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatcherOptions {
    /// Treat `CREATE UNIQUE INDEX` like a plain index.
    pub unique_indexes: bool,
}

impl Default for MatcherOptions {
    fn default() -> Self {
        MatcherOptions { unique_indexes: true }
    }
}

/// First trigger in `cmd`, if any.
pub fn classify(cmd: &str) -> Option<TriggerMatch> {
    classify_all(cmd).into_iter().next()
}

/// Every trigger in `cmd`. Only `ALTER TABLE` with several `MODIFY`
/// clauses yields more than one.
pub fn classify_all(cmd: &str) -> Vec<TriggerMatch> {
    classify_with(cmd, MatcherOptions::default())
}

pub fn classify_with(cmd: &str, opts: MatcherOptions) -> Vec<TriggerMatch> {
    let Ok(mut toks) = lexer::tokenize(cmd) else {
        return vec![];
    };
    while toks.last().is_some_and(|t| t.kind == TokenKind::Semicolon) {
        toks.pop();
    }
    let Some(first) = toks.first() else {
        return vec![];
    };
    if first.is_kw("ALTER") {
        match_alter_modify(&toks)
    } else if first.is_kw("CREATE") {
        match_create_index(&toks, opts)
            .or_else(|| match_ctas(cmd, &toks))
            .into_iter()
            .collect()
    } else if first.is_kw("SELECT") {
        let (join_count, tables) = scan_joins(&toks, 0, toks.len());
        if join_count == 0 {
            return vec![];
        }
        vec![TriggerMatch::InnerJoinSelect {
            query_text: normalize(cmd),
            tables,
            join_count,
        }]
    } else {
        vec![]
    }
}

/// Token cursor with keyword helpers.
pub(crate) struct Cursor<'a> {
    pub toks: &'a [Token],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(toks: &'a [Token]) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    pub fn peek_at(&self, off: usize) -> Option<&'a Token> {
        self.toks.get(self.pos + off)
    }

    pub fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_some_and(|t| t.is_kw(kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_kws(&mut self, kws: &[&str]) -> bool {
        let ok = kws
            .iter()
            .enumerate()
            .all(|(i, kw)| self.peek_at(i).is_some_and(|t| t.is_kw(kw)));
        if ok {
            self.pos += kws.len();
        }
        ok
    }

    pub fn eat_kind(&mut self, kind: TokenKind) -> bool {
        if self.peek().is_some_and(|t| t.kind == kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Possibly schema-qualified name; returns the last component.
    pub fn object_name(&mut self) -> Option<String> {
        let t = self.peek().filter(|t| t.is_ident())?;
        self.pos += 1;
        let mut name = t.ident().to_string();
        while self.peek().is_some_and(|t| t.kind == TokenKind::Dot)
            && self.peek_at(1).is_some_and(Token::is_ident)
        {
            name = self.toks[self.pos + 1].ident().to_string();
            self.pos += 2;
        }
        Some(name)
    }

}

fn match_alter_modify(toks: &[Token]) -> Vec<TriggerMatch> {
    let mut c = Cursor::new(toks);
    c.eat_kw("ALTER");
    c.eat_kw("ONLINE");
    c.eat_kw("IGNORE");
    if !c.eat_kw("TABLE") {
        return vec![];
    }
    let Some(table) = c.object_name() else {
        return vec![];
    };
    let mut out = Vec::new();
    for (start, end) in split_top_level(toks, c.pos, toks.len()) {
        let mut clause = Cursor::new(&toks[start..end]);
        if !clause.eat_kw("MODIFY") {
            continue;
        }
        clause.eat_kw("COLUMN");
        let Some(column) = clause.peek().filter(|t| t.is_ident()).map(|t| t.ident().to_string()) else {
            continue;
        };
        clause.next();
        if let Some(new_datatype) = datatype_at(&toks[start..end], clause.pos) {
            out.push(TriggerMatch::DatatypeComparison {
                table: table.clone(),
                column,
                new_datatype,
            });
        }
    }
    out
}

/// Text of a column type starting at `pos`: the type word plus an optional
/// parenthesized argument list, e.g. `VARCHAR(20)` or `DECIMAL(10, 2)`.
pub(crate) fn datatype_at(toks: &[Token], pos: usize) -> Option<String> {
    let word = toks.get(pos).filter(|t| t.kind == TokenKind::Word)?;
    let mut text = word.value.clone();
    if toks.get(pos + 1).is_some_and(|t| t.kind == TokenKind::LParen) {
        let close = lexer::matching_paren(toks, pos + 1)?;
        let args: Vec<&str> = toks[pos + 2..close].iter().map(|t| t.value.as_str()).collect();
        text.push('(');
        text.push_str(&args.join(" ").replace(" ,", ","));
        text.push(')');
    }
    Some(text)
}

/// Comma-separated ranges of `toks[from..to]` at the paren depth of `from`.
pub(crate) fn split_top_level(toks: &[Token], from: usize, to: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = from;
    for (i, t) in toks.iter().enumerate().take(to).skip(from) {
        match t.kind {
            TokenKind::LParen => depth += 1,
            TokenKind::RParen => depth -= 1,
            TokenKind::Comma if depth == 0 => {
                out.push((start, i));
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < to || !out.is_empty() {
        out.push((start, to));
    }
    out
}

fn match_create_index(toks: &[Token], opts: MatcherOptions) -> Option<TriggerMatch> {
    let mut c = Cursor::new(toks);
    c.eat_kw("CREATE");
    if c.eat_kw("UNIQUE") && !opts.unique_indexes {
        return None;
    }
    if !c.eat_kw("INDEX") {
        return None;
    }
    let index = c.object_name()?;
    if c.eat_kw("USING") {
        c.next();
    }
    if !c.eat_kw("ON") {
        return None;
    }
    let table = c.object_name()?;
    let columns = index_columns(toks, c.pos)?;
    match columns.len() {
        0 => None,
        1 => Some(TriggerMatch::SingleColumnIndex {
            index,
            table,
            column: columns.into_iter().next()?,
        }),
        _ => {
            let mut seen = std::collections::HashSet::new();
            if !columns.iter().all(|col| seen.insert(col.to_ascii_lowercase())) {
                return None;
            }
            Some(TriggerMatch::CompositeIndex { index, table, columns })
        }
    }
}

/// Plain column names of an index key list `( a, b(10) DESC, ... )` opened
/// at `open`. Expression keys make the list unrecognizable.
pub(crate) fn index_columns(toks: &[Token], open: usize) -> Option<Vec<String>> {
    if toks.get(open)?.kind != TokenKind::LParen {
        return None;
    }
    let close = lexer::matching_paren(toks, open)?;
    if close == open + 1 {
        return Some(vec![]);
    }
    let mut cols = Vec::new();
    for (s, e) in split_top_level(toks, open + 1, close) {
        let part = &toks[s..e];
        let name = part.first().filter(|t| t.is_ident())?;
        let mut rest = &part[1..];
        if rest.len() >= 3
            && rest[0].kind == TokenKind::LParen
            && rest[1].kind == TokenKind::Number
            && rest[2].kind == TokenKind::RParen
        {
            rest = &rest[3..];
        }
        if rest.first().is_some_and(|t| t.is_kw("ASC") || t.is_kw("DESC")) {
            rest = &rest[1..];
        }
        if !rest.is_empty() {
            return None;
        }
        cols.push(name.ident().to_string());
    }
    Some(cols)
}

/// Body of a `CREATE TABLE ... [AS] [(] SELECT ...` statement.
pub(crate) struct CtasShape {
    pub table: String,
    /// Token range of the SELECT body, exclusive of wrapping parens.
    pub body: (usize, usize),
}

pub(crate) fn ctas_shape(toks: &[Token]) -> Option<CtasShape> {
    let mut c = Cursor::new(toks);
    c.eat_kw("CREATE");
    c.eat_kw("TEMPORARY");
    if !c.eat_kw("TABLE") {
        return None;
    }
    c.eat_kws(&["IF", "NOT", "EXISTS"]);
    let table = c.object_name()?;
    c.eat_kw("AS");
    let body = if c.peek()?.kind == TokenKind::LParen {
        if !c.peek_at(1)?.is_kw("SELECT") {
            return None;
        }
        let close = lexer::matching_paren(toks, c.pos)?;
        (c.pos + 1, close)
    } else if c.peek()?.is_kw("SELECT") {
        (c.pos, toks.len())
    } else {
        return None;
    };
    Some(CtasShape { table, body })
}

fn match_ctas(cmd: &str, toks: &[Token]) -> Option<TriggerMatch> {
    let shape = ctas_shape(toks)?;
    let (s, e) = shape.body;
    let (join_count, tables) = scan_joins(toks, s, e);
    if join_count == 0 {
        return None;
    }
    let query_text = normalize(&cmd[toks[s].span.start..toks[e - 1].span.end]);
    Some(TriggerMatch::CreateTableAsJoin {
        table: shape.table,
        query_text,
        tables,
        join_count,
    })
}

const NON_INNER: [&str; 6] = ["LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "OUTER"];

/// Count inner joins (`INNER JOIN` or bare `JOIN`) in `toks[from..to]` at
/// the paren depth of `from`, and list the named tables they connect.
pub(crate) fn scan_joins(toks: &[Token], from: usize, to: usize) -> (usize, Vec<String>) {
    let depths = lexer::depths(toks);
    let Some(&base) = depths.get(from) else {
        return (0, vec![]);
    };
    let mut count = 0;
    let mut tables = Vec::new();
    let mut i = from;
    while i < to {
        let t = &toks[i];
        if depths[i] != base {
            i += 1;
            continue;
        }
        if t.is_kw("FROM") {
            if let Some(name) = table_ref_name(toks, i + 1) {
                tables.push(name);
            }
        } else if t.is_kw("JOIN") {
            let inner = i == from || !NON_INNER.iter().any(|kw| toks[i - 1].is_kw(kw));
            if inner {
                count += 1;
                if let Some(name) = table_ref_name(toks, i + 1) {
                    tables.push(name);
                }
            }
        }
        i += 1;
    }
    (count, tables)
}

fn table_ref_name(toks: &[Token], pos: usize) -> Option<String> {
    let mut c = Cursor::new(toks);
    c.pos = pos;
    let t = c.peek()?;
    if !t.is_ident() || t.is_kw("SELECT") {
        return None;
    }
    c.object_name()
}
