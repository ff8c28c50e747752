//! A small SQL lexer.
//!
//! Only enough of MySQL's lexical grammar is covered to drive the shape
//! matcher and the syntax checker: words, quoted identifiers, numbers,
//! string literals and punctuation. Every token keeps its byte span so
//! callers can slice the original text back out verbatim.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Bare word: keyword or identifier. `value` holds the text as written.
    Word,
    /// Backtick-quoted identifier. `value` holds the unquoted name.
    Quoted,
    Number,
    Str,
    LParen,
    RParen,
    Comma,
    Dot,
    Semicolon,
    Star,
    /// Any other operator run (`=`, `<>`, `>=`, `+`, ...).
    Op,
    /// A character the lexer does not understand.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub value: String,
    pub span: Range<usize>,
}

impl Token {
    /// Case-insensitive keyword test. Quoted identifiers never match.
    pub fn is_kw(&self, kw: &str) -> bool {
        self.kind == TokenKind::Word && self.value.eq_ignore_ascii_case(kw)
    }

    pub fn is_ident(&self) -> bool {
        matches!(self.kind, TokenKind::Word | TokenKind::Quoted)
    }

    /// Identifier value with backticks stripped.
    pub fn ident(&self) -> &str {
        &self.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexError {
    #[error("unterminated string literal at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated quoted identifier at byte {0}")]
    UnterminatedIdent(usize),
    #[error("unterminated block comment at byte {0}")]
    UnterminatedComment(usize),
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

const OP_CHARS: &str = "=<>!+-/%|&^~:?@#";

/// Tokenize `src`, skipping whitespace and comments.
pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = src[i..].chars().next().unwrap_or('\0');
        let w = c.len_utf8();
        if c.is_whitespace() {
            i += w;
            continue;
        }
        if src[i..].starts_with("--") || c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            match src[i + 2..].find("*/") {
                Some(end) => i = i + 2 + end + 2,
                None => return Err(LexError::UnterminatedComment(i)),
            }
            continue;
        }
        let start = i;
        let simple = |kind: TokenKind| Token {
            kind,
            value: c.to_string(),
            span: start..start + w,
        };
        match c {
            '(' => out.push(simple(TokenKind::LParen)),
            ')' => out.push(simple(TokenKind::RParen)),
            ',' => out.push(simple(TokenKind::Comma)),
            '.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => out.push(simple(TokenKind::Dot)),
            ';' => out.push(simple(TokenKind::Semicolon)),
            '*' => out.push(simple(TokenKind::Star)),
            '\'' | '"' => {
                let end = scan_quoted(src, i, c).ok_or(LexError::UnterminatedString(i))?;
                out.push(Token {
                    kind: TokenKind::Str,
                    value: src[i + 1..end - 1].to_string(),
                    span: i..end,
                });
                i = end;
                continue;
            }
            '`' => {
                let end = scan_quoted(src, i, '`').ok_or(LexError::UnterminatedIdent(i))?;
                out.push(Token {
                    kind: TokenKind::Quoted,
                    value: src[i + 1..end - 1].replace("``", "`"),
                    span: i..end,
                });
                i = end;
                continue;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'.' || bytes[j] == b'_') {
                    j += 1;
                }
                let text = &src[i..j];
                // `1abc` style tokens are words that happen to start with a digit
                let kind = if text.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
                    TokenKind::Number
                } else {
                    TokenKind::Word
                };
                out.push(Token { kind, value: text.to_string(), span: i..j });
                i = j;
                continue;
            }
            c if is_word_char(c) => {
                let mut j = i;
                while let Some(ch) = src[j..].chars().next() {
                    if !is_word_char(ch) {
                        break;
                    }
                    j += ch.len_utf8();
                }
                out.push(Token { kind: TokenKind::Word, value: src[i..j].to_string(), span: i..j });
                i = j;
                continue;
            }
            c if OP_CHARS.contains(c) => {
                let mut j = i;
                while let Some(ch) = src[j..].chars().next() {
                    if !OP_CHARS.contains(ch) || src[j..].starts_with("--") && j > i {
                        break;
                    }
                    j += ch.len_utf8();
                }
                out.push(Token { kind: TokenKind::Op, value: src[i..j].to_string(), span: i..j });
                i = j;
                continue;
            }
            _ => out.push(simple(TokenKind::Unknown)),
        }
        i += w;
    }
    Ok(out)
}

/// Returns the byte index one past the closing quote. A doubled quote
/// character inside the literal is an escape, as is a backslash.
fn scan_quoted(src: &str, start: usize, quote: char) -> Option<usize> {
    let bytes = src.as_bytes();
    let q = quote as u8;
    let mut i = start + 1;
    while i < bytes.len() {
        if bytes[i] == b'\\' && quote != '`' {
            i += 2;
            continue;
        }
        if bytes[i] == q {
            if bytes.get(i + 1) == Some(&q) {
                i += 2;
                continue;
            }
            return Some(i + 1);
        }
        i += 1;
    }
    None
}

/// Parenthesis depth of every token, measured before the token itself.
/// A closing paren reports the depth of its matching opener.
pub fn depths(tokens: &[Token]) -> Vec<i32> {
    let mut d = 0;
    tokens
        .iter()
        .map(|t| match t.kind {
            TokenKind::LParen => {
                d += 1;
                d - 1
            }
            TokenKind::RParen => {
                d -= 1;
                d
            }
            _ => d,
        })
        .collect()
}

/// Index of the paren closing the one opened at `open`, if any.
pub fn matching_paren(tokens: &[Token], open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        match t.kind {
            TokenKind::LParen => depth += 1,
            TokenKind::RParen => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn words_and_punctuation() {
        use TokenKind::*;
        assert_eq!(
            kinds("CREATE INDEX i ON t(a, b);"),
            vec![Word, Word, Word, Word, Word, LParen, Word, Comma, Word, RParen, Semicolon]
        );
    }

    #[test]
    fn qualified_names_and_numbers() {
        let toks = tokenize("s.salary > 100000.5").unwrap();
        assert_eq!(toks[1].kind, TokenKind::Dot);
        assert_eq!(toks[3].value, ">");
        assert_eq!(toks[4].kind, TokenKind::Number);
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(tokenize("SELECT 1 -- x\n/* y */ # z").unwrap().len(), 2);
    }

    #[test]
    fn quoted_identifier_is_unwrapped() {
        let toks = tokenize("`my table`").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Quoted);
        assert_eq!(toks[0].ident(), "my table");
    }

    #[test]
    fn string_with_comment_marker() {
        let toks = tokenize("SELECT '-- not a comment'").unwrap();
        assert_eq!(toks[1].kind, TokenKind::Str);
    }

    #[test]
    fn unterminated_literals() {
        assert!(matches!(tokenize("'abc"), Err(LexError::UnterminatedString(0))));
        assert!(matches!(tokenize("x `abc"), Err(LexError::UnterminatedIdent(2))));
        assert!(matches!(tokenize("/* abc"), Err(LexError::UnterminatedComment(0))));
    }

    #[test]
    fn paren_helpers() {
        let toks = tokenize("(a (b) c)").unwrap();
        assert_eq!(matching_paren(&toks, 0), Some(6));
        assert_eq!(depths(&toks), vec![0, 1, 1, 2, 1, 1, 0]);
    }
}
