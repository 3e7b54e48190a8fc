//! Tokenizer for MK source text.
//!
//! Plain `//` comments and whitespace are skipped. A comment starting with the
//! `//#omp` sentinel is kept as a single [`TokenKind::DirectiveComment`] token
//! spanning the rest of its line.

use crate::diag::{CompileError, Diagnostic};
use crate::frontend::ast::Pos;

pub const DIRECTIVE_SENTINEL: &str = "//#omp";

pub const KEYWORDS: &[&str] = &[
    "fn", "extern", "let", "if", "else", "while", "for", "in", "step", "return", "print", "int", "float", "bool",
    "true", "false",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Identifier,
    IntLiteral,
    FloatLiteral,
    Keyword,
    Operator,
    Punctuation,
    DirectiveComment,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub column: u32,
    /// Byte offset of the first character in the source.
    pub offset: usize,
}

impl Token {
    pub fn pos(&self) -> Pos {
        Pos::new(self.line, self.column)
    }

    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }
}

// Longest first so that `..` wins over `.` and `<=` over `<`.
const OPERATORS: &[&str] = &[
    "->", "..", "==", "!=", "<=", ">=", "&&", "||", "+", "-", "*", "/", "%", "=", "<", ">", "!",
];
const PUNCTUATION: &[char] = &['(', ')', '{', '}', '[', ']', ',', ';', ':'];

struct Cursor<'a> {
    src: &'a str,
    offset: usize,
    line: u32,
    column: u32,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.offset..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos::new(self.line, self.column)
    }

    /// True when only spaces or tabs precede the cursor on its line.
    fn at_line_start(&self) -> bool {
        let before = &self.src[..self.offset];
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        before[line_start..].chars().all(|c| c == ' ' || c == '\t')
    }
}

fn lex_error(pos: Pos, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(pos, CompileError::Lex(msg.into()))
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut cur = Cursor {
        src: source,
        offset: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let start = cur.offset;
        let pos = cur.pos();

        if cur.rest().starts_with("//") {
            let is_directive = cur.rest().starts_with(DIRECTIVE_SENTINEL);
            if is_directive && !cur.at_line_start() {
                return Err(lex_error(pos, "directive comment must be on its own line"));
            }
            while let Some(c) = cur.peek() {
                if c == '\n' || (c == '\r' && cur.peek_at(1) == Some('\n')) {
                    break;
                }
                cur.bump();
            }
            if is_directive {
                tokens.push(Token {
                    kind: TokenKind::DirectiveComment,
                    text: source[start..cur.offset].to_string(),
                    line: pos.line,
                    column: pos.column,
                    offset: start,
                });
            }
            continue;
        }

        let kind = if c.is_ascii_alphabetic() || c == '_' {
            while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                cur.bump();
            }
            if KEYWORDS.contains(&&source[start..cur.offset]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if c.is_ascii_digit() {
            lex_number(&mut cur, pos)?
        } else if PUNCTUATION.contains(&c) {
            cur.bump();
            TokenKind::Punctuation
        } else if let Some(op) = OPERATORS.iter().find(|op| cur.rest().starts_with(**op)) {
            for _ in 0..op.len() {
                cur.bump();
            }
            TokenKind::Operator
        } else {
            return Err(lex_error(pos, format!("illegal character {c:?}")));
        };

        tokens.push(Token {
            kind,
            text: source[start..cur.offset].to_string(),
            line: pos.line,
            column: pos.column,
            offset: start,
        });
    }

    tokens.push(Token {
        kind: TokenKind::Eof,
        text: String::new(),
        line: cur.line,
        column: cur.column,
        offset: cur.offset,
    });
    Ok(tokens)
}

fn lex_number(cur: &mut Cursor<'_>, pos: Pos) -> Result<TokenKind, Diagnostic> {
    let start = cur.offset;
    let mut is_float = false;
    while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
        cur.bump();
    }
    // `0..n` is a range, not a float: a fraction needs a digit after the dot.
    if cur.peek() == Some('.') && matches!(cur.peek_at(1), Some(c) if c.is_ascii_digit()) {
        is_float = true;
        cur.bump();
        while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
            cur.bump();
        }
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        let sign = matches!(cur.peek_at(1), Some('+' | '-'));
        let digit_at = if sign { 2 } else { 1 };
        if matches!(cur.peek_at(digit_at), Some(c) if c.is_ascii_digit()) {
            is_float = true;
            for _ in 0..digit_at {
                cur.bump();
            }
            while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
                cur.bump();
            }
        } else {
            return Err(lex_error(pos, "unterminated exponent in numeric literal"));
        }
    }
    if matches!(cur.peek(), Some(c) if c.is_ascii_alphabetic() || c == '_') {
        return Err(lex_error(pos, "malformed numeric literal"));
    }
    let text = &cur.src[start..cur.offset];
    if is_float {
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(TokenKind::FloatLiteral),
            _ => Err(lex_error(pos, format!("invalid float literal `{text}`"))),
        }
    } else {
        text.parse::<i64>()
            .map_err(|_| lex_error(pos, format!("integer literal `{text}` out of range")))?;
        Ok(TokenKind::IntLiteral)
    }
}
