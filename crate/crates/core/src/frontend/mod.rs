//! Lexing, parsing and printing of MK source.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod pretty;

pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;
pub use pretty::print_program;

use crate::diag::Diagnostics;
use ast::Program;

/// Tokenizes and parses `source` in one step.
pub fn parse_source(source: &str) -> Result<Program, Diagnostics> {
    let tokens = tokenize(source)?;
    parse(&tokens)
}
