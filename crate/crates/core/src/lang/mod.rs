//! MiniJava-QLC: a closed, Java-like teaching language.
//!
//! Types are `int` (64-bit, overflow is an error), `char`, `boolean`,
//! `String` and `void`. The only methods are `String.length()` and
//! `String.charAt(int)`. `static` is accepted and ignored.

pub mod ast;
mod display;
pub mod lexer;
pub mod parser;
pub mod span;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::*;
pub use display::{quote_char, quote_str};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse_entry_expression, parse_expression, parse_program};
pub use span::{LineIndex, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ParseErrorKind {
    Lexical,
    Syntactic,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Lexical => "lexical",
            ParseErrorKind::Syntactic => "syntax",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind} error at line {}, column {}: {message}", span.start_line, span.start_col)]
pub struct ParseError {
    pub message: String,
    pub span: SourceSpan,
    pub kind: ParseErrorKind,
}
