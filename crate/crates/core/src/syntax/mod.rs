//! Lexing, parsing and pretty-printing of meerkat source.
//!
//! Concrete syntax:
//!
//! ```text
//! program := (decl ";")*            // trailing `;` optional on the last decl
//! decl    := "var" ident "=" expr | "def" ident "=" expr
//! do      := "do" expr
//! expr    := "fn" ident "=>" expr
//!          | "if" expr "then" expr "else" expr
//!          | expr binop expr | "!" expr | "-" expr
//!          | expr expr                       // application
//!          | int | string | "true" | "false" | "()" | ident | "(" expr ")"
//!          | "action" "{" (ident ":=" expr ";")* "}"
//! ```
//!
//! Precedence from tightest: application, unary `! -`, `* /`, `+ -`,
//! `== <`, `&&`, `||`. Binary operators associate to the left. `fn` and `if`
//! extend as far right as possible. `//` starts a line comment.

mod ast;
mod lexer;
mod parser;
mod render;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use ast::*;
pub use parser::{parse_do, parse_expr, parse_program, MAX_NESTING};
pub use render::{render_do, render_expr, render_program};

pub use parser::is_identifier;
pub(crate) use render::render_str_literal;

/// A syntax error with the position of the offending token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub span: Span,
    /// Token classes that would have been accepted at `span`.
    pub expected: Vec<String>,
    pub found: String,
    /// Set for lexical errors that have no expected-token set.
    pub message: Option<String>,
}

impl ParseError {
    pub(crate) fn message(span: Span, msg: &str) -> ParseError {
        ParseError { span, expected: Vec::new(), found: String::new(), message: Some(msg.into()) }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(m) = &self.message {
            return write!(f, "{}: {m}", self.span);
        }
        write!(f, "{}: expected ", self.span)?;
        for (i, e) in self.expected.iter().enumerate() {
            if i > 0 {
                f.write_str(if i + 1 == self.expected.len() { " or " } else { ", " })?;
            }
            f.write_str(e)?;
        }
        write!(f, ", found {}", self.found)
    }
}

impl core::error::Error for ParseError {}
