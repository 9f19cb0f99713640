//! Surface syntax: lexing, parsing, renaming and well-formedness checks.

pub mod ast;
mod check;
mod lexer;
mod normalize;
mod parser;
mod pretty;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use ast::*;
pub use check::check_well_formed;
pub use normalize::normalize;
pub use parser::parse_program;
pub use pretty::{pretty_bexpr, pretty_expr, pretty_program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DiagKind {
    Lex,
    Parse,
    Arity,
    Unbound,
    UnknownProcedure,
    DuplicateProcedure,
    DuplicateBinder,
    BadDistribution,
}

impl fmt::Display for DiagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagKind::Lex => "lexical error",
            DiagKind::Parse => "parse error",
            DiagKind::Arity => "arity mismatch",
            DiagKind::Unbound => "unbound variable",
            DiagKind::UnknownProcedure => "unknown procedure",
            DiagKind::DuplicateProcedure => "duplicate procedure",
            DiagKind::DuplicateBinder => "duplicate binder",
            DiagKind::BadDistribution => "bad distribution",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[error("{span}: {kind}: {message}")]
pub struct Diagnostic {
    pub kind: DiagKind,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagKind, span: Span, message: String) -> Diagnostic {
        Diagnostic { kind, span, message }
    }
}

/// Parses and normalizes, failing on the first diagnostic.
pub fn load(src: &str) -> Result<Program, Diagnostic> {
    let p = normalize(&parse_program(src)?);
    match check_well_formed(&p).into_iter().next() {
        Some(d) => Err(d),
        None => Ok(p),
    }
}
