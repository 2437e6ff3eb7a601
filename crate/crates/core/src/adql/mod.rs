//! The ADQL subset served over TAP: single-table SELECT against
//! `ivoa.obscore` with comparisons, BETWEEN, LIKE, IS NULL and cone
//! CONTAINS predicates.

mod ast;
mod eval;
mod lexer;
mod parser;

pub use ast::{AdqlQuery, CmpOp, Expr, Operand, OrderBy, Selection};
pub use eval::{evaluate, like_match, QueryResult};
pub use lexer::{tokenize, Keyword, Token, TokenKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdqlError {
    #[error("unterminated string literal starting at offset {offset}")]
    UnterminatedString { offset: usize },
    #[error("illegal character {ch:?} at offset {offset}")]
    IllegalCharacter { ch: char, offset: usize },
    #[error("syntax error at offset {offset}: expected {expected}, found {found}")]
    Syntax {
        expected: String,
        found: String,
        offset: usize,
    },
    #[error("unsupported feature at offset {offset}: {feature}")]
    UnsupportedFeature { feature: String, offset: usize },
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("invalid argument: {0}")]
    Domain(String),
}

impl AdqlError {
    /// Byte offset into the query text, for lexical and syntactic errors.
    pub fn offset(&self) -> Option<usize> {
        match self {
            AdqlError::UnterminatedString { offset }
            | AdqlError::IllegalCharacter { offset, .. }
            | AdqlError::Syntax { offset, .. }
            | AdqlError::UnsupportedFeature { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

pub fn parse_query(text: &str) -> Result<AdqlQuery, AdqlError> {
    let tokens = tokenize(text)?;
    parser::parse(&tokens, text.len())
}
