//! SQL parsing and constant-free query abstraction.
//!
//! Two queries that differ only in their literal values abstract to the same
//! [`AbstractedQuery`]; its `template` is the canonical rendering of the query
//! with every literal replaced by `VAR_VAL`.

mod ast;
mod lexer;
mod parser;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

pub use ast::{CmpOp, Comparison, Literal, Operand, Predicate, SelectItems, SqlAst};
pub use lexer::PLACEHOLDER;
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {position}: found {found}, expected {expected}")]
pub struct SyntaxError {
    pub position: usize,
    pub found: String,
    pub expected: String,
}

impl SyntaxError {
    pub(crate) fn new(position: usize, found: impl Into<String>, expected: impl Into<String>) -> Self {
        Self {
            position,
            found: found.into(),
            expected: expected.into(),
        }
    }
}

/// One audit-log entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawQuery {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub principal: String,
    /// Milliseconds.
    pub ts: i64,
    pub sql: String,
}

impl RawQuery {
    pub fn new(id: impl Into<String>, principal: impl Into<String>, ts: i64, sql: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            principal: principal.into(),
            ts,
            sql: sql.into(),
        }
    }
}

fn string_or_number<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Str(String),
        Int(i64),
        Uint(u64),
    }
    Ok(match Id::deserialize(de)? {
        Id::Str(s) => s,
        Id::Int(i) => i.to_string(),
        Id::Uint(u) => u.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbstractedQuery {
    pub template: String,
    pub projection: Vec<String>,
    pub relation: String,
    pub predicate_shape: Vec<(String, CmpOp)>,
}

/// Projection entry used for `COUNT(*)` queries.
pub const COUNT_STAR: &str = "COUNT(*)";

/// Replaces every literal with the placeholder; IN-lists collapse to a single
/// placeholder.
pub fn abstract_ast(ast: &SqlAst) -> AbstractedQuery {
    let selection = ast.selection.as_ref().map(|p| {
        p.map_literals(&|c| match c.rhs {
            Operand::Value(_) => Operand::Value(Literal::Placeholder),
            Operand::List(_) => Operand::List(vec![Literal::Placeholder]),
        })
    });
    let canonical = SqlAst {
        items: ast.items.clone(),
        table: ast.table.clone(),
        selection,
    };
    let projection = match &ast.items {
        SelectItems::Columns(cols) => cols.clone(),
        SelectItems::CountStar => vec![COUNT_STAR.to_string()],
    };
    let predicate_shape = ast
        .selection
        .as_ref()
        .map(|p| {
            p.comparisons()
                .into_iter()
                .map(|c| (c.column.clone(), c.op))
                .collect()
        })
        .unwrap_or_default();
    AbstractedQuery {
        template: canonical.to_string(),
        projection,
        relation: ast.table.clone(),
        predicate_shape,
    }
}

pub fn abstract_sql(sql: &str) -> Result<AbstractedQuery, SyntaxError> {
    parse(sql).map(|ast| abstract_ast(&ast))
}

pub fn abstract_query(q: &RawQuery) -> Result<AbstractedQuery, SyntaxError> {
    abstract_sql(&q.sql)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("log entry {index}: {source}")]
pub struct LogError {
    pub index: usize,
    #[source]
    pub source: SyntaxError,
}

/// Order-preserving abstraction of a whole log; fails on the first entry
/// that does not parse.
pub fn abstract_log(log: &[RawQuery]) -> Result<Vec<AbstractedQuery>, LogError> {
    log.iter()
        .enumerate()
        .map(|(index, q)| abstract_query(q).map_err(|source| LogError { index, source }))
        .collect()
}
