//! In-memory relational store executing the SELECT dialect with bag
//! semantics.
//!
//! A [`Database`] is an immutable value; [`Database::apply`] returns a new
//! version and leaves the original untouched. Unchanged tables are shared
//! between versions.

mod table;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sqlabs::{self, CmpOp, Comparison, Literal, Operand, Predicate, RawQuery, SelectItems, SqlAst, SyntaxError};

pub use table::{load_csv, Table};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown attribute `{attribute}` in relation `{relation}`")]
    UnknownAttribute { relation: String, attribute: String },
    #[error("duplicate column `{column}` in relation `{relation}`")]
    DuplicateColumn { relation: String, column: String },
    #[error("query contains an unbound VAR_VAL placeholder")]
    UnboundPlaceholder,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("column `{column}` needs {expected} values, got {got}")]
    ShapeMismatch {
        column: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rows returned by a query. `columns` is exactly the projection; duplicate
/// rows are kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRelation {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub source_query_id: String,
}

impl ResponseRelation {
    pub fn column_values(&self, column: &str) -> Option<Vec<&str>> {
        let idx = self.columns.iter().position(|c| c == column)?;
        Some(self.rows.iter().map(|r| r[idx].as_str()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Rows(ResponseRelation),
    Suppressed,
}

impl Response {
    pub fn relation(&self) -> Option<&ResponseRelation> {
        match self {
            Response::Rows(r) => Some(r),
            Response::Suppressed => None,
        }
    }

    pub fn is_suppressed(&self) -> bool {
        matches!(self, Response::Suppressed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub query: RawQuery,
    pub response: Response,
}

/// Query/response pairs ordered by timestamp (stable for equal timestamps).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResponseLog {
    entries: Vec<LogEntry>,
}

impl ResponseLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(mut entries: Vec<LogEntry>) -> Self {
        entries.sort_by_key(|e| e.query.ts);
        Self { entries }
    }

    pub fn push(&mut self, query: RawQuery, response: Response) {
        let at = self.entries.partition_point(|e| e.query.ts <= query.ts);
        self.entries.insert(at, LogEntry { query, response });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> Vec<ResponseRecord> {
        self.entries.iter().map(ResponseRecord::from).collect()
    }

    /// Rebuilds a log from its file form. Principal is unknown and the
    /// timestamp is the record position.
    pub fn from_records(records: Vec<ResponseRecord>) -> Self {
        let entries = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let response = if r.suppressed {
                    Response::Suppressed
                } else {
                    Response::Rows(ResponseRelation {
                        columns: r.columns,
                        rows: r.rows,
                        source_query_id: r.query_id.clone(),
                    })
                };
                LogEntry {
                    query: RawQuery::new(r.query_id, "", i as i64, r.sql.unwrap_or_default()),
                    response,
                }
            })
            .collect();
        Self { entries }
    }
}

/// JSONL line of a response log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub query_id: String,
    pub suppressed: bool,
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub rows: Vec<Vec<String>>,
    /// Query text, kept so predicate context is available when mining from
    /// a file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql: Option<String>,
}

impl From<&LogEntry> for ResponseRecord {
    fn from(e: &LogEntry) -> Self {
        let (suppressed, columns, rows) = match &e.response {
            Response::Rows(r) => (false, r.columns.clone(), r.rows.clone()),
            Response::Suppressed => (true, Vec::new(), Vec::new()),
        };
        Self {
            query_id: e.query.id.clone(),
            suppressed,
            columns,
            rows,
            sql: Some(e.query.sql.clone()),
        }
    }
}

/// Data modification applied between query batches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    /// Unlisted columns are stored as empty strings.
    Insert {
        table: String,
        values: Vec<(String, String)>,
    },
    /// Removes every row matching all `(column, value)` equalities.
    Delete {
        table: String,
        predicate: Vec<(String, String)>,
    },
    Update {
        table: String,
        predicate: Vec<(String, String)>,
        set: Vec<(String, String)>,
    },
    /// Appends a column; `values` holds one cell per existing row.
    AddColumn {
        table: String,
        column: String,
        values: Vec<String>,
    },
}

impl Mutation {
    pub fn table(&self) -> &str {
        match self {
            Mutation::Insert { table, .. }
            | Mutation::Delete { table, .. }
            | Mutation::Update { table, .. }
            | Mutation::AddColumn { table, .. } => table,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Database {
    tables: BTreeMap<String, Arc<Table>>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_table(mut self, table: Table) -> Self {
        self.tables.insert(table.name.clone(), Arc::new(table));
        self
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(&name.to_lowercase()).map(Arc::as_ref)
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    fn require(&self, name: &str) -> Result<&Table, EngineError> {
        self.table(name)
            .ok_or_else(|| EngineError::UnknownRelation(name.to_lowercase()))
    }

    pub fn execute(&self, query: &RawQuery) -> Result<ResponseRelation, EngineError> {
        let ast = sqlabs::parse(&query.sql)?;
        self.execute_ast(&ast, &query.id)
    }

    pub fn execute_ast(&self, ast: &SqlAst, query_id: &str) -> Result<ResponseRelation, EngineError> {
        let table = self.require(&ast.table)?;
        let filter = ast
            .selection
            .as_ref()
            .map(|p| RowFilter::compile(table, p))
            .transpose()?;
        let matching = table
            .rows
            .iter()
            .filter(|row| filter.as_ref().map_or(true, |f| f.matches(row)));

        let (columns, rows) = match &ast.items {
            SelectItems::CountStar => (
                vec![sqlabs::COUNT_STAR.to_string()],
                vec![vec![matching.count().to_string()]],
            ),
            SelectItems::Columns(cols) => {
                let idx = cols
                    .iter()
                    .map(|c| table.require_column(c))
                    .collect::<Result<Vec<_>, _>>()?;
                let rows = matching
                    .map(|row| idx.iter().map(|&i| row[i].clone()).collect())
                    .collect();
                (cols.clone(), rows)
            }
        };
        Ok(ResponseRelation {
            columns,
            rows,
            source_query_id: query_id.to_string(),
        })
    }

    /// Executes every query in order, failing on the first engine error.
    pub fn run_log(&self, queries: &[RawQuery]) -> Result<ResponseLog, EngineError> {
        let entries = queries
            .iter()
            .map(|q| {
                Ok(LogEntry {
                    query: q.clone(),
                    response: Response::Rows(self.execute(q)?),
                })
            })
            .collect::<Result<Vec<_>, EngineError>>()?;
        Ok(ResponseLog::from_entries(entries))
    }

    pub fn apply(&self, mutation: &Mutation) -> Result<Database, EngineError> {
        let current = self.require(mutation.table())?;
        let mut table = current.clone();
        match mutation {
            Mutation::Insert { values, .. } => {
                let mut row = vec![String::new(); table.columns.len()];
                for (col, v) in values {
                    row[table.require_column(&col.to_lowercase())?] = v.clone();
                }
                table.rows.push(row);
            }
            Mutation::Delete { predicate, .. } => {
                let matcher = EqualityMatcher::compile(&table, predicate)?;
                table.rows.retain(|r| !matcher.matches(r));
            }
            Mutation::Update { predicate, set, .. } => {
                let matcher = EqualityMatcher::compile(&table, predicate)?;
                let assignments = set
                    .iter()
                    .map(|(c, v)| Ok((table.require_column(&c.to_lowercase())?, v.clone())))
                    .collect::<Result<Vec<_>, EngineError>>()?;
                for row in table.rows.iter_mut().filter(|r| matcher.matches(r)) {
                    for (i, v) in &assignments {
                        row[*i] = v.clone();
                    }
                }
            }
            Mutation::AddColumn { column, values, .. } => {
                let column = column.to_lowercase();
                if table.column_index(&column).is_some() {
                    return Err(EngineError::DuplicateColumn {
                        relation: table.name.clone(),
                        column,
                    });
                }
                if values.len() != table.rows.len() {
                    return Err(EngineError::ShapeMismatch {
                        column,
                        expected: table.rows.len(),
                        got: values.len(),
                    });
                }
                table.columns.push(column);
                for (row, v) in table.rows.iter_mut().zip(values) {
                    row.push(v.clone());
                }
            }
        }
        let mut next = self.clone();
        next.tables.insert(table.name.clone(), Arc::new(table));
        Ok(next)
    }
}

/// Orders a cell against a literal: numerically when both sides parse as
/// finite numbers, otherwise as case-insensitive strings.
pub fn compare_values(cell: &str, literal: &str) -> Ordering {
    match (as_number(cell), as_number(literal)) {
        (Some(a), Some(b)) => a.partial_cmp(&b).unwrap_or(Ordering::Equal),
        _ => cell.to_lowercase().cmp(&literal.to_lowercase()),
    }
}

fn as_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn comparison_holds(cell: &str, op: CmpOp, literal: &str) -> bool {
    let ord = compare_values(cell, literal);
    match op {
        CmpOp::Eq | CmpOp::In => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    }
}

enum RowFilter {
    Cmp {
        idx: usize,
        op: CmpOp,
        values: Vec<String>,
    },
    And(Vec<RowFilter>),
    Or(Vec<RowFilter>),
}

impl RowFilter {
    fn compile(table: &Table, p: &Predicate) -> Result<Self, EngineError> {
        Ok(match p {
            Predicate::Cmp(c) => Self::compile_cmp(table, c)?,
            Predicate::And(ps) => RowFilter::And(
                ps.iter()
                    .map(|p| Self::compile(table, p))
                    .collect::<Result<_, _>>()?,
            ),
            Predicate::Or(ps) => RowFilter::Or(
                ps.iter()
                    .map(|p| Self::compile(table, p))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    fn compile_cmp(table: &Table, c: &Comparison) -> Result<Self, EngineError> {
        let idx = table.require_column(&c.column)?;
        let lits: Vec<&Literal> = match &c.rhs {
            Operand::Value(v) => vec![v],
            Operand::List(vs) => vs.iter().collect(),
        };
        let values = lits
            .into_iter()
            .map(|l| l.text().map(str::to_string).ok_or(EngineError::UnboundPlaceholder))
            .collect::<Result<_, _>>()?;
        Ok(RowFilter::Cmp { idx, op: c.op, values })
    }

    fn matches(&self, row: &[String]) -> bool {
        match self {
            RowFilter::Cmp { idx, op, values } => values
                .iter()
                .any(|v| comparison_holds(&row[*idx], *op, v)),
            RowFilter::And(fs) => fs.iter().all(|f| f.matches(row)),
            RowFilter::Or(fs) => fs.iter().any(|f| f.matches(row)),
        }
    }
}

struct EqualityMatcher(Vec<(usize, String)>);

impl EqualityMatcher {
    fn compile(table: &Table, predicate: &[(String, String)]) -> Result<Self, EngineError> {
        predicate
            .iter()
            .map(|(c, v)| Ok((table.require_column(&c.to_lowercase())?, v.clone())))
            .collect::<Result<_, _>>()
            .map(EqualityMatcher)
    }

    fn matches(&self, row: &[String]) -> bool {
        self.0
            .iter()
            .all(|(i, v)| compare_values(&row[*i], v) == Ordering::Equal)
    }
}
