use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;

/// A named relation of string cells. Column names are lower-cased so they
/// match parsed identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Self, EngineError> {
        let name = name.into().to_lowercase();
        let columns: Vec<String> = columns.into_iter().map(|c| c.trim().to_lowercase()).collect();
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(EngineError::DuplicateColumn {
                    relation: name,
                    column: c.clone(),
                });
            }
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(EngineError::Format {
                line: i + 2,
                message: format!("expected {} cells, found {}", columns.len(), row.len()),
            });
        }
        Ok(Self { name, columns, rows })
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub(crate) fn require_column(&self, column: &str) -> Result<usize, EngineError> {
        self.column_index(column).ok_or_else(|| EngineError::UnknownAttribute {
            relation: self.name.clone(),
            attribute: column.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Copy of the table without `column`, together with the removed cells.
    pub fn split_column(&self, column: &str) -> Result<(Table, Vec<String>), EngineError> {
        let idx = self.require_column(column)?;
        let mut columns = self.columns.clone();
        columns.remove(idx);
        let mut removed = Vec::with_capacity(self.rows.len());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                removed.push(r.remove(idx));
                r
            })
            .collect();
        Ok((
            Table {
                name: self.name.clone(),
                columns,
                rows,
            },
            removed,
        ))
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, table_name: &str) -> Result<Self, EngineError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(e, 1))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
            return Err(EngineError::Format {
                line: 1,
                message: "missing header".into(),
            });
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(e, 0))?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            if record.len() != header.len() {
                return Err(EngineError::Format {
                    line,
                    message: format!("expected {} cells, found {}", header.len(), record.len()),
                });
            }
            rows.push(record.iter().map(str::to_string).collect());
        }
        Table::new(table_name, header, rows)
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> EngineError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => EngineError::Io(io),
        other => EngineError::Format {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Loads a CSV file whose first line is the header.
pub fn load_csv(path: impl AsRef<Path>, table_name: &str) -> Result<Table, EngineError> {
    let file = std::fs::File::open(path.as_ref())?;
    Table::from_csv_reader(file, table_name)
}
