//! Line-delimited JSON helpers.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses one value per non-blank line. Line numbers are 1-based.
pub fn read<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, JsonlError> {
    Ok(read_numbered(reader)?.into_iter().map(|(_, v)| v).collect())
}

/// Like [`read`], keeping each value's line number.
pub fn read_numbered<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<(usize, T)>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| JsonlError::Parse { line: i + 1, source })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn write<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn to_string<T: Serialize>(items: &[T]) -> String {
    let mut buf = Vec::new();
    write(&mut buf, items).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sqlabs::RawQuery;

    #[test]
    fn reports_failing_line() {
        let data = "{\"id\":\"1\",\"principal\":\"a\",\"ts\":1,\"sql\":\"SELECT a FROM t\"}\n\n{oops}\n";
        match read::<RawQuery, _>(data.as_bytes()) {
            Err(JsonlError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_then_read() {
        let qs = vec![RawQuery::new("1", "a", 1, "SELECT a FROM t")];
        let text = to_string(&qs);
        assert_eq!(text, "{\"id\":\"1\",\"principal\":\"a\",\"ts\":1,\"sql\":\"SELECT a FROM t\"}\n");
        assert_eq!(read::<RawQuery, _>(text.as_bytes()).unwrap(), qs);
    }
}
