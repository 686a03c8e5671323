//! Shared CSV plumbing for calibration tables.

use std::io::Read;

use crate::error::{Error, Result};

/// Reads a headed numeric CSV, requiring exactly the given columns (in any
/// order, surrounding whitespace ignored). Returns one row of values per
/// record, ordered like `columns`.
pub(crate) fn read_numeric<R: Read>(reader: R, source: &str, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut pos = Vec::with_capacity(columns.len());
    for col in columns {
        let Some(i) = headers.iter().position(|h| h == *col) else {
            return Err(Error::Row {
                path: source.to_string(),
                line: 1,
                message: format!("missing column `{col}` (header: {})", headers.iter().collect::<Vec<_>>().join(",")),
            });
        };
        pos.push(i);
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row {
                path: source.to_string(),
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Vec::with_capacity(pos.len());
        for (&i, col) in pos.iter().zip(columns) {
            let field = rec.get(i).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| Error::Row {
                path: source.to_string(),
                line,
                message: format!("column `{col}`: cannot parse `{field}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Row {
                    path: source.to_string(),
                    line,
                    message: format!("column `{col}`: non-finite value"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub(crate) fn open(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
