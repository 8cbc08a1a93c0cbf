//! Single-column numeric CSV files.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

/// Reads the values under `header` (which must be the only column).
pub(crate) fn read_column(path: &Path, header: &str) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if headers.len() != 1 || &headers[0] != header {
        return Err(Error::parse(path, 1, format!("expected header `{header}`")));
    }
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let v: f64 = record[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("`{}` is not a number", &record[0])))?;
        values.push(v);
    }
    Ok(values)
}
