//! CSV ingestion.

use std::path::Path;

use crate::error::{Error, Result};
use crate::task::Task;

/// Reads a comma-separated file with a header row into a task. Every cell
/// must parse as a finite number.
pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Task> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(Error::Csv(format!("duplicate column name '{h}'")));
        }
    }
    let target_col = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::Csv(format!("target not found: '{target}'")))?;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        // header is line 1
        let line = r + 2;
        if record.len() != headers.len() {
            return Err(Error::Csv(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Csv(format!(
                    "line {line}, column '{}': '{cell}' is not a finite number",
                    headers[c]
                ))
            })?;
            columns[c].push(v);
        }
    }
    let y = columns.remove(target_col);
    let mut names = headers;
    let target_name = names.remove(target_col);
    let name = path.file_stem().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
    Task::new(name, names.into_iter().zip(columns).collect(), (target_name, y))
}
