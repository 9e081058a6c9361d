//! CSV ingestion and report writing.

use std::fs;
use std::path::Path;

use kulsif::PointSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Reads a point set from a CSV file: one row per point, comma-separated
/// finite reals, uniform width. A single non-numeric first row is treated
/// as a header and skipped. Errors carry 1-based line numbers.
pub fn ingest_csv(path: &Path) -> Result<PointSet, IngestError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: display.clone(),
        source,
    })?;
    let parse_err = |line: usize, message: String| IngestError::Parse {
        path: display.clone(),
        line,
        message,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut data_started = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if data_started || idx > 0 {
                continue; // trailing blank lines are fine
            }
            return Err(parse_err(line_no, "empty line before data".into()));
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(parse_err(line_no, "non-finite value".into()));
                }
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(parse_err(
                            line_no,
                            format!("expected {w} columns, found {}", values.len()),
                        ));
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
                data_started = true;
            }
            Err(_) => {
                if !data_started && rows.is_empty() && idx == 0 {
                    // header row: remember the width it implies
                    width = Some(cells.len());
                    continue;
                }
                let bad = cells
                    .iter()
                    .find(|c| c.parse::<f64>().is_err())
                    .copied()
                    .unwrap_or("");
                return Err(parse_err(line_no, format!("non-numeric cell '{bad}'")));
            }
        }
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    PointSet::from_rows(&rows).map_err(|e| parse_err(1, e.to_string()))
}

/// Writes `content` to `path`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, content: &str) -> std::io::Result<()> {
    match out {
        Some(path) => fs::write(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
