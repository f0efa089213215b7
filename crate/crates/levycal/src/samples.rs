//! Sample files: one decimal value per line, `#` starts a comment line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CliError, Result};

/// Reads raw sample values; nothing is wrapped or snapped here.
pub fn ingest_samples(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_samples(BufReader::new(file), path)
}

/// Parses sample text. `origin` is only used in error messages.
pub fn read_samples<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(origin, e))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Err(CliError::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    content: text.to_string(),
                })
            }
        }
    }
    if values.is_empty() {
        return Err(CliError::EmptyFile(origin.to_path_buf()));
    }
    Ok(values)
}

/// Writes values in the same format, each `header` line as a comment.
pub fn write_samples(path: &Path, values: &[f64], header: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        for v in values {
            writeln!(out, "{v}")?;
        }
        out.flush()
    };
    write().map_err(|e| CliError::io(path, e))
}
