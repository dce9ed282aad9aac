use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::context::usage;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes a header row and records; `None` cells are left empty.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Option<f64>>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads numeric rows with at least `min_cols` columns. A first row that
/// does not parse as numbers is taken as a header; `#` starts a comment.
pub fn read_numeric_csv(path: &Path, min_cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() >= min_cols => rows.push(v),
            Ok(_) => {
                return Err(usage(format!(
                    "{}: line {} has fewer than {min_cols} columns",
                    path.display(),
                    i + 1
                )))
            }
            Err(_) if i == 0 => {}
            Err(e) => return Err(usage(format!("{}: line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(rows)
}
