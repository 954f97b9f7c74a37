use std::fs;
use std::io::{self, Write};
use std::path::Path;

use erval_core::report::{to_json_bytes, ReportEntry};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))
}

pub fn create_file(path: &Path) -> CliResult<io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(io::BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))
}

/// Writes `doc` as JSON to `json_out` or stdout. A `table` replaces the
/// JSON on stdout.
pub fn emit<T: Serialize>(doc: &T, json_out: Option<&Path>, table: Option<String>) -> CliResult<()> {
    let bytes = to_json_bytes(doc, false)?;
    if let Some(p) = json_out {
        write_file(p, &bytes)?;
    }
    let mut out = io::stdout().lock();
    match table {
        Some(t) => out.write_all(t.as_bytes())?,
        None if json_out.is_none() => out.write_all(&bytes)?,
        None => {}
    }
    out.flush()?;
    Ok(())
}

/// Left-aligned text columns separated by two spaces.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.zip(&width).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(c);
            s.extend(std::iter::repeat_n(' ', w - c.chars().count()));
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(&mut headers.iter().copied());
    let rules: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(&mut rules.iter().map(String::as_str)));
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    out
}

pub fn num(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.4}")
    }
}

pub fn estimate_rows(entries: &[ReportEntry]) -> Vec<Vec<String>> {
    entries
        .iter()
        .map(|e| match e {
            ReportEntry::Estimate(e) => {
                let (lo, hi) = e.interval();
                vec![
                    e.metric.clone(),
                    num(e.point),
                    num(e.std),
                    format!("[{}, {}]", num(lo), num(hi)),
                    e.k.to_string(),
                    if e.degenerate { "degenerate".into() } else { String::new() },
                ]
            }
            ReportEntry::Failed { metric, error } => {
                vec![metric.clone(), "-".into(), "-".into(), "-".into(), "-".into(), error.clone()]
            }
        })
        .collect()
}

pub const ESTIMATE_HEADERS: [&str; 6] = ["metric", "point", "std", "point ± 2 std", "k", "note"];
