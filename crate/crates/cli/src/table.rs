//! CSV ingestion and output for the `x0..x{d-1},a,y` schema.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use fdiv_bounds::{Dataset, Phi};
use serde::Serialize;

/// Reads a dataset; the header row is optional and `d` is inferred from the width.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut width = None;
    let (mut x, mut a, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.with_context(|| format!("{}: row {line} is not valid CSV", path.display()))?;
        if i == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            check_header(&record, line)?;
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if w < 2 {
            bail!("row {line}: need at least the columns a and y, found {w}");
        }
        if record.len() != w {
            bail!("row {line}: expected {w} fields, found {}", record.len());
        }
        let num = |j: usize| -> Result<f64> {
            let field = &record[j];
            let v: f64 = field.parse().with_context(|| format!("row {line}, column {}: '{field}' is not a number", j + 1))?;
            if !v.is_finite() {
                bail!("row {line}, column {}: value must be finite", j + 1);
            }
            Ok(v)
        };
        for j in 0..w - 2 {
            x.push(num(j)?);
        }
        a.push(match num(w - 2)? {
            0.0 => 0u8,
            1.0 => 1u8,
            v => bail!("row {line}: treatment must be 0 or 1, found {v}"),
        });
        y.push(num(w - 1)?);
    }
    let Some(w) = width else { bail!("{} holds no rows", path.display()) };
    if a.is_empty() {
        bail!("{} holds a header but no data rows", path.display());
    }
    if !a.contains(&0) || !a.contains(&1) {
        bail!("{}: every row has the same treatment; both arms are required", path.display());
    }
    Ok(Dataset::new(w - 2, x, a, y, Phi::Identity)?)
}

fn check_header(record: &csv::StringRecord, line: usize) -> Result<()> {
    let n = record.len();
    let expected: Vec<String> = (0..n.saturating_sub(2)).map(|j| format!("x{j}")).chain(["a".into(), "y".into()]).collect();
    if n < 2 || record.iter().zip(&expected).any(|(got, want)| got != want) {
        bail!("row {line}: header must read {}, found {}", expected.join(","), record.iter().collect::<Vec<_>>().join(","));
    }
    Ok(())
}

/// Writes a dataset with a header row.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut out = BufWriter::new(file);
    let header: Vec<String> = (0..data.d()).map(|j| format!("x{j}")).chain(["a".into(), "y".into()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        for v in data.row(i) {
            write!(out, "{v},")?;
        }
        writeln!(out, "{},{}", data.treatments()[i], data.outcomes()[i])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes serializable rows as CSV with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
