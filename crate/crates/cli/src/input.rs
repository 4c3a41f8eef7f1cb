//! CSV ingestion with delimiter detection and case-insensitive column lookup.

use std::fs;
use std::path::Path;

use medmarg::regression::Dataset;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub y: String,
    pub x: String,
    pub w: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub delimiter: char,
}

/// `;` when the header has more semicolons than commas, `,` otherwise.
pub fn detect_delimiter(header: &str) -> u8 {
    let semis = header.matches(';').count();
    let commas = header.matches(',').count();
    if semis > commas {
        b';'
    } else {
        b','
    }
}

fn column_index(headers: &csv::StringRecord, name: &str, flag: &str) -> CliResult<usize> {
    let want = name.trim().to_lowercase();
    headers
        .iter()
        .position(|h| h.trim().to_lowercase() == want)
        .ok_or_else(|| {
            let have: Vec<&str> = headers.iter().collect();
            CliError::Input(format!("column '{name}' ({flag}) not found; header has {have:?}"))
        })
}

fn parse_value(raw: &str, line: u64, column: &str) -> CliResult<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| CliError::Parse {
        line,
        message: format!("column '{column}': '{raw}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(CliError::Parse { line, message: format!("column '{column}': non-finite value '{raw}'") });
    }
    Ok(v)
}

pub fn parse_dataset(text: &str, cols: &ColumnMap) -> CliResult<LoadedData> {
    let header_line = text.lines().next().ok_or_else(|| CliError::Parse { line: 1, message: "empty input".into() })?;
    let delimiter = detect_delimiter(header_line);
    eprintln!("input: detected delimiter '{}'", delimiter as char);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let iy = column_index(&headers, &cols.y, "--y-col")?;
    let ix = column_index(&headers, &cols.x, "--x-col")?;
    let iw = column_index(&headers, &cols.w, "--w-col")?;

    let (mut y, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("expected {expected_len} fields, found {len}")
                }
                _ => e.to_string(),
            };
            CliError::Parse { line, message }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let yi = parse_value(&record[iy], line, &cols.y)?;
        if yi != 0.0 && yi != 1.0 {
            return Err(CliError::Parse { line, message: format!("outcome must be binary, got '{}'", &record[iy]) });
        }
        y.push(yi);
        x.push(parse_value(&record[ix], line, &cols.x)?);
        w.push(parse_value(&record[iw], line, &cols.w)?);
    }
    let dataset = Dataset::new(y, x, w)?;
    Ok(LoadedData { dataset, delimiter: delimiter as char })
}

pub fn read_dataset(path: &Path, cols: &ColumnMap) -> CliResult<LoadedData> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset(&text, cols)
}
