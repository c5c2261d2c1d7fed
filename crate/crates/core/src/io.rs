//! Loading and saving sample batches as CSV or JSON lines.
//!
//! CSV: one sample per row, comma-separated, optional single header line
//! (recognised by a non-numeric first row). JSONL: one JSON array of numbers
//! per line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use crate::{invalid, Error, Result, SampleBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Csv,
    Jsonl,
}

impl SampleFormat {
    /// Guess from the file extension; anything other than `.jsonl`/`.json`
    /// is treated as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Self::Jsonl,
            _ => Self::Csv,
        }
    }
}

impl FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => invalid(format!("unknown sample format '{other}' (expected csv or jsonl)")),
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses CSV text into a batch.
pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<SampleBatch> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut d = 0usize;
    let mut n = 0usize;
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(f64::from_str).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if first => {
                // Header line.
                first = false;
                continue;
            }
            Err(_) => {
                let bad = rec.iter().find(|f| f.parse::<f64>().is_err()).unwrap_or("");
                return Err(parse_err(line, format!("non-numeric cell '{bad}'")));
            }
        };
        first = false;
        if n == 0 {
            d = row.len();
        } else if row.len() != d {
            return Err(parse_err(line, format!("ragged row: {} columns, expected {d}", row.len())));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(line, format!("non-finite value {v}")));
        }
        data.extend(row);
        n += 1;
    }
    if n == 0 {
        return Err(parse_err(1, "no samples found"));
    }
    SampleBatch::new(data, n, d)
}

/// Parses JSON-lines text into a batch.
pub fn parse_jsonl<R: std::io::Read>(reader: R) -> Result<SampleBatch> {
    let mut data = Vec::new();
    let mut d = 0usize;
    let mut n = 0usize;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if n == 0 {
            d = row.len();
            if d == 0 {
                return Err(parse_err(lineno, "empty sample"));
            }
        } else if row.len() != d {
            return Err(parse_err(lineno, format!("ragged row: {} values, expected {d}", row.len())));
        }
        data.extend(row);
        n += 1;
    }
    if n == 0 {
        return Err(parse_err(1, "no samples found"));
    }
    SampleBatch::new(data, n, d)
}

pub fn load_samples(path: &Path, format: SampleFormat) -> Result<SampleBatch> {
    let file = fs::File::open(path)?;
    match format {
        SampleFormat::Csv => parse_csv(file),
        SampleFormat::Jsonl => parse_jsonl(file),
    }
}

/// Writes a batch. Values use Rust's shortest round-trip formatting, so a
/// reload reproduces every entry exactly.
pub fn write_samples<W: Write>(batch: &SampleBatch, mut w: W, format: SampleFormat) -> Result<()> {
    for row in batch.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        match format {
            SampleFormat::Csv => writeln!(w, "{}", cells.join(","))?,
            SampleFormat::Jsonl => writeln!(w, "[{}]", cells.join(","))?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_samples(batch: &SampleBatch, path: &Path, format: SampleFormat) -> Result<()> {
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    write_samples(batch, file, format)
}
