//! Dataset file formats: headered CSV for real-valued matrices, 0/1 CSV
//! for ground-truth state matrices, and newline-delimited integer lists
//! for symbol sequences (one sequence per line, or a single column for
//! one sequence per file).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Write a real matrix as RFC-4180 CSV with a `y1..yK` header.
pub fn write_real_csv(path: &Path, data: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (1..=data.ncols()).map(|k| format!("y{k}")).collect();
    w.write_record(&header)?;
    for row in data.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_real_csv(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row: Vec<f64> = record
            .iter()
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::input(format!("bad number '{v}' in {path:?}")))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    matrix_from_rows(rows, path)
}

/// Write a binary matrix as 0/1 CSV with a `d1..dD` header.
pub fn write_binary_csv(path: &Path, data: &Array2<u8>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (1..=data.ncols()).map(|d| format!("d{d}")).collect();
    w.write_record(&header)?;
    for row in data.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary_csv(path: &Path) -> Result<Array2<u8>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row: Vec<u8> = record
            .iter()
            .map(|v| match v.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::input(format!("expected 0/1, got '{other}' in {path:?}"))),
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    matrix_from_rows(rows, path)
}

/// Write a real-probability matrix (posterior state-matrix mean).
pub fn write_prob_csv(path: &Path, data: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (1..=data.ncols()).map(|d| format!("d{d}")).collect();
    w.write_record(&header)?;
    for row in data.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_prob_csv(path: &Path) -> Result<Array2<f64>> {
    read_real_csv(path)
}

/// Symbol sequences, one sequence per line (whitespace- or
/// comma-separated). A file whose every line carries a single integer is
/// treated as one sequence spanning the file.
pub fn write_symbol_sequences(path: &Path, sequences: &[Vec<usize>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for seq in sequences {
        let line: Vec<String> = seq.iter().map(|s| s.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_symbol_sequences(path: &Path) -> Result<Vec<Vec<usize>>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines: Vec<Vec<usize>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let symbols: Vec<usize> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|tok| !tok.is_empty())
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| Error::input(format!("bad symbol '{tok}' in {path:?}")))
            })
            .collect::<Result<_>>()?;
        lines.push(symbols);
    }
    if lines.is_empty() {
        return Err(Error::input(format!("no sequences in {path:?}")));
    }
    if lines.len() > 1 && lines.iter().all(|l| l.len() == 1) {
        // single-column file: one sequence per file
        return Ok(vec![lines.into_iter().map(|l| l[0]).collect()]);
    }
    Ok(lines)
}

fn matrix_from_rows<T: Clone>(rows: Vec<Vec<T>>, path: &Path) -> Result<Array2<T>> {
    if rows.is_empty() {
        return Err(Error::input(format!("{path:?} has no data rows")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::input(format!("{path:?} has ragged rows")));
    }
    let n = rows.len();
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, cols), flat)
        .map_err(|e| Error::input(format!("{path:?}: {e}")))
}
