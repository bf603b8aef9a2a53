//! CSV exchange formats for spectra and sweep curves.
//!
//! One header line with column names and units in parentheses; spectrum
//! headers also carry the resolution bandwidth so files are self-describing:
//!
//! ```text
//! frequency (Hz),power (dBm @ RBW 2000000 Hz)
//! frequency (Hz),psd (V^2/Hz @ RBW 763000 Hz)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{SigioError, Spectrum, SpectrumUnit};

pub fn write_spectrum_csv(path: impl AsRef<Path>, spec: &Spectrum) -> Result<(), SigioError> {
    let mut w = BufWriter::new(File::create(path)?);
    let (name, unit) = match spec.unit {
        SpectrumUnit::DbmPerRbw => ("power", "dBm"),
        SpectrumUnit::VoltsSquaredPerHz => ("psd", "V^2/Hz"),
    };
    writeln!(w, "frequency (Hz),{name} ({unit} @ RBW {} Hz)", spec.rbw)?;
    for (f, v) in spec.frequencies.iter().zip(&spec.values) {
        writeln!(w, "{f},{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectrum_csv(path: impl AsRef<Path>) -> Result<Spectrum, SigioError> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| SigioError::BadCsv { line: 1, msg: "empty file".into() })??;
    let (unit, rbw) = parse_spectrum_header(&header)?;
    let mut frequencies = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(2, ',');
        let f = parse_field(cols.next(), i + 2)?;
        let v = parse_field(cols.next(), i + 2)?;
        frequencies.push(f);
        values.push(v);
    }
    Spectrum::new(frequencies, values, rbw, unit)
}

fn parse_spectrum_header(header: &str) -> Result<(SpectrumUnit, f64), SigioError> {
    let unit = if header.contains("dBm") {
        SpectrumUnit::DbmPerRbw
    } else if header.contains("V^2/Hz") {
        SpectrumUnit::VoltsSquaredPerHz
    } else {
        return Err(SigioError::BadCsv { line: 1, msg: format!("unrecognized unit in header: {header}") });
    };
    let rbw = header
        .split("RBW")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| SigioError::BadCsv { line: 1, msg: "header missing RBW".into() })?;
    Ok((unit, rbw))
}

fn parse_field(field: Option<&str>, line: usize) -> Result<f64, SigioError> {
    field
        .map(str::trim)
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| SigioError::BadCsv { line, msg: "expected numeric field".into() })
}

/// Write a generic multi-column curve, e.g. a range sweep or autocorrelation.
/// `header` is the full one-line header, columns are rows of equal arity.
pub fn write_curve_csv(path: impl AsRef<Path>, header: &str, rows: &[Vec<f64>]) -> Result<(), SigioError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                write!(w, ",")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a numeric curve CSV (header returned verbatim).
pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<(String, Vec<Vec<f64>>), SigioError> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| SigioError::BadCsv { line: 1, msg: "empty file".into() })??;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|s| parse_field(Some(s), i + 2)).collect();
        rows.push(row?);
    }
    Ok((header, rows))
}
