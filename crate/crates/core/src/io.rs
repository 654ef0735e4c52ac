//! Plain-text file formats.
//!
//! - signal CSV: header `index,re,im`, 1-based index, one row per sample
//! - mask file: one 1-based index per line, sorted
//! - model JSON: array of `{"f", "c_re", "c_im", "tau"}` objects
//! - matrix CSV: header `row,col,re,im`, 1-based, every entry present once

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{HvafError, Result};
use crate::signal::{Component, ExponentialModel, SamplingMask};
use crate::{c64, ComplexSignal};

fn csv_error(e: csv::Error) -> HvafError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HvafError::Io(io),
        other => HvafError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

#[derive(Serialize, Deserialize)]
struct SignalRow {
    index: usize,
    re: f64,
    im: f64,
}

/// Parse a signal CSV. Rows must list indices `1..=n` in order.
pub fn read_signal<R: Read>(reader: R) -> Result<ComplexSignal> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &["index", "re", "im"])?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<SignalRow>() {
        let row = rec.map_err(csv_error)?;
        let line = out.len() + 2;
        if row.index != out.len() + 1 {
            return Err(HvafError::Parse {
                line,
                message: format!("expected index {}, found {}", out.len() + 1, row.index),
            });
        }
        if !(row.re.is_finite() && row.im.is_finite()) {
            return Err(HvafError::Parse {
                line,
                message: "non-finite sample".into(),
            });
        }
        out.push(c64::new(row.re, row.im));
    }
    if out.is_empty() {
        return Err(HvafError::Parse {
            line: 1,
            message: "signal file has no samples".into(),
        });
    }
    Ok(out)
}

pub fn write_signal<W: Write>(writer: W, x: &[c64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (k, v) in x.iter().enumerate() {
        wtr.serialize(SignalRow {
            index: k + 1,
            re: v.re,
            im: v.im,
        })
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(csv_error)?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(HvafError::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(())
}

/// Parse a mask file for a signal of length `n`. Blank lines are skipped.
pub fn read_mask<R: Read>(mut reader: R, n: usize) -> Result<SamplingMask> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut indices: Vec<usize> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let idx: usize = line.parse().map_err(|e| HvafError::Parse {
            line: k + 1,
            message: format!("`{line}` is not an index: {e}"),
        })?;
        if idx == 0 || idx > n {
            return Err(HvafError::Parse {
                line: k + 1,
                message: format!("index {idx} outside 1..={n}"),
            });
        }
        if indices.last().is_some_and(|&p| p >= idx) {
            return Err(HvafError::Parse {
                line: k + 1,
                message: "indices must be strictly increasing".into(),
            });
        }
        indices.push(idx);
    }
    SamplingMask::new(n, indices)
}

pub fn write_mask<W: Write>(mut writer: W, mask: &SamplingMask) -> Result<()> {
    for i in mask.indices() {
        writeln!(writer, "{i}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRecord {
    pub f: f64,
    pub c_re: f64,
    pub c_im: f64,
    pub tau: f64,
}

impl From<&Component> for ComponentRecord {
    fn from(c: &Component) -> Self {
        Self {
            f: c.freq,
            c_re: c.amplitude.re,
            c_im: c.amplitude.im,
            tau: c.damping,
        }
    }
}

pub fn model_to_records(model: &ExponentialModel) -> Vec<ComponentRecord> {
    model.components.iter().map(ComponentRecord::from).collect()
}

pub fn records_to_model(records: &[ComponentRecord]) -> Result<ExponentialModel> {
    ExponentialModel::new(
        records
            .iter()
            .map(|r| Component::new(r.f, c64::new(r.c_re, r.c_im), r.tau))
            .collect(),
    )
}

pub fn read_model<R: Read>(reader: R) -> Result<ExponentialModel> {
    let records: Vec<ComponentRecord> = serde_json::from_reader(reader)?;
    records_to_model(&records)
}

pub fn write_model<W: Write>(writer: W, model: &ExponentialModel) -> Result<()> {
    serde_json::to_writer_pretty(writer, &model_to_records(model))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MatrixRow {
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

/// Parse a matrix CSV; the shape is the largest row and column index.
pub fn read_matrix<R: Read>(reader: R) -> Result<Mat<c64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &["row", "col", "re", "im"])?;
    let mut entries = Vec::new();
    for (k, rec) in rdr.deserialize::<MatrixRow>().enumerate() {
        let r = rec.map_err(csv_error)?;
        if r.row == 0 || r.col == 0 {
            return Err(HvafError::Parse {
                line: k + 2,
                message: "row and col are 1-based".into(),
            });
        }
        entries.push((k + 2, r));
    }
    let rows = entries.iter().map(|(_, r)| r.row).max().unwrap_or(0);
    let cols = entries.iter().map(|(_, r)| r.col).max().unwrap_or(0);
    if rows * cols != entries.len() {
        return Err(HvafError::Parse {
            line: 0,
            message: format!("{} entries do not fill a {rows}x{cols} matrix", entries.len()),
        });
    }
    let mut seen = vec![false; rows * cols];
    let mut out = Mat::<c64>::zeros(rows, cols);
    for (line, r) in entries {
        let slot = (r.col - 1) * rows + r.row - 1;
        if seen[slot] {
            return Err(HvafError::Parse {
                line,
                message: format!("duplicate entry ({}, {})", r.row, r.col),
            });
        }
        seen[slot] = true;
        out[(r.row - 1, r.col - 1)] = c64::new(r.re, r.im);
    }
    Ok(out)
}

pub fn write_matrix<W: Write>(writer: W, m: &Mat<c64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            wtr.serialize(MatrixRow {
                row: i + 1,
                col: j + 1,
                re: v.re,
                im: v.im,
            })
            .map_err(csv_error)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_signal_file(path: &Path) -> Result<ComplexSignal> {
    read_signal(fs::File::open(path)?)
}

pub fn write_signal_file(path: &Path, x: &[c64]) -> Result<()> {
    write_signal(fs::File::create(path)?, x)
}
