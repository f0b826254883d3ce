// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV persistence for series and piecewise signals.
//!
//! A series file has header `index,value` (one column) or `index,v1,...,vp`,
//! with 1-based indices. A signal is stored as its materialized series plus a
//! sidecar `<stem>.cps.csv` with header `k,n_k,level` or `k,n_k,l1,...,lp`.
//! Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::signal::{PiecewiseSignal, Series};

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn header(first: &str, second: &str, stem: &str, dim: usize) -> Vec<String> {
    let mut h = vec![first.to_string()];
    if dim == 1 {
        h.push(second.to_string());
    } else {
        h.extend((1..=dim).map(|j| format!("{stem}{j}")));
    }
    h
}

pub fn write_series_to<W: Write>(writer: W, series: &Series, label: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header("index", "value", "v", series.dim()))
        .map_err(|e| csv_error(label, e))?;
    for (i, row) in series.rows().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(|e| csv_error(label, e))?;
    }
    w.flush().map_err(|e| Error::io(label, e))
}

pub fn read_series_from<R: Read>(reader: R, label: &Path) -> Result<Series> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers().map_err(|e| csv_error(label, e))?.clone();
    if headers.len() < 2 || &headers[0] != "index" {
        return Err(Error::parse(label, 1, "expected header `index,value` or `index,v1,...,vp`"));
    }
    let dim = headers.len() - 1;
    let mut values = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(label, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(k + 2);
        let index: usize = rec[0]
            .parse()
            .map_err(|_| Error::parse(label, line, format!("bad index `{}`", &rec[0])))?;
        if index != k + 1 {
            return Err(Error::parse(label, line, format!("expected index {}, got {index}", k + 1)));
        }
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(label, line, format!("bad number `{field}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(label, line, format!("non-finite value `{field}`")));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::parse(label, 1, "series has no rows"));
    }
    Series::from_flat(dim, values)
}

pub fn write_series(path: &Path, series: &Series) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_series_to(file, series, path)
}

pub fn read_series(path: &Path) -> Result<Series> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_series_from(file, path)
}

/// `dir/stem.csv` -> `dir/stem.cps.csv`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.cps.csv"))
}

pub fn write_changepoints_to<W: Write>(writer: W, signal: &PiecewiseSignal, label: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut head = vec!["k".to_string(), "n_k".to_string()];
    head.extend(level_header(signal.dim()));
    w.write_record(&head).map_err(|e| csv_error(label, e))?;
    for (k, (&n_k, level)) in signal.changepoints().iter().zip(signal.levels().rows()).enumerate() {
        let mut rec = vec![(k + 1).to_string(), n_k.to_string()];
        rec.extend(level.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(|e| csv_error(label, e))?;
    }
    w.flush().map_err(|e| Error::io(label, e))
}

fn level_header(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["level".into()]
    } else {
        (1..=dim).map(|j| format!("l{j}")).collect()
    }
}

/// Reads a sidecar; `n` is the length of the accompanying series.
pub fn read_changepoints_from<R: Read>(reader: R, n: usize, label: &Path) -> Result<PiecewiseSignal> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers().map_err(|e| csv_error(label, e))?.clone();
    if headers.len() < 3 || &headers[0] != "k" || &headers[1] != "n_k" {
        return Err(Error::parse(label, 1, "expected header `k,n_k,level...`"));
    }
    let dim = headers.len() - 2;
    let mut cps = Vec::new();
    let mut levels = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(label, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(k + 2);
        let n_k: usize = rec[1]
            .parse()
            .map_err(|_| Error::parse(label, line, format!("bad change point `{}`", &rec[1])))?;
        cps.push(n_k);
        for field in rec.iter().skip(2) {
            levels.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::parse(label, line, format!("bad level `{field}`")))?,
            );
        }
    }
    PiecewiseSignal::new(n, &cps, Series::from_flat(dim, levels)?)
}

/// Writes the materialized series to `path` and the change points next to it.
pub fn write_signal(path: &Path, signal: &PiecewiseSignal) -> Result<()> {
    write_series(path, &signal.materialize())?;
    let side = sidecar_path(path);
    let file = File::create(&side).map_err(|e| Error::io(&side, e))?;
    write_changepoints_to(file, signal, &side)
}

/// Reads a signal, preferring the sidecar and otherwise inferring segments
/// from runs of equal rows.
pub fn read_signal(path: &Path) -> Result<PiecewiseSignal> {
    let series = read_series(path)?;
    let side = sidecar_path(path);
    if side.exists() {
        let file = File::open(&side).map_err(|e| Error::io(&side, e))?;
        let sig = read_changepoints_from(file, series.len(), &side)?;
        if sig.dim() != series.dim() {
            return Err(Error::InvalidSignal(format!(
                "{} has dimension {} but {} has {}",
                side.display(),
                sig.dim(),
                path.display(),
                series.dim()
            )));
        }
        Ok(sig)
    } else {
        PiecewiseSignal::from_series(&series)
    }
}
