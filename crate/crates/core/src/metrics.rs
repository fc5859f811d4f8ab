//! Metrics rows and their CSV form.
//!
//! Floats are written with 17 significant digits so that parsing the file
//! gives back the exact same `f64` values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// Header of `metrics.csv`, in column order.
pub const METRICS_HEADER: [&str; 10] = [
    "t",
    "F",
    "grad_norm",
    "mem_norm",
    "zw_dist",
    "transform_residual",
    "eta",
    "rho",
    "gamma",
    "sent_nnz",
];

/// One diagnostics row, taken at iterate `w_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub t: u64,
    /// `F(w_t)`
    pub objective: f64,
    /// `‖∇F(w_t)‖`
    pub grad_norm: f64,
    /// `‖ũ_t‖`
    pub mem_norm: f64,
    /// `‖z_t − w_t‖`
    pub zw_dist: f64,
    /// ∞-norm residual of the z recursion for the step `t−1 → t` (0 at t = 0).
    pub transform_residual: f64,
    pub eta: f64,
    pub rho: f64,
    pub gamma: f64,
    /// Coordinates sent by all workers during steps `0..t`.
    pub sent_nnz: u64,
}

impl MetricsRow {
    pub fn is_finite(&self) -> bool {
        [
            self.objective,
            self.grad_norm,
            self.mem_norm,
            self.zw_dist,
            self.transform_residual,
            self.eta,
            self.rho,
            self.gamma,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Formats with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_float(field: &str, column: &str, line: u64) -> Result<f64> {
    field.trim().parse().map_err(|_| {
        Error::Config(format!(
            "line {line}: column {column}: not a number: `{field}`"
        ))
    })
}

fn parse_int(field: &str, column: &str, line: u64) -> Result<u64> {
    field.trim().parse().map_err(|_| {
        Error::Config(format!(
            "line {line}: column {column}: not an integer: `{field}`"
        ))
    })
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(METRICS_HEADER)?;
    for r in rows {
        out.write_record([
            r.t.to_string(),
            format_float(r.objective),
            format_float(r.grad_norm),
            format_float(r.mem_norm),
            format_float(r.zw_dist),
            format_float(r.transform_residual),
            format_float(r.eta),
            format_float(r.rho),
            format_float(r.gamma),
            r.sent_nnz.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(Error::Config(format!(
            "metrics header must be `{}`",
            METRICS_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in input.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let f = |k: usize| parse_float(&record[k], METRICS_HEADER[k], line);
        rows.push(MetricsRow {
            t: parse_int(&record[0], "t", line)?,
            objective: f(1)?,
            grad_norm: f(2)?,
            mem_norm: f(3)?,
            zw_dist: f(4)?,
            transform_residual: f(5)?,
            eta: f(6)?,
            rho: f(7)?,
            gamma: f(8)?,
            sent_nnz: parse_int(&record[9], "sent_nnz", line)?,
        });
    }
    Ok(rows)
}

pub fn write_metrics_file(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_metrics(rows, File::create(path)?)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRow>> {
    read_metrics(File::open(path)?)
}

/// Writes a vector as `index,value` rows.
pub fn write_vector<W: Write>(w: &ParamVector, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["index", "value"])?;
    for (j, v) in w.iter().enumerate() {
        out.write_record([j.to_string(), format_float(*v)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_vector<R: Read>(reader: R) -> Result<ParamVector> {
    let mut input = csv::Reader::from_reader(reader);
    let mut values = Vec::new();
    for (j, record) in input.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if parse_int(&record[0], "index", line)? != j as u64 {
            return Err(Error::Config(format!(
                "line {line}: indices must be 0, 1, 2, ..."
            )));
        }
        values.push(parse_float(&record[1], "value", line)?);
    }
    ParamVector::from_vec(values)
}
