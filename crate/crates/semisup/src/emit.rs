//! Structured output of simulation tables, power curves and single
//! estimates.
//!
//! CSV floats carry 17 significant digits. JSON uses the shortest decimal
//! form that parses back to the same value, which never needs more than 17.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use semisup_core::harness::{PowerCurve, SummaryTable};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{format:?} output is not available for {what}")]
    Unsupported { format: Format, what: &'static str },
}

/// `v` with 17 significant digits.
pub fn float17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Rows `(estimator, metric, value)` of a summary table, in plan order.
pub fn table_rows(table: &SummaryTable) -> Vec<(String, &'static str, String)> {
    let mut out = Vec::new();
    for r in &table.rows {
        let id = r.estimator.to_string();
        let mut push = |metric: &'static str, value: String| out.push((id.clone(), metric, value));
        push("bias", float17(r.bias));
        push("rmse", float17(r.rmse));
        if let Some(v) = r.length {
            push("length", float17(v));
        }
        if let Some(v) = r.coverage {
            push("coverage", float17(v));
        }
        if let Some(v) = r.coverage_se {
            push("coverage_se", float17(v));
        }
        push("reps_used", r.reps_used.to_string());
        push("rep_failures", r.rep_failures.to_string());
    }
    out
}

/// Rows `(estimator, h, rejection_rate)` sorted by estimator name, then `h`.
pub fn power_rows(curve: &PowerCurve) -> Vec<(String, f64, f64)> {
    let mut rows: Vec<(String, f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.estimator.to_string(), p.h, p.rejection_rate))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    rows
}

fn create(path: &Path) -> Result<BufWriter<File>, EmitError> {
    File::create(path).map(BufWriter::new).map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), EmitError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| EmitError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|source| EmitError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_csv(header: &str, lines: impl Iterator<Item = String>, path: &Path) -> Result<(), EmitError> {
    let io = |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = create(path)?;
    writeln!(out, "{header}").map_err(io)?;
    for line in lines {
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn emit_table(table: &SummaryTable, format: Format, path: &Path) -> Result<(), EmitError> {
    match format {
        Format::Json => write_json(table, path),
        Format::Csv => write_csv(
            "estimator,metric,value",
            table_rows(table).into_iter().map(|(e, m, v)| format!("{e},{m},{v}")),
            path,
        ),
    }
}

pub fn emit_power(curve: &PowerCurve, format: Format, path: &Path) -> Result<(), EmitError> {
    match format {
        Format::Json => write_json(curve, path),
        Format::Csv => write_csv(
            "estimator,h,rejection_rate",
            power_rows(curve)
                .into_iter()
                .map(|(e, h, r)| format!("{e},{},{}", float17(h), float17(r))),
            path,
        ),
    }
}

/// Any serializable result as JSON.
pub fn emit_json<T: Serialize>(value: &T, path: &Path) -> Result<(), EmitError> {
    write_json(value, path)
}
