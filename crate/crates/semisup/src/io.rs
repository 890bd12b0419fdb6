//! CSV ingestion and write-back of semi-supervised datasets.
//!
//! A labeled file holds a header row with the primary column, the outcome
//! column and any number of further numeric columns, which become the
//! controls in header order. The unlabeled file must carry the same control
//! columns (in any order); an outcome column there is ignored.

use std::fs::File;
use std::path::{Path, PathBuf};

use semisup_core::{DataError, DesignMatrix, SemiSupervisedDataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: column '{column}' not found in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: column '{column}' does not appear in the labeled file")]
    UnexpectedColumn { path: PathBuf, column: String },
    #[error("{path}: duplicate column '{column}'")]
    DuplicateColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}, column '{column}': cannot parse '{value}' as a finite number")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row} has {found} fields, header has {expected}")]
    RowLength {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Parsed table: header and row-major numeric values.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, path: &Path, name: &str) -> Result<usize, LoadError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LoadError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    }
}

fn read_table(path: &Path) -> Result<Table, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| LoadError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for (k, h) in header.iter().enumerate() {
        if header[..k].contains(h) {
            return Err(LoadError::DuplicateColumn {
                path: path.to_path_buf(),
                column: h.clone(),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // Data rows are numbered from 1, after the header.
        let row = i + 1;
        if record.len() != header.len() {
            return Err(LoadError::RowLength {
                path: path.to_path_buf(),
                row,
                found: record.len(),
                expected: header.len(),
            });
        }
        let values = record
            .iter()
            .zip(&header)
            .map(|(cell, column)| {
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| LoadError::Cell {
                        path: path.to_path_buf(),
                        row,
                        column: column.clone(),
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>, LoadError>>()?;
        rows.push(values);
    }
    Ok(Table { header, rows })
}

/// A loaded dataset together with the control column names.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: SemiSupervisedDataset,
    pub w_columns: Vec<String>,
}

/// Load labeled and (optionally) unlabeled rows. Without an unlabeled file
/// the dataset has no unlabeled rows.
pub fn load_csv(
    labeled: &Path,
    unlabeled: Option<&Path>,
    z_column: &str,
    y_column: &str,
) -> Result<LoadedDataset, LoadError> {
    let lab = read_table(labeled)?;
    let zi = lab.column(labeled, z_column)?;
    let yi = lab.column(labeled, y_column)?;
    let w_idx: Vec<usize> = (0..lab.header.len()).filter(|&k| k != zi && k != yi).collect();
    let w_columns: Vec<String> = w_idx.iter().map(|&k| lab.header[k].clone()).collect();
    let d = w_idx.len();

    let n = lab.rows.len();
    let z_l: Vec<f64> = lab.rows.iter().map(|r| r[zi]).collect();
    let y_l: Vec<f64> = lab.rows.iter().map(|r| r[yi]).collect();
    let w_l: Vec<f64> = lab.rows.iter().flat_map(|r| w_idx.iter().map(|&k| r[k])).collect();

    let (z_u, w_u, m) = match unlabeled {
        None => (Vec::new(), Vec::new(), 0),
        Some(path) => {
            let unl = read_table(path)?;
            let uz = unl.column(path, z_column)?;
            let uw = w_columns
                .iter()
                .map(|name| unl.column(path, name))
                .collect::<Result<Vec<usize>, LoadError>>()?;
            if let Some(extra) = unl
                .header
                .iter()
                .find(|h| *h != z_column && *h != y_column && !w_columns.contains(h))
            {
                return Err(LoadError::UnexpectedColumn {
                    path: path.to_path_buf(),
                    column: extra.clone(),
                });
            }
            let z: Vec<f64> = unl.rows.iter().map(|r| r[uz]).collect();
            let w: Vec<f64> = unl.rows.iter().flat_map(|r| uw.iter().map(|&k| r[k])).collect();
            let m = unl.rows.len();
            (z, w, m)
        }
    };
    let dataset = SemiSupervisedDataset::new(
        z_l,
        DesignMatrix::new(n, d, w_l)?,
        y_l,
        z_u,
        DesignMatrix::new(m, d, w_u)?,
    )?;
    Ok(LoadedDataset { dataset, w_columns })
}

/// Shortest decimal text that parses back to the same `f64`.
fn cell(v: f64) -> String {
    format!("{v}")
}

/// Write `dataset` as a labeled and an unlabeled CSV file that
/// [`load_csv`] reads back exactly. Controls are named `w_columns` (or
/// `w1, w2, ...` when `None`).
pub fn write_csv(
    dataset: &SemiSupervisedDataset,
    labeled: &Path,
    unlabeled: &Path,
    z_column: &str,
    y_column: &str,
    w_columns: Option<&[String]>,
) -> Result<(), LoadError> {
    let d = dataset.d();
    let names: Vec<String> = match w_columns {
        Some(c) => c.to_vec(),
        None => (1..=d).map(|j| format!("w{j}")).collect(),
    };
    let open = |path: &Path| {
        csv::Writer::from_path(path).map_err(|source| LoadError::Csv {
            path: path.to_path_buf(),
            source,
        })
    };
    let wrap = |path: &Path| {
        let path = path.to_path_buf();
        move |source| LoadError::Csv { path, source }
    };

    let mut out = open(labeled)?;
    let mut header = vec![z_column.to_string(), y_column.to_string()];
    header.extend(names.iter().cloned());
    out.write_record(&header).map_err(wrap(labeled))?;
    for i in 0..dataset.n() {
        let mut rec = vec![cell(dataset.z_labeled()[i]), cell(dataset.y_labeled()[i])];
        rec.extend(dataset.w_labeled().row(i).iter().map(|v| cell(*v)));
        out.write_record(&rec).map_err(wrap(labeled))?;
    }
    out.flush().map_err(|source| LoadError::Io {
        path: labeled.to_path_buf(),
        source,
    })?;

    let mut out = open(unlabeled)?;
    let mut header = vec![z_column.to_string()];
    header.extend(names.iter().cloned());
    out.write_record(&header).map_err(wrap(unlabeled))?;
    for i in 0..dataset.m() {
        let mut rec = vec![cell(dataset.z_unlabeled()[i])];
        rec.extend(dataset.w_unlabeled().row(i).iter().map(|v| cell(*v)));
        out.write_record(&rec).map_err(wrap(unlabeled))?;
    }
    out.flush().map_err(|source| LoadError::Io {
        path: unlabeled.to_path_buf(),
        source,
    })
}
