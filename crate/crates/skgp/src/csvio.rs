//! CSV ingestion and output.
//!
//! Files are comma-delimited with a header row. Every cell must parse as a
//! finite decimal number; `NaN` and infinities are rejected with the
//! offending row and column. Numbers are written with 17 significant digits
//! so that a write/load cycle reproduces every bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use skgp_core::{Dataset, Matrix};

use crate::error::{Result, SkgpError};

/// Which column of a CSV holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    /// Zero-based column position.
    Index(usize),
}

impl FromStr for ResponseColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        })
    }
}

impl std::fmt::Display for ResponseColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResponseColumn::Name(n) => write!(f, "'{n}'"),
            ResponseColumn::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// Header plus parsed numeric rows.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let csv_err = |source| SkgpError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(|source| SkgpError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let mut row = Vec::with_capacity(header.len());
        for (c, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(SkgpError::BadCell {
                        path: path.to_path_buf(),
                        row: r + 1,
                        column: header.get(c).cloned().unwrap_or_else(|| c.to_string()),
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn resolve(header: &[String], col: &ResponseColumn) -> Option<usize> {
    match col {
        ResponseColumn::Name(name) => header.iter().position(|h| h == name),
        ResponseColumn::Index(i) => (*i < header.len()).then_some(*i),
    }
}

/// Loads a dataset, keeping rows in file order and every non-response
/// column as a feature.
pub fn load_csv(path: impl AsRef<Path>, response: &ResponseColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let ycol = resolve(&table.header, response).ok_or_else(|| SkgpError::MissingResponse {
        path: path.to_path_buf(),
        column: response.to_string(),
    })?;
    let p = table.header.len() - 1;
    let mut data = Vec::with_capacity(table.rows.len() * p);
    let mut y = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        for (c, &v) in row.iter().enumerate() {
            if c == ycol {
                y.push(v);
            } else {
                data.push(v);
            }
        }
    }
    let names = table
        .header
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != ycol)
        .map(|(_, h)| h.clone())
        .collect();
    let x = Matrix::from_vec(y.len(), p, data)?;
    Ok(Dataset::new(x, y)?.with_feature_names(names)?)
}

/// Loads a feature matrix for prediction. Columns are matched by name
/// against `names` when the header contains all of them; otherwise the
/// file (minus an optional response column) must have exactly
/// `names.len()` columns, taken in order.
pub fn load_features(
    path: impl AsRef<Path>,
    names: &[String],
    drop: Option<&ResponseColumn>,
) -> Result<Matrix> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let by_name: Option<Vec<usize>> = names
        .iter()
        .map(|n| table.header.iter().position(|h| h == n))
        .collect();
    let columns = match by_name {
        Some(cols) => cols,
        None => {
            let skip = drop.and_then(|d| resolve(&table.header, d));
            let cols: Vec<usize> = (0..table.header.len())
                .filter(|&c| Some(c) != skip)
                .collect();
            if cols.len() != names.len() {
                return Err(SkgpError::ColumnCount {
                    path: path.to_path_buf(),
                    expected: names.len(),
                    found: cols.len(),
                });
            }
            cols
        }
    };
    let rows = table.rows.len();
    Ok(Matrix::from_fn(rows, columns.len(), |i, j| {
        table.rows[i][columns[j]]
    }))
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| SkgpError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SkgpError + '_ {
    move |source| SkgpError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn default_feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Writes features then the response column named `response_name`.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>, response_name: &str) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let names = d
        .feature_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| default_feature_names(d.p()));
    let mut line = names.join(",");
    line.push(',');
    line.push_str(response_name);
    writeln!(out, "{line}").map_err(io_err(path))?;
    for (row, y) in d.features().rows_iter().zip(d.response()) {
        line.clear();
        for v in row {
            line.push_str(&fmt_f64(*v));
            line.push(',');
        }
        line.push_str(&fmt_f64(*y));
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Prediction table: `index,point,lower95,upper95`.
pub fn write_predictions(
    path: impl AsRef<Path>,
    point: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    writeln!(out, "index,point,lower95,upper95").map_err(io_err(path))?;
    for i in 0..point.len() {
        writeln!(
            out,
            "{},{},{},{}",
            i,
            fmt_f64(point[i]),
            fmt_f64(lower[i]),
            fmt_f64(upper[i])
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads a prediction table written by [`write_predictions`] (or an
/// external tool using the same header).
pub fn load_predictions(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let col = |name: &str| {
        resolve(&table.header, &ResponseColumn::Name(name.into())).ok_or_else(|| {
            SkgpError::MissingResponse {
                path: path.to_path_buf(),
                column: name.into(),
            }
        })
    };
    let (p, l, u) = (col("point")?, col("lower95")?, col("upper95")?);
    let pick = |c: usize| table.rows.iter().map(|r| r[c]).collect::<Vec<_>>();
    Ok((pick(p), pick(l), pick(u)))
}
