use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SkgpError {
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
    #[error("{path}: row {row}, column '{column}': cannot parse {value:?} as a finite number")]
    BadCell {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: response column {column} not found")]
    MissingResponse { path: PathBuf, column: String },
    #[error("{path}: expected {expected} feature columns, found {found}")]
    ColumnCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("unsupported {what} format version {found} (expected {expected})")]
    FormatVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error(transparent)]
    Core(#[from] skgp_core::Error),
}

pub type Result<T, E = SkgpError> = std::result::Result<T, E>;
