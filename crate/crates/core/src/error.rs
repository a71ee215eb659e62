use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column '{column}': cannot parse '{value}' as a finite real")]
    BadCell {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        value: String,
    },

    #[error("class column {0} not found in header")]
    MissingClassColumn(String),

    #[error("dataset is empty: {0}")]
    Empty(&'static str),

    #[error("need at least 2 distinct classes, found {0}")]
    TooFewClasses(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative density {value} at index {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("sample size {n} outside the supported range [{min}, {max}]")]
    SampleSize { n: usize, min: usize, max: usize },

    #[error("zero variance input")]
    ZeroVariance,

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("unknown class '{0}'")]
    UnknownClass(String),

    #[error("KDE bank has no model for class '{class}', variable '{variable}'")]
    IncompleteBank { class: String, variable: String },

    #[error("model file schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("malformed model: {0}")]
    Model(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
