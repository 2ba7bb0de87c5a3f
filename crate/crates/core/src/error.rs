//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by dataset handling, kernel evaluation, scatter
/// assembly, and eigensolves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse failure in {path} at (row {row}, col {col}): {message}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        message: String,
    },

    #[error("non-finite value at (row {row}, col {col}) in {path}")]
    NonFinite { path: String, row: usize, col: usize },

    #[error("view {view}: {rows} data rows but {labels} labels")]
    LabelCountMismatch { view: usize, rows: usize, labels: usize },

    #[error("view {view} contains label {label:?} absent from the global class set")]
    UnknownClass { view: usize, label: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid kernel spec: {0}")]
    InvalidKernel(String),

    #[error("class {class:?} has no samples in any view")]
    EmptyClass { class: String },

    #[error("class {class:?} has no samples in view {view}, required here")]
    MissingClassInView { class: String, view: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asym:e})")]
    NotSymmetric { max_asym: f64 },

    #[error("regularized factorization failed: smallest eigenvalue {min_eig:e} is not positive")]
    FactorizationFailed { min_eig: f64 },

    #[error("rank deficient input: {deficient} column(s) numerically dependent")]
    RankDeficient { deficient: usize },

    #[error("chordal distance undefined for the zero pair")]
    ZeroPair,

    #[error("degenerate kernel: whitened operator eigenvalue spread {spread:e} signals rank collapse")]
    DegenerateKernel { spread: f64 },

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("unknown view index {0}")]
    UnknownView(usize),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
