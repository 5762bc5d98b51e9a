use thiserror::Error;

use crate::sparse::SolveReport;

#[derive(Debug, Error)]
pub enum HomogError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("grid resolution {0} too small (need at least 4 cells per side)")]
    Resolution(usize),

    #[error("pore space is disconnected on the {n}x{n} grid ({components} components)")]
    Disconnected { n: usize, components: usize },

    #[error("assembly error: triplet ({row}, {col}, {value}) out of range for {n_rows}x{n_cols} matrix")]
    Assembly {
        row: usize,
        col: usize,
        value: f64,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("matrix flagged symmetric is not: |A[{row}][{col}] - A[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("{what} did not converge: {report}")]
    NotConverged { what: String, report: SolveReport },

    #[error("zero total weight in mean projection")]
    ZeroWeight,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("grid of {n} cells is not aligned with eps = 1/{k}")]
    Misaligned { n: usize, k: usize },

    #[error("{0}")]
    IllPosed(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<HomogError>,
    },

    #[error("growth guard tripped at step {step}: max|c| = {max_abs:e} > {limit}")]
    Growth { step: usize, max_abs: f64, limit: f64 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("config: {0}")]
    ConfigMissing(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed input file: {0}")]
    Parse(String),
}

impl HomogError {
    pub fn at_step(self, step: usize) -> Self {
        HomogError::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, HomogError>;
