use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} has zero norm")]
    ZeroRow { row: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested {requested} patches but the grid only has {available} positions")]
    TooManyPatches { requested: usize, available: usize },

    #[error("at least two patches are required for negative weighting, got {0}")]
    DegenerateAnchor(usize),

    #[error("exact transport oracle supports at most 8 patches, got {0}")]
    TooLarge(usize),

    #[error("sinkhorn did not converge: marginal error {marginal_error:e} after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        marginal_error: f64,
        /// Last iterate, usable by callers that tolerate an inexact plan.
        plan: Box<crate::ot::TransportPlan>,
    },

    #[error("layer mismatch: {0}")]
    LayerMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad magic bytes {found:?}, expected \"MNCE\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {0}")]
    BadVersion(u32),

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("trailing bytes after last layer: {0} bytes")]
    TrailingBytes(usize),

    #[error("layer {layer}: {source}")]
    InLayer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

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
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_layer(layer: usize, source: Error) -> Self {
        Error::InLayer {
            layer,
            source: Box::new(source),
        }
    }

    /// Innermost error, skipping layer context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InLayer { source, .. } => source.root(),
            other => other,
        }
    }
}
