use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix is singular to working precision; {0}")]
    Singular(&'static str),

    #[error("non-finite value at iteration {iteration} ({context})")]
    Divergence { iteration: usize, context: String },

    #[error("{loss} is undefined at index {index} (value {value})")]
    Domain {
        loss: &'static str,
        index: usize,
        value: f64,
    },

    #[error("softmax is a vector activation and has no scalar form")]
    SoftmaxScalar,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} name {name:?}")]
    UnknownName { kind: &'static str, name: String },

    #[error("column {0:?} not found in CSV header")]
    MissingColumn(String),

    #[error("cannot parse {value:?} at row {row}, column {column:?}")]
    Parse {
        row: u64,
        column: String,
        value: String,
    },

    #[error("column {0:?} is constant and cannot be normalized")]
    ConstantColumn(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed model file: {0}")]
    Malformed(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (singular systems, divergence) rather
    /// than of the input data or the configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular(_) | Error::Divergence { .. })
    }
}
