use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph disconnected: n={n}, p={p}, gave up after {attempts} draws")]
    GraphDisconnected { n: usize, p: f64, attempts: usize },

    #[error("node id {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("missing value for neighbor {neighbor} of node {node}")]
    MissingNeighbor { node: usize, neighbor: usize },

    #[error("zero sampling weight for selected neighbor {neighbor} of node {node}")]
    ZeroWeight { node: usize, neighbor: usize },

    #[error("{solver} exhausted {iterations} iterations (residual {residual:.3e})")]
    SolverBudget {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("node {0} has no neighbors")]
    NoNeighbors(usize),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
