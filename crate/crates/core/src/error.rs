use thiserror::Error;

/// Errors raised by the numeric kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward requires a 1x1 output, got {0}x{1}")]
    NotScalar(usize, usize),
    #[error("variable {0} does not belong to this tape")]
    ForeignVar(usize),
}

/// Crate-level error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] DiffError),
    #[error("invalid hypergraph: {0}")]
    InvalidHypergraph(String),
    #[error("node {node} out of range (num_nodes = {num_nodes})")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("nothing tunable for node {0}: no counterfactual possible")]
    NothingTunable(usize),
    #[error("search space for node {node} has {size} entries, above the enumeration cap {cap}")]
    DegreeCap { node: usize, size: usize, cap: usize },
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
