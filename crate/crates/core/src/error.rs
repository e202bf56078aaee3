use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("digraph has no spanning tree ({maximum_nodes} maximum nodes)")]
    NoSpanningTree { maximum_nodes: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("initial phase diameter {0} is not below π")]
    InvalidInitialDiameter(f64),

    #[error("no admissible frustration: {0}")]
    Infeasible(String),

    #[error("need at least {needed} samples, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("cannot write output to {path}: {source}")]
    OutputUnwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed csv: {0}")]
    Csv(String),
}
