use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("size-biasing undefined: all mass at 0")]
    ZeroMean,
    #[error("heavy-tailed input rejected: {0}")]
    HeavyTail(String),
    #[error("no admissible preprocessing parameters: {0}")]
    NoAdmissibleParams(String),
    #[error("invalid preprocessing parameters: {0}")]
    InvalidParams(String),
    #[error("size cap exceeded: {0}")]
    SizeCap(String),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("rejection sampling gave up: {0}")]
    Rejection(String),
    #[error("state space cap exceeded: {vertices} vertices (cap {cap})")]
    StateSpace { vertices: usize, cap: usize },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("threshold bracket does not straddle target: {0}")]
    Bracket(String),
    #[error("coupling mismatch: {0}")]
    Coupling(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
