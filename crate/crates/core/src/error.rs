use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cycle detected through node {0}")]
    Cycle(usize),

    #[error("node {0} has more than one parent")]
    DuplicateChild(usize),

    #[error("node id {id} out of range (expected 0..={max})")]
    OutOfRange { id: usize, max: usize },

    #[error("cannot attach node {node} under its own descendant {target}")]
    DescendantTarget { node: usize, target: usize },

    #[error("invalid node {0}")]
    InvalidNode(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },

    #[error("node sets differ: {left} vs {right} nodes")]
    NodeSetMismatch { left: usize, right: usize },

    #[error("split produced no test nodes")]
    DegenerateSplit,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
