use thiserror::Error;

use crate::problems::libsvm::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid compressor: {0}")]
    InvalidCompressor(String),

    #[error("invalid participation scheme: {0}")]
    InvalidScheme(String),

    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("node index {node} out of range (n = {nodes})")]
    NodeOutOfRange { node: usize, nodes: usize },

    #[error("sample index {sample} out of range (m = {samples})")]
    SampleOutOfRange { sample: usize, samples: usize },

    #[error("cannot split {samples} samples across {nodes} nodes")]
    NotEnoughSamples { samples: usize, nodes: usize },

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    #[error("number of rounds must be at least 1")]
    InvalidHorizon,

    #[error("non-finite value in {what} at round {round}")]
    Divergence { round: usize, what: &'static str },

    #[error("invalid theory input: {0}")]
    InvalidTheoryInput(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("every step size diverged")]
    AllDiverged,

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
