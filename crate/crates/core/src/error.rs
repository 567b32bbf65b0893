use thiserror::Error;

use crate::model::NeuronId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("no layers")]
    NoLayers,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown activation kind `{0}`")]
    UnknownActivation(String),
    #[error("unsupported layer class `{0}`")]
    UnsupportedLayer(String),
    #[error("missing weight group `{0}`")]
    MissingWeights(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input value at position {0}")]
    NonFiniteInput(usize),
    #[error("relevance threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("pruning epsilon {0} must be non-negative")]
    InvalidEpsilon(f64),
    #[error("value {value} of input `{role}` matches no symbol")]
    NoSymbol { role: String, value: f64 },
    #[error("value {value} of input `{role}` matches several symbols")]
    AmbiguousSymbol { role: String, value: f64 },
    #[error("network has no hidden layers")]
    NoHiddenLayers,
    #[error("no relevant neuron in the penultimate layer (threshold too aggressive?)")]
    EmptyPenultimate,
    #[error("decision paths stem from different networks or settings")]
    NetworkMismatch,
    #[error("conflicting leaves: identical label sequence ends in decisions {0} and {1}")]
    ConflictingLeaf(usize, usize),
    #[error("no paths to merge")]
    NoPaths,
    #[error("unknown neuron {0}")]
    UnknownNeuron(NeuronId),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
