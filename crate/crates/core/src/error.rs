use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("replay buffer exhausted: capacity {capacity} holds {demos} pinned demonstrations")]
    BufferExhausted { capacity: usize, demos: usize },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("simulation became unstable at node {node}")]
    Unstable { node: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
