//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {0} is outside the fixed-point range")]
    EncodeRange(f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("beaver triple already consumed")]
    TripleReuse,

    #[error("triple supply exhausted: needed {needed}, had {available}")]
    TripleExhausted { needed: usize, available: usize },

    #[error("operands belong to different backends")]
    BackendMismatch,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("idx parse error: {0}")]
    IdxFormat(String),

    #[error("client {client} received {samples} samples; at least 2 required")]
    TooFewSamples { client: usize, samples: usize },

    #[error("no correctly classified candidates to build an edge pool")]
    EmptyEdgePool,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
