use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    Truncation { len: usize, max: usize },

    #[error("world generation failed: {0}")]
    Generation(String),

    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },

    #[error("invalid instance {source_id:?}: {message}")]
    InvalidInstance { source_id: String, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("augmentation targets layer {layer} but the model has {layers} layers")]
    LayerOutOfRange { layer: usize, layers: usize },

    #[error("sequence has no masked positions")]
    NoMasks,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite loss at {0}")]
    Divergence(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
