use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::EntitySpan;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sentence {sentence}: {message}")]
    Structure { sentence: usize, message: String },

    #[error("overlapping spans {first} and {second}")]
    Overlap {
        first: EntitySpan,
        second: EntitySpan,
    },

    #[error("crossing spans {first} and {second}")]
    Crossing {
        first: EntitySpan,
        second: EntitySpan,
    },

    #[error("nesting depth {depth} at token {token} exceeds the maximum of {max_depth}")]
    DepthOverflow {
        token: usize,
        depth: usize,
        max_depth: usize,
    },

    #[error("invalid span {0}")]
    InvalidSpan(String),

    #[error("unknown tagset `{0}`")]
    UnknownTagset(String),

    #[error("tagset config: {0}")]
    TagsetConfig(String),

    #[error("label `{label}` is not part of {inventory}")]
    UnknownLabel { label: String, inventory: String },

    #[error("label id {id} is out of range for {inventory} ({size} labels)")]
    LabelId {
        id: usize,
        inventory: String,
        size: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no precomputed embedding for document `{doc}` sentence {sentence}")]
    MissingEmbedding { doc: String, sentence: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sentence count mismatch: gold has {gold}, prediction has {pred}")]
    Alignment { gold: usize, pred: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoBare(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
