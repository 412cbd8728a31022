use std::path::PathBuf;

use thiserror::Error;

use crate::kg::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("line {line}: unknown node prefix in `{token}` (expected c:, i: or w:)")]
    UnknownPrefix { line: usize, token: String },

    #[error("knowledge graph has no `#rw=` directive; word-level projection is unavailable")]
    MissingWordRelation,

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("node {0} is a word; expected a concept or instance")]
    WordNode(NodeId),

    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("node {node} is not in the vocabulary of space `{space}`")]
    OutOfVocabulary { node: NodeId, space: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("results for datasets `{a}` and `{b}` cannot be compared")]
    MismatchedDatasets { a: String, b: String },

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
