//! Text classification over a heterogeneous word-document graph.
//!
//! The pipeline: tokenize a labeled corpus, build a sparse graph whose nodes
//! are documents and vocabulary words (PMI word-word edges, TF-IDF
//! document-word edges, unit self-loops), normalize it symmetrically, and
//! train a two-layer graph convolutional network transductively with Adam
//! and validation-loss early stopping.

pub mod analysis;
pub mod baseline;
pub mod corpus;
pub mod gcn;
pub mod graph;
pub mod market;
pub mod sparse;
pub mod trainer;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parse error in {path} line {line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
