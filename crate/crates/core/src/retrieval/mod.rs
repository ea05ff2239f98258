//! Top-k passage retrieval.
//!
//! Two backends mirror the two retriever families the pipeline supports: a
//! native TF-IDF inverted index ([`tfidf`]) and an embedding store fed by an
//! external endpoint ([`dense`]). Both return exact (non-approximate) top-k
//! with ties broken by ascending passage id, so results are reproducible
//! across runs and ingestion orders.

mod dense;
mod tfidf;

pub use dense::{
    build_embedding_store, embed, retrieve_dense, DenseRetriever, EmbeddingProvider,
    EmbeddingStore, HashEmbedder, HttpEmbeddingProvider,
};
pub use tfidf::{build_tfidf_index, retrieve_tfidf, IndexOptions, InvertedIndex, Posting};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad index file {path}: {message}")]
    BadFormat { path: PathBuf, message: String },
    #[error("embedding provider `{provider}` error: {message}{}", if *.retryable { " (retryable)" } else { "" })]
    Provider {
        provider: String,
        message: String,
        retryable: bool,
    },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("embedding store was built with provider `{store}`, queried with `{query}`")]
    ProviderMismatch { store: String, query: String },
    #[error("degenerate embedding (zero or non-finite) at batch position {0}")]
    DegenerateVector(usize),
}

/// Which backend produced a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverKind {
    Tfidf,
    Dense,
}

impl std::fmt::Display for RetrieverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RetrieverKind::Tfidf => "tfidf",
            RetrieverKind::Dense => "dense",
        })
    }
}

/// One retrieved passage, with enough provenance to reconstruct which query
/// produced it and at which point of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceHit {
    pub passage_id: String,
    pub score: f64,
    pub retriever: RetrieverKind,
    pub query_text: String,
    /// Index of the sub-claim that issued the query, when inside the pipeline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subclaim_index: Option<usize>,
    /// Retrieval round: 0 = first-round, r = after the r-th edit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
}

/// Uniform retrieval interface for the pipeline.
pub trait Retriever: Send + Sync {
    fn kind(&self) -> RetrieverKind;
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<EvidenceHit>, RetrievalError>;
}

/// Lowercase and split on any non-alphanumeric character, dropping empties.
/// No stemming, no stopword removal: adversarial claims hinge on exact
/// lexical overlap, so the tokenizer must not normalize it away.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}
