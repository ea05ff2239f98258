//! Adversarial fact-checking over a passage corpus.
//!
//! The library is organized around the stages of the checking pipeline:
//!
//! - [`corpus`] — ingests page dumps into fixed-size passages and loads
//!   claim datasets.
//! - [`retrieval`] — top-k passage retrieval via a native TF-IDF inverted
//!   index or an external embedding endpoint.
//! - [`llm`] — chat-completion access (OpenAI-compatible HTTP or a scripted
//!   offline provider) plus the pipeline's prompt templates.
//! - [`pipeline`] — per-claim orchestration: segmentation, decontextualization,
//!   iterative retrieve/edit rounds, evidence pooling and reranking, verdict.
//! - [`eval`] — retrieval accuracy / recall@k / fact accuracy against gold
//!   data, with report emission.
//! - [`ablate`] — grid runner for the ablation variants.
//!
//! Core scoring and metric arithmetic are generic over the scalar type (see
//! [`scalar`]); the aliases below fix the concrete types the rest of the
//! crate uses by default.

pub mod ablate;
pub mod corpus;
pub mod dataset;
pub mod eval;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod scalar;

/// Default scoring scalar for retrieval.
pub type Score = f64;

/// TF-IDF index with the default scoring scalar.
pub type TfIdfIndex = retrieval::InvertedIndex<Score>;

/// Exact rational rate, for metric arithmetic without rounding.
pub type ExactRate = num_rational::Ratio<i64>;

pub use corpus::{Corpus, CorpusManifest, Passage};
pub use dataset::{ClaimRecord, DatasetKind, GoldEvidenceRef, VerdictLabel};
pub use retrieval::{EvidenceHit, RetrieverKind};
