//! Run configuration: one JSON document describing a whole run, validated
//! into an effective [`PipelineConfig`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    Sucea,
    Ralm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverChoice {
    Tfidf,
    Dense,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Skip segmentation and decontextualization; the whole claim is the
    /// single sub-claim.
    #[serde(default)]
    pub no_segmentation: bool,
    /// Edit without retrieved evidence: the knowledge block is replaced by
    /// the literal `(no evidence provided)`.
    #[serde(default)]
    pub paraphrase_without_evidence: bool,
}

/// LLM provider settings from the run config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmSettings {
    pub base_url: String,
    pub model: String,
    /// Environment variable naming the API key; keys never live in configs.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
}

fn default_max_tokens() -> u32 {
    1024
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            base_url: "http://localhost:8000".into(),
            model: "default".into(),
            api_key_env: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: None,
        }
    }
}

/// Embedding endpoint settings for the dense retriever and `embed` workflow.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingSettings {
    Http {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
    /// Deterministic local bag-of-words embedder; no network.
    Hash { dim: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateLimitSettings {
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default)]
    pub max_in_flight: Option<usize>,
}

/// The on-disk run config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub dataset_kind: Option<DatasetKind>,
    pub corpus: PathBuf,
    #[serde(default)]
    pub index: Option<PathBuf>,
    /// Embedding store directory (dense retriever).
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub embedding_provider: Option<EmbeddingSettings>,
    #[serde(default = "default_retriever")]
    pub retriever: RetrieverChoice,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Edit/retrieve rounds after the first retrieval. Defaults to 1 round
    /// (two retrievals) under `sucea`, 0 under `ralm`.
    #[serde(default)]
    pub edit_rounds: Option<usize>,
    #[serde(default = "default_mode")]
    pub mode: PipelineMode,
    #[serde(default)]
    pub ablations: AblationFlags,
    #[serde(default)]
    pub llm: LlmSettings,
    /// Script file for the offline scripted provider; bypasses HTTP.
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    pub output_dir: PathBuf,
    #[serde(default = "default_max_subclaims")]
    pub max_subclaims: usize,
    /// Pool evidence from all retrieval rounds (default) or only the final
    /// round of each sub-claim.
    #[serde(default = "default_true")]
    pub pool_all_rounds: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub label_map: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub rate_limit: Option<RateLimitSettings>,
}

fn default_retriever() -> RetrieverChoice {
    RetrieverChoice::Tfidf
}
fn default_k() -> usize {
    10
}
fn default_mode() -> PipelineMode {
    PipelineMode::Sucea
}
fn default_concurrency() -> usize {
    1
}
fn default_max_subclaims() -> usize {
    8
}
fn default_true() -> bool {
    true
}

/// Effective, validated pipeline parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub retriever: RetrieverChoice,
    pub k: usize,
    pub edit_rounds: usize,
    pub ablations: AblationFlags,
    pub max_subclaims: usize,
    pub pool_all_rounds: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn dataset_kind(&self) -> DatasetKind {
        self.dataset_kind.unwrap_or(DatasetKind::Custom)
    }

    /// Cross-field consistency checks. RALM is the plain retrieve-then-predict
    /// baseline, so it cannot carry editing rounds or ablation flags.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be >= 1".into()));
        }
        if self.max_subclaims == 0 {
            return Err(ConfigError::Invalid("max_subclaims must be >= 1".into()));
        }
        if self.mode == PipelineMode::Ralm {
            if matches!(self.edit_rounds, Some(r) if r > 0) {
                return Err(ConfigError::Invalid(
                    "mode=ralm forces edit_rounds=0; remove the explicit edit_rounds".into(),
                ));
            }
            if self.ablations.no_segmentation || self.ablations.paraphrase_without_evidence {
                return Err(ConfigError::Invalid(
                    "mode=ralm does not take ablation flags".into(),
                ));
            }
        }
        if self.ablations.paraphrase_without_evidence && self.effective_edit_rounds() == 0 {
            return Err(ConfigError::Invalid(
                "paraphrase_without_evidence requires edit_rounds >= 1".into(),
            ));
        }
        if self.retriever == RetrieverChoice::Tfidf && self.index.is_none() {
            return Err(ConfigError::Invalid(
                "retriever=tfidf requires an index path".into(),
            ));
        }
        if self.retriever == RetrieverChoice::Dense && self.embeddings.is_none() {
            return Err(ConfigError::Invalid(
                "retriever=dense requires an embeddings path".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_edit_rounds(&self) -> usize {
        match self.mode {
            PipelineMode::Ralm => 0,
            PipelineMode::Sucea => self.edit_rounds.unwrap_or(1),
        }
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, ConfigError> {
        self.validate()?;
        Ok(PipelineConfig {
            mode: self.mode,
            retriever: self.retriever,
            k: self.k,
            edit_rounds: self.effective_edit_rounds(),
            ablations: match self.mode {
                PipelineMode::Ralm => AblationFlags::default(),
                PipelineMode::Sucea => self.ablations,
            },
            max_subclaims: self.max_subclaims,
            pool_all_rounds: self.pool_all_rounds,
        })
    }
}
