//! Per-claim pipeline orchestration.
//!
//! The full flow (`sucea` mode) is: segment the claim, decontextualize each
//! segment into a standalone sub-claim, then for each sub-claim run the
//! retrieve/edit loop (retrieve, rewrite the sub-claim grounded in what was
//! retrieved, retrieve again), pool all retrieved evidence, rerank it with
//! the LLM, and predict the entailment label. `ralm` mode is the baseline:
//! one retrieval on the raw claim, then the label prediction.
//!
//! Every stage failure is captured in the emitted [`PipelineTrace`] rather
//! than propagated; parse-level problems degrade to documented fallbacks and
//! are counted in the trace.

mod config;
pub mod parse;

pub use config::{
    AblationFlags, ConfigError, EmbeddingSettings, LlmSettings, PipelineConfig, PipelineMode,
    RateLimitSettings, RetrieverChoice, RunConfig,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{slugify, Corpus, CorpusError, Passage};
use crate::dataset::{ClaimRecord, VerdictLabel};
use crate::llm::{
    DecodingParams, HttpChatProvider, LlmClient, LlmError, LlmExchange, RateLimiter,
    ScriptFallback, ScriptedProvider, TemplateName,
};
use crate::retrieval::{
    DenseRetriever, EmbeddingStore, EvidenceHit, HashEmbedder, HttpEmbeddingProvider,
    RetrievalError, Retriever,
};
use crate::TfIdfIndex;

/// Knowledge block used when editing is asked to work without evidence.
pub const NO_EVIDENCE_BLOCK: &str = "(no evidence provided)";
/// Evidence block used when the verdict prompt has no passages to cite.
pub const EMPTY_EVIDENCE_BLOCK: &str = "(none)";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One decontextualized segment with its per-round editing history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubClaim {
    pub index: usize,
    /// Raw segment as produced by segmentation.
    pub segment_text: String,
    /// Standalone rewrite of the segment; the round-0 retrieval query.
    pub decontextualized_text: String,
    /// Edited text per round; `edits[r]` is grounded in `evidence_by_round[r]`.
    pub edits: Vec<String>,
    /// Retrieved hits per round; one more entry than `edits` after a
    /// completed run.
    pub evidence_by_round: Vec<Vec<EvidenceHit>>,
}

impl SubClaim {
    fn new(index: usize, segment_text: String, decontextualized_text: String) -> Self {
        SubClaim {
            index,
            segment_text,
            decontextualized_text,
            edits: Vec::new(),
            evidence_by_round: Vec::new(),
        }
    }

    /// The text the next retrieval round should query.
    pub fn current_text(&self) -> &str {
        self.edits
            .last()
            .map(String::as_str)
            .unwrap_or(&self.decontextualized_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { stage: String, error: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: u64,
    pub stage_ms: BTreeMap<String, u64>,
}

/// Everything one claim run produced, including raw LLM exchanges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub claim_id: String,
    pub claim: String,
    pub mode: PipelineMode,
    pub status: RunStatus,
    pub sub_claims: Vec<SubClaim>,
    /// Deduplicated union of retrieved evidence, best score per passage,
    /// ordered by descending score then id.
    pub pooled_evidence: Vec<EvidenceHit>,
    /// Final evidence ranking, a duplicate-free subset of the pool, length <= k.
    pub reranked_top_k: Vec<String>,
    pub predicted_label: Option<VerdictLabel>,
    pub label_rationale: Option<String>,
    pub parse_warnings: Vec<String>,
    pub exchanges: Vec<LlmExchange>,
    pub timings: Timings,
}

/// Zero the wall-clock fields so traces can be compared byte-for-byte.
pub fn normalize_timings(trace: &mut PipelineTrace) {
    trace.timings.total_ms = 0;
    for v in trace.timings.stage_ms.values_mut() {
        *v = 0;
    }
    for ex in &mut trace.exchanges {
        ex.latency_ms = 0;
    }
}

fn bindings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Segment a claim into at most `max_subclaims` parts. Never returns empty:
/// if the completion parses to nothing the whole claim is the one segment.
pub fn segment_claim(
    claim: &str,
    max_subclaims: usize,
    llm: &LlmClient,
    sink: &mut Vec<LlmExchange>,
    warnings: &mut Vec<String>,
) -> Result<Vec<String>, PipelineError> {
    let completion = llm.call(TemplateName::Segment, bindings(&[("sen", claim)]), sink)?;
    let segments = parse::parse_segments(&completion);
    if segments.is_empty() {
        warnings.push("segmentation produced no usable segments; using the whole claim".into());
        return Ok(vec![claim.to_string()]);
    }
    Ok(parse::cap_segments(segments, max_subclaims))
}

/// Rewrite each segment into a standalone sentence. The completion is aligned
/// with the segments by order; mismatches degrade to the original segment
/// text with a warning.
pub fn decontextualize(
    segments: &[String],
    llm: &LlmClient,
    sink: &mut Vec<LlmExchange>,
    warnings: &mut Vec<String>,
) -> Result<Vec<String>, PipelineError> {
    let joined = segments.join(" | ");
    let completion = llm.call(TemplateName::Decontext, bindings(&[("sen", &joined)]), sink)?;
    let (texts, mut parse_warnings) = parse::parse_decontext(&completion, segments);
    warnings.append(&mut parse_warnings);
    Ok(texts)
}

/// Evidence-grounded paraphrase of one sub-claim. With `use_evidence=false`
/// the knowledge block is the literal [`NO_EVIDENCE_BLOCK`]. An empty
/// completion echoes the input unchanged.
pub fn edit_subclaim(
    subclaim: &str,
    evidence: &[Passage],
    use_evidence: bool,
    llm: &LlmClient,
    sink: &mut Vec<LlmExchange>,
    warnings: &mut Vec<String>,
) -> Result<String, PipelineError> {
    let kn = if use_evidence {
        evidence
            .iter()
            .map(|p| format!("{}: {}", p.id, p.text))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        NO_EVIDENCE_BLOCK.to_string()
    };
    let completion = llm.call(
        TemplateName::Edit,
        bindings(&[("query", subclaim), ("kn", &kn)]),
        sink,
    )?;
    let edited = parse::strip_edit_markup(&completion);
    if edited.is_empty() {
        warnings.push(format!(
            "edit returned an empty completion for `{subclaim}`; keeping the sub-claim unchanged"
        ));
        return Ok(subclaim.to_string());
    }
    Ok(edited)
}

/// Run the retrieve/edit loop for one sub-claim: round 0 retrieves for the
/// decontextualized text, then each further round edits with the previous
/// round's evidence and retrieves for the edited text. All rounds' hits are
/// kept with round provenance.
pub fn iterate_retrieve_edit(
    mut subclaim: SubClaim,
    config: &PipelineConfig,
    retriever: &dyn Retriever,
    corpus: &Corpus,
    llm: &LlmClient,
    sink: &mut Vec<LlmExchange>,
    warnings: &mut Vec<String>,
) -> Result<SubClaim, PipelineError> {
    let tag = |hits: Vec<EvidenceHit>, round: usize, index: usize| -> Vec<EvidenceHit> {
        hits.into_iter()
            .map(|mut h| {
                h.subclaim_index = Some(index);
                h.round = Some(round);
                h
            })
            .collect()
    };

    let hits = retriever.retrieve(&subclaim.decontextualized_text, config.k)?;
    subclaim
        .evidence_by_round
        .push(tag(hits, 0, subclaim.index));

    let use_evidence = !config.ablations.paraphrase_without_evidence;
    for round in 1..=config.edit_rounds {
        let previous = &subclaim.evidence_by_round[round - 1];
        let edited = if use_evidence && previous.is_empty() {
            warnings.push(format!(
                "sub-claim {} round {round}: no evidence to ground the edit; keeping text",
                subclaim.index
            ));
            subclaim.current_text().to_string()
        } else {
            let evidence: Vec<Passage> = previous
                .iter()
                .map(|h| corpus.get_passage(&h.passage_id))
                .collect::<Result<_, _>>()?;
            edit_subclaim(
                subclaim.current_text(),
                &evidence,
                use_evidence,
                llm,
                sink,
                warnings,
            )?
        };
        let hits = retriever.retrieve(&edited, config.k)?;
        subclaim.edits.push(edited);
        subclaim
            .evidence_by_round
            .push(tag(hits, round, subclaim.index));
    }
    Ok(subclaim)
}

/// Deduplicate the evidence pool: best score per passage id, first seen wins
/// ties; ordered by descending score then ascending id.
pub fn pool_evidence(sub_claims: &[SubClaim], all_rounds: bool) -> Vec<EvidenceHit> {
    let mut best: BTreeMap<&str, &EvidenceHit> = BTreeMap::new();
    for sc in sub_claims {
        let rounds: &[Vec<EvidenceHit>] = if all_rounds {
            &sc.evidence_by_round
        } else {
            sc.evidence_by_round
                .last()
                .map(std::slice::from_ref)
                .unwrap_or(&[])
        };
        for hits in rounds {
            for hit in hits {
                match best.get(hit.passage_id.as_str()) {
                    Some(existing) if existing.score >= hit.score => {}
                    _ => {
                        best.insert(&hit.passage_id, hit);
                    }
                }
            }
        }
    }
    let mut pool: Vec<EvidenceHit> = best.into_values().cloned().collect();
    pool.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then_with(|| a.passage_id.cmp(&b.passage_id))
    });
    pool
}

/// Pool all retrieved evidence and ask the LLM to rerank it against the
/// original claim. Returns the pool plus at most `k` reranked passage ids;
/// unusable reranker output falls back to score order.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_evidence(
    claim: &str,
    sub_claims: &[SubClaim],
    k: usize,
    pool_all_rounds: bool,
    corpus: &Corpus,
    llm: &LlmClient,
    sink: &mut Vec<LlmExchange>,
    warnings: &mut Vec<String>,
) -> Result<(Vec<EvidenceHit>, Vec<String>), PipelineError> {
    let pool = pool_evidence(sub_claims, pool_all_rounds);
    if pool.is_empty() {
        warnings.push("evidence pool is empty; nothing to rerank".into());
        return Ok((pool, Vec::new()));
    }
    let mut passages_block = String::new();
    for (i, hit) in pool.iter().enumerate() {
        let passage = corpus.get_passage(&hit.passage_id)?;
        if i > 0 {
            passages_block.push('\n');
        }
        passages_block.push_str(&format!("[{}] {}", i + 1, passage.text));
    }
    let n = pool.len().to_string();
    let top_k = k.to_string();
    let completion = llm.call(
        TemplateName::Rerank,
        bindings(&[
            ("num_passages", &n),
            ("query", claim),
            ("passages", &passages_block),
            ("top_k", &top_k),
        ]),
        sink,
    )?;
    let order = parse::parse_rerank(&completion, pool.len());
    let ranked: Vec<String> = if order.is_empty() {
        warnings.push("reranker output unusable; falling back to retrieval-score order".into());
        pool.iter().take(k).map(|h| h.passage_id.clone()).collect()
    } else {
        order
            .into_iter()
            .take(k)
            .map(|i| pool[i].passage_id.clone())
            .collect()
    };
    Ok((pool, ranked))
}

/// Predict the entailment label for a claim given the final evidence ids.
/// A completion with no recognizable verdict degrades to not-enough-info.
pub fn predict_label(
    claim: &str,
    evidence_ids: &[String],
    corpus: &Corpus,
    llm: &LlmClient,
    sink: &mut Vec<LlmExchange>,
    warnings: &mut Vec<String>,
) -> Result<(VerdictLabel, String), PipelineError> {
    let evidence = if evidence_ids.is_empty() {
        EMPTY_EVIDENCE_BLOCK.to_string()
    } else {
        let texts: Vec<String> = evidence_ids
            .iter()
            .map(|id| corpus.get_passage(id).map(|p| p.text))
            .collect::<Result<_, _>>()?;
        texts.join("\n")
    };
    let completion = llm.call(
        TemplateName::Entail,
        bindings(&[("claim", claim), ("evidence", &evidence)]),
        sink,
    )?;
    let label = match parse::parse_verdict(&completion) {
        Some(label) => label,
        None => {
            warnings.push("no verdict keyword in completion; defaulting to not_enough_info".into());
            VerdictLabel::NotEnoughInfo
        }
    };
    Ok((label, completion))
}

struct StageClock {
    started: Instant,
    stage_ms: BTreeMap<String, u64>,
}

impl StageClock {
    fn new() -> Self {
        StageClock {
            started: Instant::now(),
            stage_ms: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let at = Instant::now();
        let out = f();
        *self.stage_ms.entry(stage.to_string()).or_insert(0) +=
            at.elapsed().as_millis() as u64;
        out
    }

    fn finish(self) -> Timings {
        Timings {
            total_ms: self.started.elapsed().as_millis() as u64,
            stage_ms: self.stage_ms,
        }
    }
}

/// Run one claim end to end. Failures never propagate: the returned trace
/// carries `status: failed` with the failing stage named.
pub fn run_claim(
    record: &ClaimRecord,
    corpus: &Corpus,
    retriever: &dyn Retriever,
    llm: &LlmClient,
    config: &PipelineConfig,
) -> PipelineTrace {
    let mut trace = PipelineTrace {
        claim_id: record.claim_id.clone(),
        claim: record.claim.clone(),
        mode: config.mode,
        status: RunStatus::Ok,
        sub_claims: Vec::new(),
        pooled_evidence: Vec::new(),
        reranked_top_k: Vec::new(),
        predicted_label: None,
        label_rationale: None,
        parse_warnings: Vec::new(),
        exchanges: Vec::new(),
        timings: Timings::default(),
    };
    let mut clock = StageClock::new();
    let mut warnings = Vec::new();
    let mut exchanges = Vec::new();

    let outcome = run_claim_stages(
        record,
        corpus,
        retriever,
        llm,
        config,
        &mut trace,
        &mut clock,
        &mut exchanges,
        &mut warnings,
    );
    if let Err(failure) = outcome {
        trace.status = RunStatus::Failed {
            stage: failure.stage.to_string(),
            error: failure.message,
        };
    }
    trace.parse_warnings = warnings;
    trace.exchanges = exchanges;
    trace.timings = clock.finish();
    trace
}

struct StageFailure {
    stage: &'static str,
    message: String,
}

fn at_stage<T>(
    stage: &'static str,
    result: Result<T, PipelineError>,
) -> Result<T, StageFailure> {
    result.map_err(|e| StageFailure {
        stage,
        message: e.to_string(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_claim_stages(
    record: &ClaimRecord,
    corpus: &Corpus,
    retriever: &dyn Retriever,
    llm: &LlmClient,
    config: &PipelineConfig,
    trace: &mut PipelineTrace,
    clock: &mut StageClock,
    exchanges: &mut Vec<LlmExchange>,
    warnings: &mut Vec<String>,
) -> Result<(), StageFailure> {
    let claim = record.claim.as_str();

    if config.mode == PipelineMode::Ralm {
        let hits = at_stage(
            "retrieve",
            clock.time("retrieve", || {
                retriever
                    .retrieve(claim, config.k)
                    .map_err(PipelineError::from)
            }),
        )?;
        let mut sub = SubClaim::new(0, claim.to_string(), claim.to_string());
        sub.evidence_by_round.push(
            hits.into_iter()
                .map(|mut h| {
                    h.subclaim_index = Some(0);
                    h.round = Some(0);
                    h
                })
                .collect(),
        );
        trace.reranked_top_k = sub.evidence_by_round[0]
            .iter()
            .take(config.k)
            .map(|h| h.passage_id.clone())
            .collect();
        trace.pooled_evidence = pool_evidence(std::slice::from_ref(&sub), true);
        trace.sub_claims.push(sub);
    } else {
        let segments = if config.ablations.no_segmentation {
            vec![claim.to_string()]
        } else {
            at_stage(
                "segment",
                clock.time("segment", || {
                    segment_claim(claim, config.max_subclaims, llm, exchanges, warnings)
                }),
            )?
        };
        let sub_texts = if config.ablations.no_segmentation {
            segments.clone()
        } else {
            at_stage(
                "decontextualize",
                clock.time("decontextualize", || {
                    decontextualize(&segments, llm, exchanges, warnings)
                }),
            )?
        };

        for (index, (segment, text)) in segments.iter().zip(&sub_texts).enumerate() {
            let sub = SubClaim::new(index, segment.clone(), text.clone());
            let sub = at_stage(
                "retrieve_edit",
                clock.time("retrieve_edit", || {
                    iterate_retrieve_edit(sub, config, retriever, corpus, llm, exchanges, warnings)
                }),
            )?;
            trace.sub_claims.push(sub);
        }

        let (pool, ranked) = at_stage(
            "rerank",
            clock.time("rerank", || {
                aggregate_evidence(
                    claim,
                    &trace.sub_claims,
                    config.k,
                    config.pool_all_rounds,
                    corpus,
                    llm,
                    exchanges,
                    warnings,
                )
            }),
        )?;
        trace.pooled_evidence = pool;
        trace.reranked_top_k = ranked;
    }

    let (label, rationale) = at_stage(
        "predict",
        clock.time("predict", || {
            predict_label(
                claim,
                &trace.reranked_top_k,
                corpus,
                llm,
                exchanges,
                warnings,
            )
        }),
    )?;
    trace.predicted_label = Some(label);
    trace.label_rationale = Some(rationale);
    Ok(())
}

/// Owned runtime for a run config: corpus, retriever backends, LLM client.
pub struct Runtime {
    corpus: Corpus,
    tfidf: Option<TfIdfIndex>,
    dense: Option<DenseRetriever>,
    llm: LlmClient,
}

impl Runtime {
    /// Open everything the config's retriever choice needs.
    pub fn build(config: &RunConfig) -> Result<Self, PipelineError> {
        Self::build_with_retrievers(config, &[config.retriever])
    }

    /// Open corpus, LLM client, and every retriever in `choices` (the ablate
    /// grid may sweep both).
    pub fn build_with_retrievers(
        config: &RunConfig,
        choices: &[RetrieverChoice],
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let corpus = Corpus::open(&config.corpus)?;

        let mut tfidf = None;
        let mut dense = None;
        for choice in choices {
            match choice {
                RetrieverChoice::Tfidf if tfidf.is_none() => {
                    let dir = config.index.as_ref().ok_or_else(|| {
                        ConfigError::Invalid("retriever=tfidf requires an index path".into())
                    })?;
                    tfidf = Some(TfIdfIndex::load(dir)?);
                }
                RetrieverChoice::Dense if dense.is_none() => {
                    let dir = config.embeddings.as_ref().ok_or_else(|| {
                        ConfigError::Invalid("retriever=dense requires an embeddings path".into())
                    })?;
                    let store = EmbeddingStore::open(dir)?;
                    let provider = embedding_provider_from(config)?;
                    dense = Some(DenseRetriever::new(store, provider));
                }
                _ => {}
            }
        }

        let llm = build_llm_client(config)?;
        Ok(Runtime {
            corpus,
            tfidf,
            dense,
            llm,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn llm(&self) -> &LlmClient {
        &self.llm
    }

    pub fn retriever(&self, choice: RetrieverChoice) -> Result<&dyn Retriever, PipelineError> {
        match choice {
            RetrieverChoice::Tfidf => self
                .tfidf
                .as_ref()
                .map(|i| i as &dyn Retriever)
                .ok_or_else(|| {
                    ConfigError::Invalid("tfidf retriever not loaded in this runtime".into()).into()
                }),
            RetrieverChoice::Dense => self
                .dense
                .as_ref()
                .map(|d| d as &dyn Retriever)
                .ok_or_else(|| {
                    ConfigError::Invalid("dense retriever not loaded in this runtime".into()).into()
                }),
        }
    }
}

/// Build the embedding provider named in the config.
pub fn embedding_provider_from(
    config: &RunConfig,
) -> Result<Box<dyn crate::retrieval::EmbeddingProvider>, PipelineError> {
    match &config.embedding_provider {
        Some(EmbeddingSettings::Http {
            base_url,
            model,
            api_key_env,
        }) => {
            let key = api_key_env
                .as_ref()
                .and_then(|env| std::env::var(env).ok());
            Ok(Box::new(HttpEmbeddingProvider::new(base_url, model, key)))
        }
        Some(EmbeddingSettings::Hash { dim }) => Ok(Box::new(HashEmbedder::new(*dim))),
        None => Err(ConfigError::Invalid(
            "dense retrieval requires an embedding_provider block".into(),
        )
        .into()),
    }
}

/// Embed every corpus passage into a store at `out_dir`, using the
/// embedding provider named in the config.
pub fn build_embedding_store_from_config(
    corpus: &Corpus,
    config: &RunConfig,
    out_dir: &Path,
    batch_size: usize,
) -> Result<(), PipelineError> {
    let provider = embedding_provider_from(config)?;
    crate::retrieval::build_embedding_store(corpus, provider.as_ref(), out_dir, batch_size)?;
    Ok(())
}

/// Build the chat client named in the config: the scripted provider when a
/// mock script is given, the HTTP provider otherwise.
pub fn build_llm_client(config: &RunConfig) -> Result<LlmClient, PipelineError> {
    let provider: Arc<dyn crate::llm::ChatProvider> = match &config.mock_script {
        Some(path) => Arc::new(ScriptedProvider::load(path, ScriptFallback::Error)?),
        None => {
            let key = config
                .llm
                .api_key_env
                .as_ref()
                .and_then(|env| std::env::var(env).ok());
            let timeout =
                std::time::Duration::from_secs(config.llm.timeout_secs.unwrap_or(120));
            Arc::new(HttpChatProvider::new(&config.llm.base_url, key, timeout))
        }
    };
    let params = DecodingParams {
        model: config.llm.model.clone(),
        temperature: config.llm.temperature,
        max_tokens: config.llm.max_tokens,
        seed: config.seed,
    };
    let mut client = LlmClient::new(provider, params);
    if let Some(limits) = &config.rate_limit {
        client = client.with_limiter(Arc::new(RateLimiter::new(
            limits.requests_per_minute,
            limits.max_in_flight,
        )));
    }
    Ok(client)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub ok: usize,
    pub failed: usize,
    pub parse_warnings: usize,
    pub traces_dir: PathBuf,
    pub manifest_path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ManifestLine<'a> {
    claim_id: &'a str,
    status: &'a str,
    label: Option<VerdictLabel>,
}

/// Run every claim, write one trace file per claim plus a run manifest, and
/// return the traces in input order.
pub fn run_dataset(
    records: &[ClaimRecord],
    corpus: &Corpus,
    retriever: &dyn Retriever,
    llm: &LlmClient,
    config: &PipelineConfig,
    workers: usize,
    output_dir: &Path,
) -> Result<(Vec<PipelineTrace>, RunSummary), PipelineError> {
    let traces_dir = output_dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(|e| PipelineError::Io {
        path: traces_dir.clone(),
        source: e,
    })?;

    let traces: Vec<PipelineTrace> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool builds");
        pool.install(|| {
            records
                .par_iter()
                .map(|record| run_claim(record, corpus, retriever, llm, config))
                .collect()
        })
    } else {
        records
            .iter()
            .map(|record| run_claim(record, corpus, retriever, llm, config))
            .collect()
    };

    let manifest_path = output_dir.join("run_manifest.jsonl");
    let mut manifest = fs::File::create(&manifest_path).map_err(|e| PipelineError::Io {
        path: manifest_path.clone(),
        source: e,
    })?;
    let mut summary = RunSummary {
        ok: 0,
        failed: 0,
        parse_warnings: 0,
        traces_dir: traces_dir.clone(),
        manifest_path: manifest_path.clone(),
    };
    for trace in &traces {
        let path = traces_dir.join(format!("{}.json", slugify(&trace.claim_id)));
        write_trace(trace, &path)?;
        let status = match &trace.status {
            RunStatus::Ok => {
                summary.ok += 1;
                "ok"
            }
            RunStatus::Failed { .. } => {
                summary.failed += 1;
                "failed"
            }
        };
        summary.parse_warnings += trace.parse_warnings.len();
        let line = serde_json::to_string(&ManifestLine {
            claim_id: &trace.claim_id,
            status,
            label: trace.predicted_label,
        })
        .expect("manifest line serializes");
        writeln!(manifest, "{line}").map_err(|e| PipelineError::Io {
            path: manifest_path.clone(),
            source: e,
        })?;
    }
    Ok((traces, summary))
}

/// Serialize one trace as pretty JSON with a trailing newline.
pub fn write_trace(trace: &PipelineTrace, path: &Path) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(trace).expect("trace serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Load every `*.json` trace in a directory, sorted by file name.
pub fn load_traces(dir: &Path) -> Result<Vec<PipelineTrace>, PipelineError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PipelineError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut traces = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::Io {
            path: path.clone(),
            source: e,
        })?;
        let trace: PipelineTrace = serde_json::from_str(&text).map_err(|e| {
            PipelineError::Io {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
            }
        })?;
        traces.push(trace);
    }
    Ok(traces)
}
