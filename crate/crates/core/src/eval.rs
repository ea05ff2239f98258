//! Scoring a run against gold data: retrieval accuracy, macro recall@k, and
//! fact accuracy, plus report emission.
//!
//! The gold data names sentences while the corpus serves ~100-word passages,
//! so relevance needs a declared match predicate. A retrieved passage matches
//! a gold reference iff (a) the gold names its exact passage id, or — page
//! titles matching after normalization — (b) the normalized gold sentence is
//! a substring of the normalized passage, or (c) the token Jaccard between
//! sentence and passage reaches the configured threshold. The threshold is
//! echoed in every report header so results stay auditable.
//!
//! Metric arithmetic is generic over [`MetricScalar`], so tests can pin exact
//! rationals while reports use floats.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Passage};
use crate::dataset::{ClaimRecord, GoldEvidenceRef, VerdictLabel};
use crate::pipeline::{PipelineTrace, RunStatus};
use crate::scalar::{frac, MetricScalar};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no judgments to aggregate")]
    Empty,
    #[error("claim `{0}` has no gold evidence; exclude it from retrieval metrics")]
    EmptyGold(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Match predicate parameters, echoed in report headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub jaccard_threshold: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            jaccard_threshold: 0.5,
        }
    }
}

/// Lowercase, strip punctuation, collapse whitespace.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn token_set(normalized: &str) -> BTreeSet<&str> {
    normalized.split(' ').filter(|t| !t.is_empty()).collect()
}

fn token_jaccard(a: &str, b: &str) -> f64 {
    let sa = token_set(a);
    let sb = token_set(b);
    if sa.is_empty() || sb.is_empty() {
        return 0.0;
    }
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    inter / union
}

/// Does a retrieved passage count as one gold evidence piece?
pub fn match_passage_to_gold(
    passage: &Passage,
    gold: &GoldEvidenceRef,
    params: &MatchParams,
) -> bool {
    if let Some(pid) = &gold.passage_id {
        if pid == &passage.id {
            return true;
        }
    }
    let Some(sentence) = &gold.sentence else {
        return false;
    };
    if normalize_text(&gold.page_title) != normalize_text(&passage.page_title) {
        return false;
    }
    let norm_sentence = normalize_text(sentence);
    if norm_sentence.is_empty() {
        return false;
    }
    let norm_passage = normalize_text(&passage.text);
    if norm_passage.contains(&norm_sentence) {
        return true;
    }
    token_jaccard(&norm_sentence, &norm_passage) >= params.jaccard_threshold
}

/// Which gold pieces the top-k retrieved passages covered, for one claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalJudgment {
    pub claim_id: String,
    /// Indices into the claim's gold evidence list that some retrieved
    /// passage matched.
    pub matched_gold: BTreeSet<usize>,
    pub gold_count: usize,
    pub k: usize,
}

impl RetrievalJudgment {
    /// At least one gold piece was covered.
    pub fn hit(&self) -> bool {
        !self.matched_gold.is_empty()
    }
}

/// Judge one claim's top-k passages against its gold references.
pub fn judge_claim(
    claim_id: &str,
    top_k: &[Passage],
    gold: &[GoldEvidenceRef],
    k: usize,
    params: &MatchParams,
) -> RetrievalJudgment {
    let mut matched_gold = BTreeSet::new();
    for (gi, gold_ref) in gold.iter().enumerate() {
        if top_k
            .iter()
            .take(k)
            .any(|p| match_passage_to_gold(p, gold_ref, params))
        {
            matched_gold.insert(gi);
        }
    }
    RetrievalJudgment {
        claim_id: claim_id.to_string(),
        matched_gold,
        gold_count: gold.len(),
        k,
    }
}

/// Fraction of claims with at least one gold piece in the top-k.
pub fn retrieval_accuracy<V: MetricScalar>(
    judgments: &[RetrievalJudgment],
) -> Result<V, EvalError> {
    if judgments.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = judgments.iter().filter(|j| j.hit()).count();
    Ok(frac(hits, judgments.len()))
}

/// Macro-averaged per-claim proportion of gold pieces covered by the top-k.
pub fn recall_at_k<V: MetricScalar>(judgments: &[RetrievalJudgment]) -> Result<V, EvalError> {
    if judgments.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = V::zero();
    for j in judgments {
        if j.gold_count == 0 {
            return Err(EvalError::EmptyGold(j.claim_id.clone()));
        }
        sum = sum + frac(j.matched_gold.len(), j.gold_count);
    }
    let n = V::from_usize(judgments.len()).expect("claim count fits scalar");
    Ok(sum / n)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub n: usize,
    pub correct: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactAccuracy<V> {
    pub rate: V,
    pub per_label: BTreeMap<VerdictLabel, (usize, usize)>,
    pub missing: Vec<String>,
}

/// Exact-match rate between predictions and gold labels, with a per-gold-label
/// breakdown. Claims without a prediction count as wrong and are listed.
pub fn fact_accuracy<V: MetricScalar>(
    predictions: &BTreeMap<String, VerdictLabel>,
    gold: &[ClaimRecord],
) -> Result<FactAccuracy<V>, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut per_label: BTreeMap<VerdictLabel, (usize, usize)> = BTreeMap::new();
    let mut correct = 0usize;
    let mut missing = Vec::new();
    for record in gold {
        let entry = per_label.entry(record.gold_label).or_insert((0, 0));
        entry.0 += 1;
        match predictions.get(&record.claim_id) {
            Some(pred) if *pred == record.gold_label => {
                entry.1 += 1;
                correct += 1;
            }
            Some(_) => {}
            None => missing.push(record.claim_id.clone()),
        }
    }
    Ok(FactAccuracy {
        rate: frac(correct, gold.len()),
        per_label,
        missing,
    })
}

/// Complete scored run, serializable and round-trippable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub accuracy: f64,
    /// k (ascending) -> retrieval accuracy.
    pub racc_by_k: BTreeMap<usize, f64>,
    /// k (ascending) -> macro recall.
    pub recall_by_k: BTreeMap<usize, f64>,
    pub per_label: BTreeMap<VerdictLabel, LabelStats>,
    pub n_claims: usize,
    /// Claims included in retrieval metrics (non-empty gold).
    pub n_retrieval_claims: usize,
    /// Claims excluded from retrieval metrics for empty gold.
    pub n_retrieval_excluded: usize,
    pub n_missing_predictions: usize,
    pub n_failed_traces: usize,
    pub match_params: MatchParams,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

fn fnv64_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Score a finished run: fact accuracy over the whole dataset, retrieval
/// metrics over the claims with gold evidence, at every `k` requested.
/// Metrics read each trace's final evidence ranking (`reranked_top_k`).
pub fn evaluate_run(
    traces: &[PipelineTrace],
    dataset: &[ClaimRecord],
    corpus: &Corpus,
    ks: &[usize],
    params: MatchParams,
    config: serde_json::Value,
    seed: Option<u64>,
) -> Result<RunReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty);
    }
    let by_id: BTreeMap<&str, &PipelineTrace> =
        traces.iter().map(|t| (t.claim_id.as_str(), t)).collect();

    let mut predictions: BTreeMap<String, VerdictLabel> = BTreeMap::new();
    let mut n_failed = 0usize;
    for record in dataset {
        if let Some(trace) = by_id.get(record.claim_id.as_str()) {
            if matches!(trace.status, RunStatus::Failed { .. }) {
                n_failed += 1;
            }
            if let Some(label) = trace.predicted_label {
                predictions.insert(record.claim_id.clone(), label);
            }
        }
    }
    let fact: FactAccuracy<f64> = fact_accuracy(&predictions, dataset)?;
    for claim_id in &fact.missing {
        log::warn!("no prediction for claim `{claim_id}`; counted as wrong");
    }

    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut racc_by_k = BTreeMap::new();
    let mut recall_by_k = BTreeMap::new();
    let mut n_retrieval_claims = 0usize;
    let mut n_excluded = 0usize;

    // Resolve each claim's final ranking once, at the largest k.
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let mut resolved: Vec<(&ClaimRecord, Vec<Passage>)> = Vec::new();
    for record in dataset {
        if record.gold_evidence.is_empty() {
            n_excluded += 1;
            continue;
        }
        n_retrieval_claims += 1;
        let ids: &[String] = by_id
            .get(record.claim_id.as_str())
            .map(|t| t.reranked_top_k.as_slice())
            .unwrap_or(&[]);
        let passages: Vec<Passage> = ids
            .iter()
            .take(max_k)
            .map(|id| corpus.get_passage(id))
            .collect::<Result<_, _>>()?;
        resolved.push((record, passages));
    }

    if n_retrieval_claims > 0 {
        for &k in &ks {
            let judgments: Vec<RetrievalJudgment> = resolved
                .iter()
                .map(|(record, passages)| {
                    judge_claim(
                        &record.claim_id,
                        passages,
                        &record.gold_evidence,
                        k,
                        &params,
                    )
                })
                .collect();
            racc_by_k.insert(k, retrieval_accuracy::<f64>(&judgments)?);
            recall_by_k.insert(k, recall_at_k::<f64>(&judgments)?);
        }
    }

    let per_label = fact
        .per_label
        .iter()
        .map(|(label, (n, correct))| {
            (
                *label,
                LabelStats {
                    n: *n,
                    correct: *correct,
                    rate: frac(*correct, (*n).max(1)),
                },
            )
        })
        .collect();

    let config_hash = fnv64_hex(config.to_string().as_bytes());
    Ok(RunReport {
        accuracy: fact.rate,
        racc_by_k,
        recall_by_k,
        per_label,
        n_claims: dataset.len(),
        n_retrieval_claims,
        n_retrieval_excluded: n_excluded,
        n_missing_predictions: fact.missing.len(),
        n_failed_traces: n_failed,
        match_params: params,
        config_hash,
        seed,
        config,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// Rates print as percent with one decimal: 0.51 -> "51.0".
pub fn format_rate(rate: f64) -> String {
    format!("{:.1}", rate * 100.0)
}

fn header_lines(report: &RunReport) -> Vec<String> {
    let mut lines = vec![
        format!("config_hash: {}", report.config_hash),
        format!(
            "match predicate: gold passage-id exact; same-page sentence containment; same-page token jaccard >= {:.2}",
            report.match_params.jaccard_threshold
        ),
        format!(
            "claims: {} total; retrieval over {} ({} excluded with empty gold); {} missing predictions; {} failed traces",
            report.n_claims,
            report.n_retrieval_claims,
            report.n_retrieval_excluded,
            report.n_missing_predictions,
            report.n_failed_traces
        ),
    ];
    match report.seed {
        Some(seed) => lines.insert(1, format!("seed: {seed}")),
        None => lines.insert(1, "seed: (none)".to_string()),
    }
    lines
}

/// Markdown report: header block, fact-accuracy table, and one retrieval row
/// with paired RAcc/Recall columns in ascending k.
pub fn render_markdown(report: &RunReport) -> String {
    let mut out = String::from("# Run Report\n\n");
    for line in header_lines(report) {
        out.push_str(&format!("- {line}\n"));
    }
    out.push_str("\n## Fact accuracy\n\n");
    out.push_str("| label | n | correct | rate |\n|---|---:|---:|---:|\n");
    out.push_str(&format!(
        "| overall | {} | — | {} |\n",
        report.n_claims,
        format_rate(report.accuracy)
    ));
    for (label, stats) in &report.per_label {
        out.push_str(&format!(
            "| {label} | {} | {} | {} |\n",
            stats.n,
            stats.correct,
            format_rate(stats.rate)
        ));
    }
    out.push_str("\n## Retrieval\n\n");
    if report.racc_by_k.is_empty() {
        out.push_str("No claims with gold evidence; retrieval metrics skipped.\n");
        return out;
    }
    let mut head = String::from("| |");
    let mut rule = String::from("|---|");
    let mut row = String::from("| run |");
    for (k, racc) in &report.racc_by_k {
        let recall = report.recall_by_k[k];
        head.push_str(&format!(" RAcc@{k} | Recall@{k} |"));
        rule.push_str("---:|---:|");
        row.push_str(&format!(" {} | {} |", format_rate(*racc), format_rate(recall)));
    }
    out.push_str(&format!("{head}\n{rule}\n{row}\n"));
    out
}

/// CSV report: `#`-prefixed header echo, then `metric,key,value` rows in the
/// same order as the markdown table.
pub fn render_csv(report: &RunReport) -> String {
    let mut out = String::new();
    for line in header_lines(report) {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str("metric,key,value\n");
    out.push_str(&format!("accuracy,overall,{}\n", format_rate(report.accuracy)));
    for (label, stats) in &report.per_label {
        out.push_str(&format!("accuracy,{label},{}\n", format_rate(stats.rate)));
    }
    for (k, racc) in &report.racc_by_k {
        out.push_str(&format!("racc,{k},{}\n", format_rate(*racc)));
        out.push_str(&format!("recall,{k},{}\n", format_rate(report.recall_by_k[k])));
    }
    out
}

/// Write the report in the requested format; returns the file path.
pub fn emit_report(
    report: &RunReport,
    format: ReportFormat,
    dir: &Path,
    stem: &str,
) -> Result<PathBuf, EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let body = match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report).expect("report serializes");
            text.push('\n');
            text
        }
    };
    fs::write(&path, body).map_err(|e| EvalError::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}
