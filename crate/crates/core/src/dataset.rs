//! Fact-checking datasets: claim records, gold evidence references, and the
//! canonical three-way verdict label.
//!
//! Input is JSONL, one claim per line:
//! `{"claim_id", "claim", "label", "gold": [{"page", "sentence", "passage_id"}]}`.
//! Source labels are mapped onto the canonical set through a [`LabelMap`];
//! the defaults cover the common spellings plus the long-form-entailment
//! scheme (`partially_supported` maps to not-enough-info, `not_supported` to
//! refuted) and can be overridden per run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed claim on line {line} of {path}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown label `{label}` on line {line}; permitted: {permitted}")]
    UnknownLabel {
        label: String,
        line: usize,
        permitted: String,
    },
}

/// Canonical entailment verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictLabel {
    Supported,
    Refuted,
    NotEnoughInfo,
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerdictLabel::Supported => "supported",
            VerdictLabel::Refuted => "refuted",
            VerdictLabel::NotEnoughInfo => "not_enough_info",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Fm2,
    Wice,
    Custom,
}

/// Reference to one gold evidence piece: a page plus either the gold sentence
/// text, a concrete passage id, or both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEvidenceRef {
    pub page_title: String,
    pub sentence: Option<String>,
    pub passage_id: Option<String>,
}

/// One dataset item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub claim: String,
    pub gold_label: VerdictLabel,
    pub gold_evidence: Vec<GoldEvidenceRef>,
    pub dataset: DatasetKind,
}

/// Mapping from source label strings (lowercased) to canonical labels.
#[derive(Debug, Clone)]
pub struct LabelMap {
    map: BTreeMap<String, VerdictLabel>,
}

impl LabelMap {
    /// Base aliases shared by all dataset kinds.
    fn base() -> BTreeMap<String, VerdictLabel> {
        use VerdictLabel::*;
        let pairs = [
            ("supported", Supported),
            ("supports", Supported),
            ("entailed", Supported),
            ("refuted", Refuted),
            ("refutes", Refuted),
            ("not_enough_info", NotEnoughInfo),
            ("not enough info", NotEnoughInfo),
            ("not enough information", NotEnoughInfo),
            ("not_enough_evidence", NotEnoughInfo),
            ("nei", NotEnoughInfo),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn default_for(kind: DatasetKind) -> Self {
        let mut map = Self::base();
        if matches!(kind, DatasetKind::Wice) {
            // Long-form entailment scheme: a partially supported claim has no
            // full support in the corpus, so it lands on not-enough-info; a
            // not-supported claim is treated as refuted.
            map.insert("partially_supported".into(), VerdictLabel::NotEnoughInfo);
            map.insert("not_supported".into(), VerdictLabel::Refuted);
        }
        LabelMap { map }
    }

    /// Apply user overrides on top of the defaults. Values use the canonical
    /// spellings `supported` / `refuted` / `not_enough_info`.
    pub fn with_overrides(
        mut self,
        overrides: &BTreeMap<String, String>,
    ) -> Result<Self, String> {
        for (src, dst) in overrides {
            let label = match dst.to_lowercase().as_str() {
                "supported" => VerdictLabel::Supported,
                "refuted" => VerdictLabel::Refuted,
                "not_enough_info" => VerdictLabel::NotEnoughInfo,
                other => return Err(format!("unknown canonical label `{other}`")),
            };
            self.map.insert(src.to_lowercase(), label);
        }
        Ok(self)
    }

    pub fn resolve(&self, raw: &str) -> Option<VerdictLabel> {
        self.map.get(raw.trim().to_lowercase().as_str()).copied()
    }

    fn permitted(&self) -> String {
        self.map
            .keys()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Deserialize)]
struct RawGold {
    page: String,
    #[serde(default)]
    sentence: Option<String>,
    #[serde(default)]
    passage_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawClaim {
    claim_id: String,
    claim: String,
    label: String,
    #[serde(default)]
    gold: Vec<RawGold>,
}

/// Load a claim dataset with the default label map for `kind`.
pub fn load_dataset(path: &Path, kind: DatasetKind) -> Result<Vec<ClaimRecord>, DatasetError> {
    load_dataset_with_labels(path, kind, &LabelMap::default_for(kind))
}

/// Load a claim dataset with an explicit label map.
pub fn load_dataset_with_labels(
    path: &Path,
    kind: DatasetKind,
    labels: &LabelMap,
) -> Result<Vec<ClaimRecord>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawClaim =
            serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if raw.claim.trim().is_empty() {
            return Err(DatasetError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: "claim text is empty".into(),
            });
        }
        let gold_label = labels
            .resolve(&raw.label)
            .ok_or_else(|| DatasetError::UnknownLabel {
                label: raw.label.clone(),
                line: line_no,
                permitted: labels.permitted(),
            })?;
        let gold_evidence: Vec<GoldEvidenceRef> = raw
            .gold
            .into_iter()
            .map(|g| GoldEvidenceRef {
                page_title: g.page,
                sentence: g.sentence,
                passage_id: g.passage_id,
            })
            .collect();
        for (gi, g) in gold_evidence.iter().enumerate() {
            if g.sentence.is_none() && g.passage_id.is_none() {
                return Err(DatasetError::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!(
                        "gold entry {gi} needs at least one of sentence or passage_id"
                    ),
                });
            }
        }
        if gold_evidence.is_empty() && gold_label != VerdictLabel::NotEnoughInfo {
            return Err(DatasetError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("label `{gold_label}` requires gold evidence"),
            });
        }
        records.push(ClaimRecord {
            claim_id: raw.claim_id,
            claim: raw.claim,
            gold_label,
            gold_evidence,
            dataset: kind,
        });
    }
    Ok(records)
}
