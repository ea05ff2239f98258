//! Ablation grid runner: sweep pipeline variants × retrievers × k and emit a
//! combined table of retrieval metrics plus one full report per cell.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{load_dataset_with_labels, DatasetError, LabelMap};
use crate::eval::{
    emit_report, evaluate_run, EvalError, MatchParams, ReportFormat, RunReport,
};
use crate::pipeline::{
    run_dataset, ConfigError, PipelineError, PipelineMode, RetrieverChoice, RunConfig, Runtime,
};

#[derive(Debug, Error)]
pub enum AblateError {
    #[error("unknown ablation variant `{name}`; valid: {valid}")]
    UnknownVariant { name: String, valid: String },
    #[error("grid file {path}: {message}")]
    BadGrid { path: PathBuf, message: String },
    #[error("run config has no dataset path")]
    MissingDataset,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The fixed ablation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// The complete pipeline.
    Full,
    /// No editing rounds: retrieve once per sub-claim.
    WoEditing,
    /// No segmentation/decontextualization: edit the raw claim.
    WoSegmentation,
    /// Edit without retrieved evidence as hints.
    ParaWoEvidence,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Full,
        AblationVariant::WoEditing,
        AblationVariant::WoSegmentation,
        AblationVariant::ParaWoEvidence,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::WoEditing => "wo_editing",
            AblationVariant::WoSegmentation => "wo_segmentation",
            AblationVariant::ParaWoEvidence => "para_wo_evidence",
        }
    }

    pub fn parse(name: &str) -> Result<Self, AblateError> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == name)
            .ok_or_else(|| AblateError::UnknownVariant {
                name: name.to_string(),
                valid: Self::ALL
                    .iter()
                    .map(|v| v.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    /// Derive the variant's run config from a base config.
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut config = base.clone();
        config.mode = PipelineMode::Sucea;
        config.ablations.no_segmentation = false;
        config.ablations.paraphrase_without_evidence = false;
        match self {
            AblationVariant::Full => {}
            AblationVariant::WoEditing => config.edit_rounds = Some(0),
            AblationVariant::WoSegmentation => config.ablations.no_segmentation = true,
            AblationVariant::ParaWoEvidence => {
                config.ablations.paraphrase_without_evidence = true
            }
        }
        config
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grid file: which variants, k values, and retrievers to sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub variants: Vec<String>,
    pub ks: Vec<usize>,
    /// Defaults to the base config's retriever.
    #[serde(default)]
    pub retrievers: Option<Vec<RetrieverChoice>>,
}

impl GridSpec {
    pub fn load(path: &Path) -> Result<Self, AblateError> {
        let text = fs::read_to_string(path).map_err(|e| AblateError::BadGrid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let grid: GridSpec = serde_json::from_str(&text).map_err(|e| AblateError::BadGrid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if grid.variants.is_empty() || grid.ks.is_empty() {
            return Err(AblateError::BadGrid {
                path: path.to_path_buf(),
                message: "grid needs at least one variant and one k".into(),
            });
        }
        Ok(grid)
    }

    pub fn parsed_variants(&self) -> Result<Vec<AblationVariant>, AblateError> {
        self.variants.iter().map(|v| AblationVariant::parse(v)).collect()
    }
}

/// One grid cell's scored run.
#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub retriever: RetrieverChoice,
    pub variant: AblationVariant,
    pub k: usize,
    pub report: RunReport,
    pub ok: usize,
    pub failed: usize,
    pub parse_warnings: usize,
}

#[derive(Debug, Serialize)]
pub struct AblationOutcome {
    pub cells: Vec<AblationCell>,
    pub table_path: PathBuf,
}

/// Run the whole grid. Each cell gets its own output directory with traces
/// and a full report; the combined table lands in `<out>/ablation_grid.md`.
pub fn run_ablation_grid(
    base: &RunConfig,
    grid: &GridSpec,
    match_params: MatchParams,
    out_dir: &Path,
) -> Result<AblationOutcome, AblateError> {
    let variants = grid.parsed_variants()?;
    let retrievers = grid
        .retrievers
        .clone()
        .unwrap_or_else(|| vec![base.retriever]);
    let mut ks = grid.ks.clone();
    ks.sort_unstable();
    ks.dedup();

    let dataset_path = base.dataset.as_ref().ok_or(AblateError::MissingDataset)?;
    let labels = match &base.label_map {
        Some(overrides) => LabelMap::default_for(base.dataset_kind())
            .with_overrides(overrides)
            .map_err(|m| AblateError::BadGrid {
                path: dataset_path.clone(),
                message: m,
            })?,
        None => LabelMap::default_for(base.dataset_kind()),
    };
    let records = load_dataset_with_labels(dataset_path, base.dataset_kind(), &labels)?;

    let runtime = Runtime::build_with_retrievers(base, &retrievers)?;
    let mut cells = Vec::new();

    for retriever in &retrievers {
        for variant in &variants {
            for &k in &ks {
                let mut config = variant.apply(base);
                config.retriever = *retriever;
                config.k = k;
                let cell_dir = out_dir
                    .join(retriever.to_string())
                    .join(variant.as_str())
                    .join(format!("k{k}"));
                let pipeline_config = config.pipeline_config()?;
                let (traces, summary) = run_dataset(
                    &records,
                    runtime.corpus(),
                    runtime.retriever(*retriever)?,
                    runtime.llm(),
                    &pipeline_config,
                    config.concurrency,
                    &cell_dir,
                )?;
                let snapshot = serde_json::to_value(&config).expect("config serializes");
                let report = evaluate_run(
                    &traces,
                    &records,
                    runtime.corpus(),
                    &[k],
                    match_params,
                    snapshot,
                    config.seed,
                )?;
                emit_report(&report, ReportFormat::Json, &cell_dir, "report")?;
                emit_report(&report, ReportFormat::Markdown, &cell_dir, "report")?;
                cells.push(AblationCell {
                    retriever: *retriever,
                    variant: *variant,
                    k,
                    report,
                    ok: summary.ok,
                    failed: summary.failed,
                    parse_warnings: summary.parse_warnings,
                });
            }
        }
    }

    let table = render_grid_markdown(&cells);
    fs::create_dir_all(out_dir).map_err(|e| AblateError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let table_path = out_dir.join("ablation_grid.md");
    fs::write(&table_path, table).map_err(|e| AblateError::Io {
        path: table_path.clone(),
        source: e,
    })?;
    Ok(AblationOutcome { cells, table_path })
}

/// Combined table: one section per retriever, one row per (variant, k) with
/// paired RAcc/Recall columns.
pub fn render_grid_markdown(cells: &[AblationCell]) -> String {
    let mut out = String::from("# Ablation Grid\n");
    let mut retrievers: Vec<RetrieverChoice> = Vec::new();
    for cell in cells {
        if !retrievers.contains(&cell.retriever) {
            retrievers.push(cell.retriever);
        }
    }
    for retriever in retrievers {
        out.push_str(&format!("\n## {retriever}\n\n"));
        out.push_str("| variant | k | RAcc | Recall |\n|---|---:|---:|---:|\n");
        for cell in cells.iter().filter(|c| c.retriever == retriever) {
            let racc = cell.report.racc_by_k.get(&cell.k).copied().unwrap_or(0.0);
            let recall = cell.report.recall_by_k.get(&cell.k).copied().unwrap_or(0.0);
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                cell.variant,
                cell.k,
                crate::eval::format_rate(racc),
                crate::eval::format_rate(recall),
            ));
        }
    }
    out
}

impl fmt::Display for RetrieverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RetrieverChoice::Tfidf => "tfidf",
            RetrieverChoice::Dense => "dense",
        })
    }
}
