//! Command-line driver: ingest a page dump, build retrieval backends, run
//! the checking pipeline, score runs, and sweep ablation grids.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. All logic lives in
//! the library; this binary only parses flags and prints results.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use sucea::ablate::{run_ablation_grid, GridSpec};
use sucea::corpus::{ingest_dump_file, Corpus};
use sucea::dataset::{load_dataset_with_labels, DatasetKind, LabelMap};
use sucea::eval::{emit_report, evaluate_run, MatchParams, ReportFormat};
use sucea::pipeline::{
    build_embedding_store_from_config, load_traces, run_dataset, PipelineMode, RetrieverChoice,
    RunConfig, Runtime,
};
use sucea::retrieval::{build_tfidf_index, IndexOptions};

#[derive(Parser)]
#[command(
    name = "sucea",
    version,
    about = "Adversarial fact-checking over a passage corpus",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a JSONL page dump into fixed-size passages.
    Ingest(IngestArgs),
    /// Build the TF-IDF index over an ingested corpus.
    Index(IndexArgs),
    /// Embed every passage into a dense store via the configured provider.
    Embed(EmbedArgs),
    /// Run the pipeline over a claim dataset.
    Run(RunArgs),
    /// Score a finished run against gold data.
    Eval(EvalArgs),
    /// Sweep ablation variants x retrievers x k and emit a combined table.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// JSONL pages file, one {"title", "text"} object per line.
    #[arg(long)]
    pages: PathBuf,
    /// Corpus output directory.
    #[arg(long)]
    out: PathBuf,
    /// Words per passage window.
    #[arg(long, default_value_t = 100)]
    words: usize,
}

#[derive(Args)]
struct IndexArgs {
    /// Ingested corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Index output directory.
    #[arg(long)]
    out: PathBuf,
    /// Prepend page titles to the indexed text.
    #[arg(long, default_value_t = false)]
    index_title: bool,
}

#[derive(Args)]
struct EmbedArgs {
    /// Run config naming the embedding provider.
    #[arg(long)]
    config: PathBuf,
    /// Ingested corpus directory (defaults to the config's corpus).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Store output directory (defaults to the config's embeddings path).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Texts per provider request.
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sucea,
    Ralm,
}

#[derive(Clone, Copy, ValueEnum)]
enum RetrieverArg {
    Tfidf,
    Dense,
}

#[derive(Args)]
struct RunArgs {
    /// Run config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Claim dataset JSONL (overrides the config's dataset path).
    #[arg(long)]
    claims: Option<PathBuf>,
    /// Pipeline mode (overrides config).
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Edit/retrieve rounds after the first retrieval (overrides config).
    #[arg(long)]
    edit_rounds: Option<usize>,
    /// Retriever backend (overrides config).
    #[arg(long, value_enum)]
    retriever: Option<RetrieverArg>,
    /// Evidence list size (overrides config).
    #[arg(short, long)]
    k: Option<usize>,
    /// Scripted-provider file; replaces the HTTP provider (overrides config).
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Decoding seed, recorded in reports (overrides config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool size (overrides config concurrency).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of trace JSON files from a run.
    #[arg(long)]
    traces: PathBuf,
    /// Gold dataset JSONL.
    #[arg(long)]
    dataset: PathBuf,
    /// Corpus directory the run retrieved from.
    #[arg(long)]
    corpus: PathBuf,
    /// Report output directory.
    #[arg(long)]
    out: PathBuf,
    /// Dataset kind for label mapping.
    #[arg(long, value_enum, default_value_t = KindArg::Custom)]
    kind: KindArg,
    /// k values to evaluate, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![3usize, 5, 10])]
    k: Vec<usize>,
    /// Token-Jaccard threshold for fuzzy gold matching.
    #[arg(long, default_value_t = 0.5)]
    jaccard: f64,
    /// Report formats to emit.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = vec![FormatArg::Md, FormatArg::Csv, FormatArg::Json])]
    format: Vec<FormatArg>,
    /// Run config to echo into the report header.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed to record in the report header.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Fm2,
    Wice,
    Custom,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FormatArg {
    Md,
    Csv,
    Json,
}

#[derive(Args)]
struct AblateArgs {
    /// Base run config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Grid JSON: {"variants": [...], "ks": [...], "retrievers": [...]}.
    #[arg(long)]
    grid: PathBuf,
    /// Output directory (defaults to <config output_dir>/ablation).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Token-Jaccard threshold for fuzzy gold matching.
    #[arg(long, default_value_t = 0.5)]
    jaccard: f64,
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Index(args) => cmd_index(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
    }
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    if !args.pages.exists() {
        bail!("pages file not found: {}", args.pages.display());
    }
    let manifest = ingest_dump_file(&args.pages, &args.out, args.words)
        .with_context(|| format!("ingesting {}", args.pages.display()))?;
    println!(
        "ingested {} passages from {} pages ({} skipped)",
        manifest.passages, manifest.pages, manifest.skipped
    );
    println!("{}", args.out.join("manifest.json").display());
    Ok(())
}

fn cmd_index(args: IndexArgs) -> Result<()> {
    let corpus = Corpus::open(&args.corpus)
        .with_context(|| format!("opening corpus {}", args.corpus.display()))?;
    let index = build_tfidf_index::<f64>(
        &corpus,
        IndexOptions {
            index_title: args.index_title,
        },
    )?;
    index.save(&args.out)?;
    println!(
        "indexed {} passages, {} terms",
        index.passage_count(),
        index.vocabulary_size()
    );
    println!("{}", args.out.display());
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    let corpus_dir = args.corpus.as_ref().unwrap_or(&config.corpus);
    let out = match (&args.out, &config.embeddings) {
        (Some(out), _) => out.clone(),
        (None, Some(out)) => out.clone(),
        (None, None) => bail!("no output directory: pass --out or set embeddings in the config"),
    };
    let corpus = Corpus::open(corpus_dir)?;
    build_embedding_store_from_config(&corpus, &config, &out, args.batch_size)?;
    println!("embedded {} passages", corpus.len());
    println!("{}", out.display());
    Ok(())
}

fn apply_run_overrides(config: &mut RunConfig, args: &RunArgs) {
    if let Some(claims) = &args.claims {
        config.dataset = Some(claims.clone());
    }
    if let Some(mode) = args.mode {
        config.mode = match mode {
            ModeArg::Sucea => PipelineMode::Sucea,
            ModeArg::Ralm => PipelineMode::Ralm,
        };
        if matches!(mode, ModeArg::Ralm) {
            config.edit_rounds = None;
            config.ablations = Default::default();
        }
    }
    if let Some(rounds) = args.edit_rounds {
        config.edit_rounds = Some(rounds);
    }
    if let Some(retriever) = args.retriever {
        config.retriever = match retriever {
            RetrieverArg::Tfidf => RetrieverChoice::Tfidf,
            RetrieverArg::Dense => RetrieverChoice::Dense,
        };
    }
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(script) = &args.mock_script {
        config.mock_script = Some(script.clone());
    }
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(workers) = args.workers {
        config.concurrency = workers;
    }
}

fn load_records(config: &RunConfig) -> Result<Vec<sucea::ClaimRecord>> {
    let path = config
        .dataset
        .as_ref()
        .context("no claim dataset: set dataset in the config or pass --claims")?;
    if !path.exists() {
        bail!("dataset file not found: {}", path.display());
    }
    let labels = match &config.label_map {
        Some(overrides) => LabelMap::default_for(config.dataset_kind())
            .with_overrides(overrides)
            .map_err(|m| anyhow::anyhow!(m))?,
        None => LabelMap::default_for(config.dataset_kind()),
    };
    Ok(load_dataset_with_labels(
        path,
        config.dataset_kind(),
        &labels,
    )?)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    apply_run_overrides(&mut config, &args);
    config.validate()?;
    let pipeline_config = config.pipeline_config()?;
    let records = load_records(&config)?;
    let runtime = Runtime::build(&config)?;
    let (_, summary) = run_dataset(
        &records,
        runtime.corpus(),
        runtime.retriever(config.retriever)?,
        runtime.llm(),
        &pipeline_config,
        config.concurrency,
        &config.output_dir,
    )?;
    println!(
        "run complete: {} ok, {} failed, {} parse-warnings",
        summary.ok, summary.failed, summary.parse_warnings
    );
    println!("{}", summary.traces_dir.display());
    println!("{}", summary.manifest_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let kind = match args.kind {
        KindArg::Fm2 => DatasetKind::Fm2,
        KindArg::Wice => DatasetKind::Wice,
        KindArg::Custom => DatasetKind::Custom,
    };
    let dataset = load_dataset_with_labels(&args.dataset, kind, &LabelMap::default_for(kind))?;
    let corpus = Corpus::open(&args.corpus)?;
    let traces = load_traces(&args.traces)?;
    let config_snapshot = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text)?
        }
        None => serde_json::json!({
            "traces": args.traces.display().to_string(),
            "dataset": args.dataset.display().to_string(),
            "ks": args.k,
        }),
    };
    let report = evaluate_run(
        &traces,
        &dataset,
        &corpus,
        &args.k,
        MatchParams {
            jaccard_threshold: args.jaccard,
        },
        config_snapshot,
        args.seed,
    )?;
    for format in dedup_formats(&args.format) {
        let path = emit_report(&report, format, &args.out, "report")?;
        println!("{}", path.display());
    }
    println!(
        "accuracy {} over {} claims",
        sucea::eval::format_rate(report.accuracy),
        report.n_claims
    );
    Ok(())
}

fn dedup_formats(formats: &[FormatArg]) -> Vec<ReportFormat> {
    let mut out = Vec::new();
    for f in formats {
        let format = match f {
            FormatArg::Md => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        };
        if !out.contains(&format) {
            out.push(format);
        }
    }
    out
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    let grid = GridSpec::load(&args.grid)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| config.output_dir.join("ablation"));
    let outcome = run_ablation_grid(
        &config,
        &grid,
        MatchParams {
            jaccard_threshold: args.jaccard,
        },
        &out,
    )?;
    println!("{} grid cells", outcome.cells.len());
    println!("{}", outcome.table_path.display());
    Ok(())
}
