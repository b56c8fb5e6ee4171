//! `absclass`: train and apply hierarchical abstract classifiers.

mod commands;
mod config;
mod outputs;

use std::path::PathBuf;
use std::process::ExitCode;

use absclass_core::net::{gradcheck, CellKind, GradCheckConfig, ModelSpec};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::{resolve_out, GradcheckOptions};
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "absclass", version, about = "Hierarchical classification of scientific abstracts")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for featurization, gradients and inference.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed (falls back to the config, then ABSCLASS_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and preprocess a JSONL corpus.
    Ingest(IngestArgs),
    /// Build the IDF table of a corpus.
    Vocab(VocabArgs),
    /// Derive a two-level label schema from label counts.
    Schema(SchemaArgs),
    /// Collapse labels through a merge map.
    Merge(MergeArgs),
    /// Train the level-1 and level-2 classifiers.
    Train(TrainArgs),
    /// Score a trained model directory on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Predict labels for unlabeled abstracts.
    Classify(ClassifyArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic corpus and matching embeddings.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Tab-separated `word<TAB>lemma` file.
    #[arg(long)]
    lemmas: Option<PathBuf>,
    /// Minimum tokens after preprocessing.
    #[arg(long)]
    min_words: Option<usize>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Rejection report; defaults next to the output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Accept records without a label.
    #[arg(long)]
    inference: bool,
    #[command(flatten)]
    pre: PreprocessArgs,
}

#[derive(Debug, Args)]
struct VocabArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    pre: PreprocessArgs,
}

#[derive(Debug, Args)]
struct SchemaArgs {
    #[arg(long, conflicts_with = "counts")]
    corpus: Option<PathBuf>,
    /// JSON object of label counts.
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    pre: PreprocessArgs,
}

#[derive(Debug, Args)]
struct MergeArgs {
    /// JSON object mapping original labels to merged labels.
    #[arg(long)]
    map: PathBuf,
    #[arg(long, conflicts_with = "counts")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    pre: PreprocessArgs,
}

#[derive(Debug, Args)]
struct EmbeddingArgs {
    /// Word vectors, one `word v1 ... vn` line per word.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Precomputed IDF table; built from the training split otherwise.
    #[arg(long)]
    idf: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long, value_parser = parse_cell)]
    cell: Option<CellKind>,
    #[arg(long)]
    bidirectional: Option<bool>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    attention: Option<bool>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    level2_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long, conflicts_with = "no_cap")]
    per_class_cap: Option<usize>,
    #[arg(long)]
    no_cap: bool,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[command(flatten)]
    pre: PreprocessArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Labeled corpus; defaults to the held-out split saved by `train`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    confusion: Option<PathBuf>,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[command(flatten)]
    pre: PreprocessArgs,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    lemmas: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Check one cell type; both by default.
    #[arg(long, value_parser = parse_cell)]
    cell: Option<CellKind>,
    #[arg(long, default_value_t = 3)]
    seq_len: usize,
    #[arg(long, default_value_t = 2)]
    input_dim: usize,
    #[arg(long, default_value_t = 4)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    bidirectional: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    attention: bool,
    #[arg(long, default_value_t = gradcheck::FD_STEP)]
    step: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Denominator floor of the relative error.
    #[arg(long, default_value_t = gradcheck::DEFAULT_FLOOR)]
    floor: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Imbalanced majors-plus-minors corpus instead of a balanced one.
    #[arg(long)]
    imbalanced: bool,
    /// Drop labels, producing classification input.
    #[arg(long)]
    unlabeled: bool,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

fn parse_cell(s: &str) -> std::result::Result<CellKind, String> {
    s.parse().map_err(|e: absclass_core::Error| e.to_string())
}

fn apply_pre(cfg: &mut RunConfig, pre: PreprocessArgs) {
    if pre.stopwords.is_some() {
        cfg.stopwords = pre.stopwords;
    }
    if pre.lemmas.is_some() {
        cfg.lemmas = pre.lemmas;
    }
    if let Some(n) = pre.min_words {
        cfg.min_words = n;
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("building worker pool")?;
    }
    let seed = cfg.resolve_seed(cli.seed)?;

    match cli.command {
        Command::Ingest(a) => {
            set_path(&mut cfg.corpus, a.corpus);
            apply_pre(&mut cfg, a.pre);
            commands::ingest(&cfg, &a.output, a.report.as_deref(), a.inference)?;
        }
        Command::Vocab(a) => {
            set_path(&mut cfg.corpus, a.corpus);
            apply_pre(&mut cfg, a.pre);
            let out = resolve_out(a.output, &cfg.idf, "IDF output path")?;
            commands::vocab(&cfg, &out)?;
        }
        Command::Schema(a) => {
            set_path(&mut cfg.corpus, a.corpus);
            apply_pre(&mut cfg, a.pre);
            if a.threshold.is_some() {
                cfg.threshold = a.threshold;
            }
            let out = resolve_out(a.output, &cfg.schema, "schema output path")?;
            commands::schema(&cfg, a.counts.as_deref(), &out)?;
        }
        Command::Merge(a) => {
            set_path(&mut cfg.corpus, a.corpus);
            apply_pre(&mut cfg, a.pre);
            commands::merge(&cfg, &a.map, a.counts.as_deref(), &a.output)?;
        }
        Command::Train(a) => {
            set_path(&mut cfg.corpus, a.corpus);
            set_path(&mut cfg.model_dir, a.model_dir);
            set_path(&mut cfg.schema, a.schema);
            set_path(&mut cfg.idf, a.idf);
            set_path(&mut cfg.embeddings, a.emb.embeddings);
            apply_pre(&mut cfg, a.pre);
            if a.threshold.is_some() {
                cfg.threshold = a.threshold;
            }
            set(&mut cfg.seq_len, a.seq_len);
            set(&mut cfg.model.cell, a.cell);
            set(&mut cfg.model.bidirectional, a.bidirectional);
            set(&mut cfg.model.layers, a.layers);
            set(&mut cfg.model.hidden_dim, a.hidden_dim);
            set(&mut cfg.model.attention, a.attention);
            set(&mut cfg.train.epochs, a.epochs);
            if a.level2_epochs.is_some() {
                cfg.level2_epochs = a.level2_epochs;
            }
            set(&mut cfg.train.batch_size, a.batch_size);
            set(&mut cfg.train.learning_rate, a.learning_rate);
            set(&mut cfg.train.dropout_rate, a.dropout);
            if a.per_class_cap.is_some() {
                cfg.train.per_class_cap = a.per_class_cap;
            }
            if a.no_cap {
                cfg.train.per_class_cap = None;
            }
            commands::train(&mut cfg)?;
        }
        Command::Evaluate(a) => {
            set_path(&mut cfg.model_dir, a.model_dir);
            set_path(&mut cfg.test_corpus, a.corpus);
            set_path(&mut cfg.embeddings, a.emb.embeddings);
            apply_pre(&mut cfg, a.pre);
            let dir = cfg.model_dir.clone().context("missing model directory: pass --model-dir")?;
            let out = a.output.unwrap_or_else(|| dir.join("eval_report.json"));
            commands::evaluate(&cfg, &out, a.confusion.as_deref())?;
        }
        Command::Classify(a) => {
            set_path(&mut cfg.model_dir, a.model_dir);
            set_path(&mut cfg.embeddings, a.emb.embeddings);
            set_path(&mut cfg.stopwords, a.stopwords);
            set_path(&mut cfg.lemmas, a.lemmas);
            commands::classify(&cfg, &a.input, &a.output)?;
        }
        Command::Gradcheck(a) => {
            let opts = GradcheckOptions {
                cells: a.cell.map_or_else(|| vec![CellKind::Lstm, CellKind::Gru], |c| vec![c]),
                spec: ModelSpec {
                    cell: CellKind::Lstm,
                    input_dim: a.input_dim,
                    hidden_dim: a.hidden_dim,
                    layers: a.layers,
                    bidirectional: a.bidirectional,
                    attention: a.attention,
                    seq_len: a.seq_len,
                },
                classes: a.classes,
                check: GradCheckConfig {
                    step: a.step,
                    tolerance: a.tolerance,
                    floor: a.floor,
                },
            };
            return commands::gradcheck(seed, &opts, a.output.as_deref());
        }
        Command::Synth(a) => {
            commands::synth(seed, a.imbalanced, a.unlabeled, a.dim, &a.output, a.embeddings.as_deref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
