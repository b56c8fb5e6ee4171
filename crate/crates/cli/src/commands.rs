use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use absclass_core::corpus::{ingest_corpus, write_corpus, Document, IngestMode, PreprocessConfig, RejectionReport};
use absclass_core::embed::{load_embedding_table, vocab_overlap, EmbeddingTable, FeatureSequence};
use absclass_core::eval::{score_predictions, EvalReport};
use absclass_core::features::{build_idf, IdfTable};
use absclass_core::hierarchy::{
    build_two_level_schema, imbalance_ratio, label_counts, merge_corpus, merge_counts, train_cascade,
    Cascade, LabelSchema, DEFAULT_THRESHOLD, OTHERS,
};
use absclass_core::net::{gradient_check_with, model_forward, CellKind, GradCheckConfig, Matrix, ModelParams, ModelSpec};
use absclass_core::pipeline::FeaturePipeline;
use absclass_core::synthetic::{random_embeddings, vocabulary, ImbalancedCorpus, KeywordCorpus};
use absclass_core::train::{load_checkpoint, sample_training_set, Checkpoint};
use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{require, RunConfig};
use crate::outputs::Outputs;

pub const LEVEL1_CKPT: &str = "level1.ckpt";
pub const LEVEL2_CKPT: &str = "level2.ckpt";
pub const SCHEMA_FILE: &str = "schema.json";
pub const IDF_FILE: &str = "idf.tsv";
pub const TEST_SPLIT: &str = "test_split.jsonl";

fn preprocess(cfg: &RunConfig, min_words: usize) -> Result<PreprocessConfig> {
    Ok(PreprocessConfig::from_files(
        cfg.stopwords.as_deref(),
        cfg.lemmas.as_deref(),
        min_words,
    )?)
}

fn load_corpus(path: &Path, cfg: &RunConfig, mode: IngestMode, min_words: usize) -> Result<(Vec<Document>, RejectionReport)> {
    let pre = preprocess(cfg, min_words)?;
    let (docs, report) = ingest_corpus(path, &pre, mode)?;
    if report.rejected() > 0 {
        eprintln!(
            "{}: {} of {} lines rejected ({} malformed, {} missing field, {} too short)",
            path.display(),
            report.rejected(),
            report.total_lines,
            report.malformed,
            report.missing_field,
            report.too_short
        );
    }
    Ok((docs, report))
}

fn read_counts(path: &Path) -> Result<BTreeMap<String, usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a label → count JSON object", path.display()))
}

fn read_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a label → label JSON object", path.display()))
}

/// The configured threshold, or 1% of the corpus capped at the large-scale default.
pub fn effective_threshold(cfg: &RunConfig, corpus_size: usize) -> usize {
    cfg.threshold
        .unwrap_or_else(|| corpus_size.div_ceil(100).clamp(1, DEFAULT_THRESHOLD))
}

/// Applies a schema's merge map to documents carrying original labels.
fn relabel(docs: &mut [Document], schema: &LabelSchema) {
    if schema.merge_map.is_empty() {
        return;
    }
    for d in docs {
        if let Some(to) = d.label.as_ref().and_then(|l| schema.merge_map.get(l)) {
            d.label = Some(to.clone());
        }
    }
}

fn load_embeddings(cfg: &RunConfig) -> Result<EmbeddingTable> {
    let path = require(&cfg.embeddings, "embeddings file")?;
    let (table, report) = load_embedding_table(path, None)?;
    if report.duplicates > 0 {
        eprintln!("{}: {} duplicate words ignored", path.display(), report.duplicates);
    }
    Ok(table)
}

fn labeled(seqs: Vec<FeatureSequence>, docs: &[Document]) -> Vec<(FeatureSequence, String)> {
    seqs.into_iter()
        .zip(docs)
        .map(|(s, d)| (s, d.label.clone().expect("training documents are labeled")))
        .collect()
}

pub fn ingest(cfg: &RunConfig, output: &Path, report_path: Option<&Path>, inference: bool) -> Result<()> {
    let input = require(&cfg.corpus, "corpus")?;
    let mode = if inference { IngestMode::Inference } else { IngestMode::Training };
    let (docs, report) = load_corpus(input, cfg, mode, cfg.min_words)?;
    let mut out = Outputs::new();
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        out.dir(parent)?;
    }
    out.track(output);
    write_corpus(output, &docs)?;
    let report_path = report_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| output.with_extension("rejections.json"));
    out.write_json(&report_path, &json!({ "config": cfg.provenance(), "report": report }))?;
    eprintln!("{} documents accepted, {} rejected", report.accepted, report.rejected());
    out.commit();
    Ok(())
}

pub fn vocab(cfg: &RunConfig, output: &Path) -> Result<()> {
    let input = require(&cfg.corpus, "corpus")?;
    let (docs, _) = load_corpus(input, cfg, IngestMode::Inference, cfg.min_words)?;
    let idf = build_idf(&docs)?;
    let mut out = Outputs::new();
    out.write(output, idf.to_text())?;
    eprintln!("{} word types over {} documents", idf.len(), idf.doc_count());
    out.commit();
    Ok(())
}

#[derive(Serialize)]
struct SchemaSummary {
    majors: usize,
    minors: usize,
    level1_classes: usize,
    threshold: usize,
    imbalance_ratio: Option<f64>,
}

fn counts_from(cfg: &RunConfig, counts: Option<&Path>) -> Result<BTreeMap<String, usize>> {
    match counts {
        Some(p) => read_counts(p),
        None => {
            let input = require(&cfg.corpus, "corpus or counts file")?;
            let (docs, _) = load_corpus(input, cfg, IngestMode::Training, cfg.min_words)?;
            Ok(label_counts(&docs)?)
        }
    }
}

pub fn schema(cfg: &RunConfig, counts: Option<&Path>, output: &Path) -> Result<()> {
    let counts = counts_from(cfg, counts)?;
    let threshold = effective_threshold(cfg, counts.values().sum());
    let schema = build_two_level_schema(&counts, threshold)?;
    let summary = SchemaSummary {
        majors: schema.majors.len(),
        minors: schema.minors.len(),
        level1_classes: schema.level1_classes().len(),
        threshold,
        imbalance_ratio: imbalance_ratio(&counts).ok(),
    };
    let mut out = Outputs::new();
    out.write(output, schema.to_json()? + "\n")?;
    eprintln!("{}", serde_json::to_string(&summary)?);
    out.commit();
    Ok(())
}

pub fn merge(cfg: &RunConfig, map_path: &Path, counts: Option<&Path>, output: &Path) -> Result<()> {
    let map = read_map(map_path)?;
    let mut out = Outputs::new();
    match counts {
        Some(c) => {
            let merged = merge_counts(&read_counts(c)?, &map, OTHERS)?;
            eprintln!("{} labels after merging", merged.len());
            out.write_json(output, &merged)?;
        }
        None => {
            let input = require(&cfg.corpus, "corpus or counts file")?;
            let (docs, _) = load_corpus(input, cfg, IngestMode::Training, cfg.min_words)?;
            let merged = merge_corpus(&docs, &map, OTHERS)?;
            eprintln!("{} labels after merging", label_counts(&merged)?.len());
            if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
                out.dir(parent)?;
            }
            out.track(output);
            write_corpus(output, &merged)?;
        }
    }
    out.commit();
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    config: serde_json::Value,
    rejections: &'a RejectionReport,
    label_counts: &'a BTreeMap<String, usize>,
    imbalance_ratio: Option<f64>,
    sampling: &'a absclass_core::train::SamplingReport,
    oov_rate: f64,
    vocab_overlap: f64,
    level1_classes: usize,
    level2_classes: usize,
    final_level1_test_micro_f1: Option<f64>,
    final_level2_test_micro_f1: Option<f64>,
}

pub fn train(cfg: &mut RunConfig) -> Result<()> {
    let corpus_path = require(&cfg.corpus, "corpus")?.to_path_buf();
    let model_dir = cfg
        .model_dir
        .clone()
        .context("missing model directory: pass --model-dir or set model_dir")?;
    let (mut docs, rejections) = load_corpus(&corpus_path, cfg, IngestMode::Training, cfg.min_words)?;
    if docs.is_empty() {
        bail!("{}: no usable documents", corpus_path.display());
    }
    let table = load_embeddings(cfg)?;

    let schema = match &cfg.schema {
        Some(p) => LabelSchema::load(p)?,
        None => {
            let counts = label_counts(&docs)?;
            let threshold = effective_threshold(cfg, docs.len());
            cfg.threshold = Some(threshold);
            build_two_level_schema(&counts, threshold)?
        }
    };
    relabel(&mut docs, &schema);
    let counts = label_counts(&docs)?;

    let seed = cfg.train.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let (train_docs, test_docs, sampling) = sample_training_set(&docs, &schema.universe(), &cfg.train, &mut rng)?;

    let idf = match &cfg.idf {
        Some(p) => IdfTable::load(p)?,
        None => build_idf(&train_docs)?,
    };
    let pipeline = FeaturePipeline::new(&idf, &table, cfg.seq_len);
    let (train_seqs, oov) = pipeline.featurize_all(&train_docs)?;
    let (test_seqs, _) = pipeline.featurize_all(&test_docs)?;
    let overlap = vocab_overlap(idf.iter().map(|(w, _)| w), &table)?;
    eprintln!(
        "{} train / {} test documents; OOV rate {:.3}; vocabulary overlap {:.3}",
        train_docs.len(),
        test_docs.len(),
        oov.rate(),
        overlap
    );

    let train_data = labeled(train_seqs, &train_docs);
    let test_data = labeled(test_seqs, &test_docs);
    let spec = cfg.model.spec(table.dim(), cfg.seq_len);
    let level2_cfg = cfg.level2_train_config();
    let (cascade, logs) = train_cascade(&train_data, &test_data, &schema, &spec, &cfg.train, &level2_cfg)?;

    let provenance = cfg.provenance();
    let mut out = Outputs::new();
    out.dir(&model_dir)?;
    out.write(&model_dir.join(IDF_FILE), idf.to_text())?;
    out.write(&model_dir.join(SCHEMA_FILE), schema.to_json()? + "\n")?;
    let write_ckpt = |out: &mut Outputs, name: &str, params: &ModelParams| -> Result<()> {
        let mut ckpt = Checkpoint::new(params.clone(), Some(&idf), &table);
        ckpt.provenance = provenance.clone();
        out.write(&model_dir.join(name), ckpt.to_bytes()?)
    };
    write_ckpt(&mut out, LEVEL1_CKPT, &cascade.level1)?;
    if let Some(l2) = &cascade.level2 {
        write_ckpt(&mut out, LEVEL2_CKPT, l2)?;
    }
    out.write_jsonl(&model_dir.join("level1_log.jsonl"), &logs.level1)?;
    if cascade.level2.is_some() {
        out.write_jsonl(&model_dir.join("level2_log.jsonl"), &logs.level2)?;
    }
    let split_path = out.track(&model_dir.join(TEST_SPLIT));
    write_corpus(&split_path, &test_docs)?;
    let summary = TrainSummary {
        config: provenance.clone(),
        rejections: &rejections,
        label_counts: &counts,
        imbalance_ratio: imbalance_ratio(&counts).ok(),
        sampling: &sampling,
        oov_rate: oov.rate(),
        vocab_overlap: overlap,
        level1_classes: schema.level1_classes().len(),
        level2_classes: schema.minors.len(),
        final_level1_test_micro_f1: logs.level1.last().and_then(|l| l.test_micro_f1),
        final_level2_test_micro_f1: logs.level2.last().and_then(|l| l.test_micro_f1),
    };
    out.write_json(&model_dir.join("train_summary.json"), &summary)?;
    for l in &logs.level1 {
        eprintln!("level-1 epoch {}: loss {:.4}, test micro-F1 {:?}", l.epoch, l.mean_loss, l.test_micro_f1);
    }
    for l in &logs.level2 {
        eprintln!("level-2 epoch {}: loss {:.4}, test micro-F1 {:?}", l.epoch, l.mean_loss, l.test_micro_f1);
    }
    out.commit();
    Ok(())
}

pub struct LoadedModel {
    pub cascade: Cascade,
    pub idf: IdfTable,
    pub table: EmbeddingTable,
    pub seq_len: usize,
    pub provenance: serde_json::Value,
}

pub fn load_model(cfg: &RunConfig) -> Result<LoadedModel> {
    let dir = require(&cfg.model_dir, "model directory")?;
    let schema = LabelSchema::load(&dir.join(SCHEMA_FILE))?;
    let idf = IdfTable::load(&dir.join(IDF_FILE))?;
    let table = load_embeddings(cfg)?;
    let level1 = load_checkpoint(&dir.join(LEVEL1_CKPT))?;
    level1.validate_embedding(&table)?;
    level1.validate_idf(&idf)?;
    let level2 = if schema.has_minors() {
        let path = dir.join(LEVEL2_CKPT);
        if !path.exists() {
            bail!("schema has minor labels but {} is missing", path.display());
        }
        let ckpt = load_checkpoint(&path)?;
        ckpt.validate_embedding(&table)?;
        ckpt.validate_idf(&idf)?;
        Some(ckpt.params)
    } else {
        None
    };
    let seq_len = level1.spec().seq_len;
    let provenance = level1.provenance.clone();
    Ok(LoadedModel {
        cascade: Cascade {
            schema,
            level1: level1.params,
            level2,
        },
        idf,
        table,
        seq_len,
        provenance,
    })
}

#[derive(Serialize)]
struct EvaluationOutput<'a> {
    config: serde_json::Value,
    training_config: &'a serde_json::Value,
    documents: usize,
    #[serde(rename = "final")]
    final_report: &'a EvalReport,
    level1: &'a EvalReport,
}

pub fn evaluate(cfg: &RunConfig, output: &Path, confusion: Option<&Path>) -> Result<EvalReport> {
    let model = load_model(cfg)?;
    let dir = cfg.model_dir.clone().expect("checked by load_model");
    let corpus = cfg.test_corpus.clone().unwrap_or_else(|| dir.join(TEST_SPLIT));
    let (mut docs, _) = load_corpus(&corpus, cfg, IngestMode::Training, 1)?;
    if docs.is_empty() {
        bail!("{}: no documents to evaluate", corpus.display());
    }
    let schema = &model.cascade.schema;
    relabel(&mut docs, schema);

    let pipeline = FeaturePipeline::new(&model.idf, &model.table, model.seq_len);
    let (seqs, _) = pipeline.featurize_all(&docs)?;
    let routed = model.cascade.predict_all(&seqs)?;
    let level1_pred: Vec<String> = seqs
        .par_iter()
        .map(|s| {
            let t = model_forward(s, &model.cascade.level1, None)?;
            Ok(model.cascade.level1.label_names[t.predicted()].clone())
        })
        .collect::<Result<_>>()?;

    let truths: Vec<String> = docs.iter().map(|d| d.label.clone().expect("labeled")).collect();
    let preds: Vec<String> = routed.into_iter().map(|r| r.label).collect();
    let final_report = score_predictions(&truths, &preds, &schema.universe())?;
    let level1_truth: Vec<String> = truths
        .iter()
        .map(|t| schema.level1_label(t).map(str::to_string))
        .collect::<absclass_core::Result<_>>()?;
    let level1_report = score_predictions(&level1_truth, &level1_pred, &schema.level1_classes())?;

    let mut effective = cfg.clone();
    let spec = &model.cascade.level1.spec;
    effective.seq_len = model.seq_len;
    effective.model = crate::config::ModelConfig {
        cell: spec.cell,
        bidirectional: spec.bidirectional,
        layers: spec.layers,
        hidden_dim: spec.hidden_dim,
        attention: spec.attention,
    };
    let mut out = Outputs::new();
    out.write_json(
        output,
        &EvaluationOutput {
            config: effective.provenance(),
            training_config: &model.provenance,
            documents: docs.len(),
            final_report: &final_report,
            level1: &level1_report,
        },
    )?;
    let confusion = confusion
        .map(Path::to_path_buf)
        .unwrap_or_else(|| output.with_extension("confusion.csv"));
    out.write(&confusion, final_report.confusion_csv())?;
    eprintln!(
        "{} documents: micro-F1 {:.4}, macro-F1 {:.4}, median F1 {:.4}; level-1 micro-F1 {:.4}",
        docs.len(),
        final_report.micro_f1,
        final_report.macro_f1,
        final_report.median_f1,
        level1_report.micro_f1
    );
    out.commit();
    Ok(final_report)
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    label: String,
    probability: f64,
}

pub fn classify(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let model = load_model(cfg)?;
    // inference accepts any abstract with at least one usable token
    let (docs, _) = load_corpus(input, cfg, IngestMode::Inference, 1)?;
    let started = Instant::now();
    let pipeline = FeaturePipeline::new(&model.idf, &model.table, model.seq_len);
    let (seqs, oov) = pipeline.featurize_all(&docs)?;
    let routed = model.cascade.predict_all(&seqs)?;
    let elapsed = started.elapsed().as_secs_f64();

    let rows: Vec<Prediction> = docs
        .iter()
        .zip(routed)
        .map(|(d, r)| Prediction {
            id: &d.id,
            label: r.label,
            probability: r.probability,
        })
        .collect();
    let mut out = Outputs::new();
    out.write_jsonl(output, &rows)?;
    eprintln!(
        "classified {} abstracts in {:.3} s ({:.1} abstracts/s); OOV rate {:.3}",
        rows.len(),
        elapsed,
        rows.len() as f64 / elapsed.max(1e-9),
        oov.rate()
    );
    out.commit();
    Ok(())
}

pub struct GradcheckOptions {
    pub cells: Vec<CellKind>,
    pub spec: ModelSpec,
    pub classes: usize,
    pub check: GradCheckConfig,
}

pub fn gradcheck(seed: u64, opts: &GradcheckOptions, output: Option<&Path>) -> Result<ExitCode> {
    let mut reports = Vec::new();
    let mut all_passed = true;
    let labels: Vec<String> = (0..opts.classes).map(|k| format!("class{k}")).collect();
    for &cell in &opts.cells {
        let spec = ModelSpec { cell, ..opts.spec.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = ModelParams::init(&spec, labels.clone(), &mut rng)?;
        let d = spec.seq_len;
        let data = (0..d * spec.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let seq = FeatureSequence::new(Matrix::from_vec(d, spec.input_dim, data), vec![true; d])?;
        let class = rng.gen_range(0..opts.classes);
        let report = gradient_check_with(&m, &seq, class, &opts.check)?;
        println!("{cell:?}: {}", if report.passed { "PASS" } else { "FAIL" });
        for t in &report.tensors {
            println!(
                "  {:<22} max rel err {:.3e}  {}",
                t.name,
                t.max_rel_error,
                if t.passed { "ok" } else { "FAIL" }
            );
        }
        all_passed &= report.passed;
        reports.push(json!({ "cell": cell, "spec": spec, "true_class": class, "report": report }));
    }
    if let Some(path) = output {
        let mut out = Outputs::new();
        out.write_json(path, &json!({ "seed": seed, "passed": all_passed, "checks": reports }))?;
        out.commit();
    }
    Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn synth(
    seed: u64,
    imbalanced: bool,
    unlabeled: bool,
    dim: usize,
    corpus: &Path,
    embeddings: Option<&Path>,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = if imbalanced {
        ImbalancedCorpus::default().generate(&mut rng)
    } else {
        KeywordCorpus::default().generate(&mut rng)
    };
    let mut out = Outputs::new();
    if let Some(path) = embeddings {
        let table = random_embeddings(&vocabulary(&docs), dim, &mut rng)?;
        out.write(path, table.to_text())?;
    }
    if unlabeled {
        for d in &mut docs {
            d.label = None;
        }
    }
    if let Some(parent) = corpus.parent().filter(|p| !p.as_os_str().is_empty()) {
        out.dir(parent)?;
    }
    out.track(corpus);
    write_corpus(corpus, &docs)?;
    eprintln!("wrote {} documents to {}", docs.len(), corpus.display());
    out.commit();
    Ok(())
}

pub fn resolve_out(flag: Option<PathBuf>, cfg_value: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| cfg_value.clone())
        .with_context(|| format!("missing {what}: pass --output"))
}
