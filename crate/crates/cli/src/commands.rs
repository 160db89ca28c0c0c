use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;
use valence_transfer::annotation::resolve_corpus;
use valence_transfer::evaluation::run_comparison;
use valence_transfer::model::{encode_documents, Head};
use valence_transfer::selfcheck::{gradient_suite, metric_suite};
use valence_transfer::synthetic::{generate, write_glove};
use valence_transfer::text::{
    load_corpus, preprocess, word_count_histogram, write_histogram_csv, write_jsonl, write_sentiment140,
    Document, ValenceLabel,
};
use valence_transfer::transfer::{load_weights, save_weights, train_source, GloveVectors};

use crate::config::RunConfig;

/// Creates `path` and writes the provenance line; the caller appends the body.
fn create_with_header(path: &Path, cfg: &RunConfig) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", cfg.header())?;
    Ok(out)
}

fn finish(mut out: BufWriter<File>, path: &Path) -> Result<()> {
    out.flush().with_context(|| format!("cannot write {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_input(cfg: &RunConfig) -> Result<Vec<Document>> {
    let input = cfg.existing(&cfg.input, "input")?;
    let docs = load_corpus(&input, cfg.corpus_format()?)?;
    info!("loaded {} documents from {}", docs.len(), input.display());
    Ok(docs)
}

fn load_glove(cfg: &RunConfig) -> Result<GloveVectors> {
    let path = cfg.existing(&cfg.glove, "glove")?;
    Ok(GloveVectors::read(&path, cfg.embedding_dim)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn preprocess_cmd(cfg: &RunConfig) -> Result<()> {
    let docs: Vec<Document> = load_input(cfg)?
        .into_iter()
        .map(|mut d| {
            d.raw_text = preprocess(&d.raw_text);
            d
        })
        .collect();
    let path = cfg.output_path()?;
    let mut out = create_with_header(&path, cfg)?;
    write_jsonl(&docs, &mut out)?;
    finish(out, &path)
}

#[derive(Serialize)]
struct CorpusStats {
    documents: usize,
    empty_documents: usize,
    mean_words: f64,
    max_words: usize,
    labels: BTreeMap<String, usize>,
}

pub fn stats_cmd(cfg: &RunConfig) -> Result<()> {
    let docs = load_input(cfg)?;
    let hist = word_count_histogram(&docs, cfg.bin_width)?;
    let path = cfg.output_path()?;
    let mut out = create_with_header(&path, cfg)?;
    write_histogram_csv(&hist, &mut out)?;
    finish(out, &path)?;

    let lengths: Vec<usize> = docs.iter().map(|d| d.tokens().len()).collect();
    let mut labels = BTreeMap::new();
    for d in &docs {
        let key = d.label.map_or("unlabelled", |l| l.as_str());
        *labels.entry(key.to_string()).or_insert(0) += 1;
    }
    print_json(&CorpusStats {
        documents: docs.len(),
        empty_documents: lengths.iter().filter(|&&n| n == 0).count(),
        mean_words: lengths.iter().sum::<usize>() as f64 / docs.len().max(1) as f64,
        max_words: lengths.iter().copied().max().unwrap_or(0),
        labels,
    })
}

pub fn resolve_cmd(cfg: &RunConfig) -> Result<()> {
    let docs = load_input(cfg)?;
    let (report, resolved) = resolve_corpus(&docs)?;
    let path = cfg.output_path()?;
    let mut out = create_with_header(&path, cfg)?;
    write_jsonl(&resolved, &mut out)?;
    finish(out, &path)?;
    print_json(&report)
}

#[derive(Serialize)]
struct SourceSummary {
    vocab_size: usize,
    epochs: usize,
    best_epoch: usize,
    val_macro_f1: f64,
    weights: String,
    history: String,
}

pub fn train_source_cmd(cfg: &RunConfig) -> Result<()> {
    let docs = load_input(cfg)?;
    let glove = match &cfg.glove {
        Some(_) => Some(load_glove(cfg)?),
        None => None,
    };
    let path = cfg.output_path()?;
    let run = train_source(&docs, glove.as_ref(), &cfg.model_config(Head::Binary), cfg.min_count, cfg.val_fraction)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_weights(&run.model, &run.vocab, &path)?;
    info!("wrote {}", path.display());
    let history = path.with_extension("history.csv");
    run.history.save_csv(&history, Some(&cfg.header()))?;
    print_json(&SourceSummary {
        vocab_size: run.vocab.len(),
        epochs: run.history.epochs.len(),
        best_epoch: run.history.best_epoch,
        val_macro_f1: run.history.best().map_or(0.0, |e| e.val_macro_f1),
        weights: path.display().to_string(),
        history: history.display().to_string(),
    })
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let docs = load_input(cfg)?;
    let weights = load_weights(&cfg.existing(&cfg.weights, "weights")?)?;
    let glove = load_glove(cfg)?;
    let dir = cfg.output_path()?;
    fs::create_dir_all(&dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    let cmp = run_comparison(&docs, Some(&weights), Some(&glove), &cfg.comparison_config())?;

    let path = dir.join("table.csv");
    let mut out = create_with_header(&path, cfg)?;
    cmp.write_table_csv(&mut out)?;
    finish(out, &path)?;
    for class in ValenceLabel::ALL {
        let path = dir.join(format!("roc_{}.csv", class.as_str()));
        let mut out = create_with_header(&path, cfg)?;
        cmp.write_roc_csv(class, &mut out)?;
        finish(out, &path)?;
    }
    let path = dir.join("attention.csv");
    let mut out = create_with_header(&path, cfg)?;
    cmp.attention.write_csv(&mut out, cfg.top_n)?;
    finish(out, &path)?;

    let summary: BTreeMap<&str, f64> = cmp.arms.iter().map(|a| (a.arm.title(), a.report.macro_f1)).collect();
    print_json(&summary)
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    id: &'a str,
    predicted: &'a str,
    probabilities: BTreeMap<&'a str, f64>,
    tokens: Vec<&'a str>,
    alphas: &'a [f64],
}

pub fn predict_cmd(cfg: &RunConfig) -> Result<()> {
    let weights = load_weights(&cfg.existing(&cfg.weights, "weights")?)?;
    let model = weights.to_model(&weights.vocabulary)?;
    let docs = load_input(cfg)?;
    let labels = model.config.head.label_order();
    let encoded = encode_documents(&docs, &weights.vocabulary, model.config.max_len)?;
    let path = cfg.output_path()?;
    let mut out = create_with_header(&path, cfg)?;
    for (doc, (id, seq)) in docs.iter().zip(&encoded) {
        if seq.true_length == 0 {
            warn!("skipping document {id}: no tokens after preprocessing");
            continue;
        }
        let pred = model.predict(seq)?;
        let tokens = doc.tokens();
        let record = PredictionRecord {
            id,
            predicted: &labels[pred.predicted_class],
            probabilities: labels.iter().map(String::as_str).zip(pred.class_scores()).collect(),
            tokens: tokens[..seq.true_length].iter().map(String::as_str).collect(),
            alphas: &pred.alphas,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    finish(out, &path)
}

pub fn selfcheck_cmd(cfg: &RunConfig) -> Result<()> {
    let grads = gradient_suite(0..cfg.grad_seeds)?;
    let metrics = metric_suite(0..cfg.metric_instances)?;
    let mut failures = 0;
    for c in grads.iter().filter(|c| !c.passed()) {
        failures += 1;
        eprintln!("FAIL gradient {} seed {} ({}): max relative error {:.3e}", c.component, c.seed, c.shape, c.max_relative_error);
    }
    for c in metrics.iter().filter(|c| !c.passed()) {
        failures += 1;
        eprintln!(
            "FAIL metrics seed {} (n={}, C={}): F1-family error {:.3e}, {} AUROC mismatches",
            c.seed, c.n, c.n_classes, c.f1_family_error, c.auroc_mismatches
        );
    }
    let worst = grads.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    println!(
        "gradient cases: {} (worst relative error {worst:.3e}); metric instances: {}; failures: {failures}",
        grads.len(),
        metrics.len()
    );
    if failures > 0 {
        bail!("{failures} self-check case(s) failed");
    }
    Ok(())
}

pub fn synth_cmd(cfg: &RunConfig) -> Result<()> {
    let mut scfg = cfg.synthetic.clone();
    scfg.glove_dim = cfg.embedding_dim;
    let data = generate(&scfg, cfg.seed);
    let dir = cfg.output_path()?;
    fs::create_dir_all(&dir).with_context(|| format!("cannot create directory {}", dir.display()))?;

    let path = dir.join("source.csv");
    let mut out = create_with_header(&path, cfg)?;
    write_sentiment140(&data.source, &mut out)?;
    finish(out, &path)?;

    let path = dir.join("target.jsonl");
    let mut out = create_with_header(&path, cfg)?;
    write_jsonl(&data.target, &mut out)?;
    finish(out, &path)?;

    let path = dir.join("signal.txt");
    let mut out = create_with_header(&path, cfg)?;
    for w in &data.positive {
        writeln!(out, "{w} positive")?;
    }
    for w in &data.negative {
        writeln!(out, "{w} negative")?;
    }
    finish(out, &path)?;

    // Word-vector files stay header-free so other tools can read them.
    let path = dir.join("glove.txt");
    let mut out = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
    write_glove(&data.glove, &mut out)?;
    finish(out, &path)
}
