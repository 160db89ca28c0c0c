use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{Baseline, LogRegConfig};
use crate::error::{Error, Result};
use crate::evaluation::attention_report::{attention_report_from_predictions, AttentionReport, DEFAULT_TOP_N};
use crate::evaluation::folds::{stratified_holdout, stratified_kfold};
use crate::evaluation::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::model::{build_model, train, Head, Model, ModelConfig, Prediction, Sample, TrainHistory};
use crate::neural::Rng;
use crate::text::{build_vocabulary_from_tokens, encode, Document, ValenceLabel, Vocabulary};
use crate::transfer::{transfer_embeddings, transfer_full, GloveVectors, ModelWeights};

/// The four compared models, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    LogisticRegression,
    Rnn,
    EmbeddingTransfer,
    FullTransfer,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::LogisticRegression, Arm::Rnn, Arm::EmbeddingTransfer, Arm::FullTransfer];

    pub fn title(self) -> &'static str {
        match self {
            Arm::LogisticRegression => "Logistic Regression",
            Arm::Rnn => "RNN",
            Arm::EmbeddingTransfer => "RNN (Embedding Transfer)",
            Arm::FullTransfer => "RNN (Full Weight Transfer)",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    /// Hyperparameters shared by the RNN arms; `vocab_size` and `head` are set per arm.
    pub model: ModelConfig,
    pub folds: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub logreg: LogRegConfig,
    pub top_n: usize,
}

impl ComparisonConfig {
    pub fn new(model: ModelConfig) -> Self {
        ComparisonConfig {
            model,
            folds: 5,
            seed: 0,
            val_fraction: 0.1,
            logreg: LogRegConfig::default(),
            top_n: DEFAULT_TOP_N,
        }
    }
}

/// Pooled out-of-fold results of one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    /// Class scores per document, aligned with [`Comparison::ids`].
    pub scores: Vec<Vec<f64>>,
    pub predicted: Vec<usize>,
    pub report: MetricsReport,
    /// Early-stopping history per fold; empty for the linear arm.
    pub histories: Vec<TrainHistory>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    /// One entry per [`Arm::ALL`], same order.
    pub arms: Vec<ArmResult>,
    /// Attention mass of the full-transfer arm over its out-of-fold predictions.
    pub attention: AttentionReport,
}

impl Comparison {
    pub fn arm(&self, arm: Arm) -> &ArmResult {
        &self.arms[Arm::ALL.iter().position(|&a| a == arm).expect("every arm is present")]
    }
}

struct Prepared {
    ids: Vec<String>,
    tokens: Vec<Vec<String>>,
    labels: Vec<usize>,
}

fn prepare(docs: &[Document]) -> Result<Prepared> {
    let mut p = Prepared {
        ids: Vec::new(),
        tokens: Vec::new(),
        labels: Vec::new(),
    };
    for d in docs {
        let label = d.label.as_ref().ok_or_else(|| Error::Missing(format!("label for document {}", d.id)))?;
        let class = Head::FourClass.class_of(label).ok_or_else(|| {
            Error::LabelMismatch(format!("document {} has label {}, expected a valence label", d.id, label.as_str()))
        })?;
        let toks = d.tokens();
        if toks.is_empty() {
            warn!("dropping document {}: no tokens after preprocessing", d.id);
            continue;
        }
        p.ids.push(d.id.clone());
        p.tokens.push(toks);
        p.labels.push(class);
    }
    if p.ids.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok(p)
}

struct FoldOutput {
    test: Vec<usize>,
    /// Per arm, per test document.
    preds: Vec<Vec<Prediction>>,
    histories: Vec<Option<TrainHistory>>,
}

fn samples(data: &Prepared, idx: &[usize], vocab: &Vocabulary, max_len: usize) -> Result<Vec<Sample>> {
    idx.iter()
        .map(|&i| {
            Ok(Sample {
                id: data.ids[i].clone(),
                seq: encode(&data.tokens[i], vocab, max_len)?,
                class: data.labels[i],
            })
        })
        .collect()
}

fn fit_and_predict(
    model: Model<f32>,
    data: &Prepared,
    train_idx: &[usize],
    val_idx: &[usize],
    test_idx: &[usize],
    vocab: &Vocabulary,
) -> Result<(Vec<Prediction>, TrainHistory)> {
    let max_len = model.config.max_len;
    let train_set = samples(data, train_idx, vocab, max_len)?;
    let val_set = samples(data, val_idx, vocab, max_len)?;
    let (model, history) = train(model, &train_set, &val_set)?;
    let preds = samples(data, test_idx, vocab, max_len)?
        .iter()
        .map(|s| model.predict(&s.seq))
        .collect::<Result<Vec<_>>>()?;
    Ok((preds, history))
}

struct Sources<'a> {
    weights: &'a ModelWeights,
    glove: &'a GloveVectors,
}

fn run_fold(data: &Prepared, test: Vec<usize>, src: &Sources, cfg: &ComparisonConfig, fold: usize) -> Result<FoldOutput> {
    let mut rng = Rng::seed_from(cfg.seed.wrapping_add(fold as u64));
    let in_fold = {
        let mut t = vec![false; data.ids.len()];
        test.iter().for_each(|&i| t[i] = true);
        t
    };
    let fit_idx: Vec<usize> = (0..data.ids.len()).filter(|&i| !in_fold[i]).collect();
    let (train_idx, val_idx) = stratified_holdout(&fit_idx, &data.labels, cfg.val_fraction, &mut rng)?;
    if val_idx.is_empty() {
        return Err(Error::InvalidArgument(format!("fold {fold}: empty validation split")));
    }

    // The linear arm has no early stopping and fits on the whole training portion.
    let fit_tokens: Vec<Vec<&str>> = fit_idx.iter().map(|&i| data.tokens[i].iter().map(String::as_str).collect()).collect();
    let fit_labels: Vec<usize> = fit_idx.iter().map(|&i| data.labels[i]).collect();
    let lr = Baseline::fit(&fit_tokens, &fit_labels, 4, &cfg.logreg)?;
    let lr_preds = test
        .iter()
        .map(|&i| {
            let p = lr.predict_proba(&data.tokens[i]);
            let c = argmax(&p);
            Prediction {
                class_probs: p,
                predicted_class: c,
                alphas: Vec::new(),
            }
        })
        .collect();

    let mut template = cfg.model.clone();
    template.head = Head::FourClass;

    let own_vocab = build_vocabulary_from_tokens(train_idx.iter().map(|&i| &data.tokens[i]), 1)?;
    let mut rnn_cfg = template.clone();
    rnn_cfg.vocab_size = own_vocab.len();
    rnn_cfg.seed = rng.next_u64();
    let rnn = build_model::<f32>(rnn_cfg, &mut rng.fork())?;
    let (rnn_preds, rnn_hist) = fit_and_predict(rnn, data, &train_idx, &val_idx, &test, &own_vocab)?;

    let src_vocab = &src.weights.vocabulary;
    let mut tr_cfg = template;
    tr_cfg.vocab_size = src_vocab.len();

    let mut emb_cfg = tr_cfg.clone();
    emb_cfg.seed = rng.next_u64();
    let mut emb_rng = rng.fork();
    let (table, _) = src.glove.embedding_for(src_vocab, &mut emb_rng);
    let emb = transfer_embeddings(emb_cfg, &table, &mut emb_rng)?;
    let (emb_preds, emb_hist) = fit_and_predict(emb, data, &train_idx, &val_idx, &test, src_vocab)?;

    let mut full_cfg = tr_cfg;
    full_cfg.seed = rng.next_u64();
    let full = transfer_full(src.weights, &full_cfg, &src.weights.vocab_hash, &mut rng.fork())?;
    let (full_preds, full_hist) = fit_and_predict(full, data, &train_idx, &val_idx, &test, src_vocab)?;

    info!(
        "fold {fold}: {} train, {} validation, {} test; best epochs {} / {} / {}",
        train_idx.len(),
        val_idx.len(),
        test.len(),
        rnn_hist.best_epoch,
        emb_hist.best_epoch,
        full_hist.best_epoch
    );
    Ok(FoldOutput {
        test,
        preds: vec![lr_preds, rnn_preds, emb_preds, full_preds],
        histories: vec![None, Some(rnn_hist), Some(emb_hist), Some(full_hist)],
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Stratified k-fold comparison of the four models on a valence-labelled corpus.
///
/// The random-init RNN uses a vocabulary built from each fold's training
/// portion; both transfer arms use the source model's vocabulary. Metrics are
/// computed once over the pooled out-of-fold predictions.
pub fn run_comparison(
    target: &[Document],
    source: Option<&ModelWeights>,
    glove: Option<&GloveVectors>,
    cfg: &ComparisonConfig,
) -> Result<Comparison> {
    let weights = source.ok_or_else(|| Error::Missing("source weights for the full-transfer arm".into()))?;
    let glove = glove.ok_or_else(|| Error::Missing("GloVe vectors for the embedding-transfer arm".into()))?;
    weights.validate()?;
    let data = prepare(target)?;
    let n = data.ids.len();
    let folds = stratified_kfold(&data.labels, cfg.folds, cfg.seed)?;
    let src = Sources { weights, glove };

    let outputs: Vec<FoldOutput> = folds
        .into_par_iter()
        .enumerate()
        .map(|(f, test)| run_fold(&data, test, &src, cfg, f))
        .collect::<Result<_>>()?;

    let mut pooled: Vec<Vec<Option<Prediction>>> = vec![vec![None; n]; Arm::ALL.len()];
    let mut histories: Vec<Vec<TrainHistory>> = vec![Vec::new(); Arm::ALL.len()];
    for out in outputs {
        for (a, preds) in out.preds.into_iter().enumerate() {
            for (&i, p) in out.test.iter().zip(preds) {
                if pooled[a][i].replace(p).is_some() {
                    return Err(Error::Inconsistent(format!("document {} predicted twice", data.ids[i])));
                }
            }
        }
        for (a, h) in out.histories.into_iter().enumerate() {
            histories[a].extend(h);
        }
    }

    let mut arms = Vec::with_capacity(Arm::ALL.len());
    let mut full_preds = Vec::new();
    for ((arm, preds), hist) in Arm::ALL.into_iter().zip(pooled).zip(histories) {
        let preds: Vec<Prediction> = preds
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| Error::Inconsistent(format!("document {} never predicted", data.ids[i]))))
            .collect::<Result<_>>()?;
        let predicted: Vec<usize> = preds.iter().map(|p| p.predicted_class).collect();
        let scores: Vec<Vec<f64>> = preds.iter().map(Prediction::class_scores).collect();
        let cm = ConfusionMatrix::from_pairs(4, &data.labels, &predicted)?;
        let report = compute_metrics(&cm, &scores, &data.labels)?;
        info!("{}: macro F1 {:.4}, accuracy {:.4}", arm.title(), report.macro_f1, report.accuracy);
        if arm == Arm::FullTransfer {
            full_preds = preds;
        }
        arms.push(ArmResult {
            arm,
            scores,
            predicted,
            report,
            histories: hist,
        });
    }

    let surface: Vec<&[String]> = data
        .tokens
        .iter()
        .map(|t| &t[..t.len().min(cfg.model.max_len)])
        .collect();
    let names: Vec<&str> = ValenceLabel::ALL.iter().map(|l| l.title()).collect();
    let surface: Vec<Vec<&str>> = surface.iter().map(|t| t.iter().map(String::as_str).collect()).collect();
    let attention = attention_report_from_predictions(&surface, &full_preds, &names)?;

    Ok(Comparison {
        ids: data.ids,
        labels: data.labels,
        arms,
        attention,
    })
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

impl Comparison {
    /// Model × metric grid: aggregate rows, then precision, recall, F1 and AUC per class.
    pub fn write_table_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let titles: Vec<&str> = self.arms.iter().map(|a| a.arm.title()).collect();
        writeln!(out, "Class,Metric,{}", titles.join(","))?;
        let mut row = |class: &str, metric: &str, get: &dyn Fn(&MetricsReport) -> Option<f64>| -> std::io::Result<()> {
            let cells: Vec<String> = self.arms.iter().map(|a| fmt_value(get(&a.report))).collect();
            writeln!(out, "{class},{metric},{}", cells.join(","))
        };
        row("All", "Macro F1", &|r| Some(r.macro_f1))?;
        row("All", "Weighted F1", &|r| Some(r.weighted_f1))?;
        row("All", "Accuracy", &|r| Some(r.accuracy))?;
        for label in ValenceLabel::ALL {
            let c = label.index();
            row(label.title(), "Precision", &|r| Some(r.per_class[c].precision))?;
            row(label.title(), "Recall", &|r| Some(r.per_class[c].recall))?;
            row(label.title(), "F1", &|r| Some(r.per_class[c].f1))?;
            row(label.title(), "AUC", &|r| r.per_class[c].auroc)?;
        }
        Ok(())
    }

    /// One-vs-rest ROC points of `class` for every arm.
    pub fn write_roc_csv<W: Write>(&self, class: ValenceLabel, mut out: W) -> std::io::Result<()> {
        writeln!(out, "model,fpr,tpr")?;
        for a in &self.arms {
            for (fpr, tpr) in &a.report.roc[class.index()] {
                writeln!(out, "{},{fpr:.6},{tpr:.6}", a.arm.title())?;
            }
        }
        Ok(())
    }
}
