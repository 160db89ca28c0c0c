//! The valence network: embedding, dropout, BiGRU, attention, dropout, dense head.

use std::io::Write;
use std::path::Path;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::metrics::{macro_f1, ConfusionMatrix};
use crate::neural::{
    bce_logit_grad, binary_cross_entropy, categorical_cross_entropy, cce_logit_grad, dense,
    dense_backward, embedding_lookup, sigmoid, softmax, AdamConfig, AdamState, AttentionParams,
    BiGruParams, DropoutMask, Rng, Scalar, Tensor, ATTENTION_TENSOR_NAMES, GRU_TENSOR_NAMES,
};
use crate::text::{encode, Document, EncodedSequence, Label, PolarityLabel, Vocabulary};

/// Standard deviation of the embedding and attention-context initializers.
pub const INIT_STD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    Binary,
    FourClass,
}

impl Head {
    /// Output layer width.
    pub fn width(self) -> usize {
        match self {
            Head::Binary => 1,
            Head::FourClass => 4,
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            Head::Binary => 2,
            Head::FourClass => 4,
        }
    }

    /// Class index for `label` under this head, if the label kind fits.
    pub fn class_of(self, label: &Label) -> Option<usize> {
        match (self, label) {
            (Head::Binary, Label::Polarity(p)) => Some(p.index()),
            (Head::FourClass, Label::Valence(v)) => Some(v.index()),
            _ => None,
        }
    }

    pub fn label_order(self) -> Vec<String> {
        match self {
            Head::Binary => PolarityLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
            Head::FourClass => crate::text::ValenceLabel::ALL
                .iter()
                .map(|l| l.as_str().to_string())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Hidden units per direction; the BiGRU output is twice this wide.
    pub gru_units: usize,
    pub dropout_embed: f64,
    pub dropout_rnn_output: f64,
    pub head: Head,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, head: Head) -> Self {
        ModelConfig {
            vocab_size,
            embedding_dim: 50,
            gru_units: 64,
            dropout_embed: 0.5,
            dropout_rnn_output: 0.5,
            head,
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            max_len: crate::text::DEFAULT_MAX_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size {} < 2", self.vocab_size));
        }
        if self.embedding_dim == 0 || self.gru_units == 0 {
            return bad("embedding_dim and gru_units must be ≥ 1".into());
        }
        for (name, r) in [("dropout_embed", self.dropout_embed), ("dropout_rnn_output", self.dropout_rnn_output)] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} {r} outside [0, 1)"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_len == 0 {
            return bad("batch_size and max_len must be ≥ 1".into());
        }
        Ok(())
    }

    /// Width of the BiGRU output and the attention space.
    pub fn context_dim(&self) -> usize {
        2 * self.gru_units
    }
}

/// Every trainable tensor of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub embedding: Tensor<T>,
    pub gru: BiGruParams<T>,
    pub attn: AttentionParams<T>,
    pub head_w: Tensor<T>,
    pub head_b: Tensor<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config.context_dim();
        ModelParams {
            embedding: Tensor::zeros(&[config.vocab_size, config.embedding_dim]),
            gru: BiGruParams::zeros(config.embedding_dim, config.gru_units),
            attn: AttentionParams::zeros(c),
            head_w: Tensor::zeros(&[config.head.width(), c]),
            head_b: Tensor::zeros(&[config.head.width()]),
        }
    }

    /// Container names in canonical order.
    pub fn names() -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for dir in ["fwd", "bwd"] {
            names.extend(GRU_TENSOR_NAMES.iter().map(|n| format!("gru.{dir}.{n}")));
        }
        names.extend(ATTENTION_TENSOR_NAMES.iter().map(|n| format!("attn.{n}")));
        names.push("head.W".into());
        names.push("head.b".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.embedding];
        v.extend(self.gru.fwd.tensors());
        v.extend(self.gru.bwd.tensors());
        v.extend(self.attn.tensors());
        v.push(&self.head_w);
        v.push(&self.head_b);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.gru.fwd.tensors_mut());
        v.extend(self.gru.bwd.tensors_mut());
        v.extend(self.attn.tensors_mut());
        v.push(&mut self.head_w);
        v.push(&mut self.head_b);
        v
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        Self::names().into_iter().zip(self.tensors()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U> {
            embedding: self.embedding.cast(),
            gru: BiGruParams::zeros(0, 0),
            attn: AttentionParams::zeros(0),
            head_w: self.head_w.cast(),
            head_b: self.head_b.cast(),
        };
        out.gru.fwd = cast_gru(&self.gru.fwd);
        out.gru.bwd = cast_gru(&self.gru.bwd);
        out.attn = AttentionParams {
            w: self.attn.w.cast(),
            b: self.attn.b.cast(),
            u: self.attn.u.cast(),
        };
        out
    }

    /// All values concatenated in canonical order.
    pub fn to_flat(&self) -> Vec<T> {
        self.tensors().into_iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        let total: usize = self.tensors().iter().map(|t| t.len()).sum();
        if total != flat.len() {
            return Err(Error::Shape(format!("{} values for {total} parameters", flat.len())));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Checks every tensor shape against `config`, listing all offenders.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = ModelParams::<T>::zeros(config);
        let offenders: Vec<String> = self
            .named()
            .into_iter()
            .zip(expected.tensors())
            .filter(|((_, a), b)| a.shape() != b.shape())
            .map(|((name, a), b)| format!("{name}: shape {:?}, expected {:?}", a.shape(), b.shape()))
            .collect();
        if offenders.is_empty() {
            Ok(())
        } else {
            Err(Error::ArchitectureMismatch(offenders))
        }
    }
}

fn cast_gru<T: Scalar, U: Scalar>(p: &crate::neural::GruParams<T>) -> crate::neural::GruParams<U> {
    crate::neural::GruParams {
        u_r: p.u_r.cast(),
        u_z: p.u_z.cast(),
        u_h: p.u_h.cast(),
        w_r: p.w_r.cast(),
        w_z: p.w_z.cast(),
        w_h: p.w_h.cast(),
        b_r: p.b_r.cast(),
        b_z: p.b_z.cast(),
        b_h: p.b_h.cast(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
}

/// Output of one forward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Positive-class probability for the binary head, the class distribution otherwise.
    pub class_probs: Vec<f64>,
    pub predicted_class: usize,
    /// Attention weight of each real token, in input order.
    pub alphas: Vec<f64>,
}

impl Prediction {
    /// Per-class scores, width `n_classes` for both heads.
    pub fn class_scores(&self) -> Vec<f64> {
        if self.class_probs.len() == 1 {
            vec![1.0 - self.class_probs[0], self.class_probs[0]]
        } else {
            self.class_probs.clone()
        }
    }
}

/// Encoded input paired with its class index.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub seq: EncodedSequence,
    pub class: usize,
}

/// Encodes labelled documents for `head`, dropping those with no tokens.
pub fn prepare_samples(docs: &[Document], vocab: &Vocabulary, max_len: usize, head: Head) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let label = doc.label.as_ref().ok_or_else(|| Error::Missing(format!("label for document {}", doc.id)))?;
        let class = head.class_of(label).ok_or_else(|| {
            Error::LabelMismatch(format!("document {} has label {} for a {:?} head", doc.id, label.as_str(), head))
        })?;
        let seq = encode(&doc.tokens(), vocab, max_len)?;
        if seq.true_length == 0 {
            warn!("dropping document {}: no tokens after preprocessing", doc.id);
            continue;
        }
        out.push(Sample {
            id: doc.id.clone(),
            seq,
            class,
        });
    }
    Ok(out)
}

/// Encodes documents for inference; empty ones are kept and fail at prediction.
pub fn encode_documents(docs: &[Document], vocab: &Vocabulary, max_len: usize) -> Result<Vec<(String, EncodedSequence)>> {
    docs.iter()
        .map(|d| Ok((d.id.clone(), encode(&d.tokens(), vocab, max_len)?)))
        .collect()
}

struct ForwardCache<T> {
    indices: Vec<usize>,
    emb_mask: DropoutMask<T>,
    gru_cache: crate::neural::BiGruCache<T>,
    h: Tensor<T>,
    attn_cache: crate::neural::AttentionCache<T>,
    ctx_mask: DropoutMask<T>,
    ctx: Vec<T>,
    probs: Vec<T>,
}

/// Randomly initialized model.
pub fn build_model<T: Scalar>(config: ModelConfig, rng: &mut Rng) -> Result<Model<T>> {
    config.validate()?;
    let c = config.context_dim();
    let embedding = Tensor::normal(&[config.vocab_size, config.embedding_dim], INIT_STD, rng);
    let gru = BiGruParams::init(config.embedding_dim, config.gru_units, rng);
    let attn = AttentionParams::init(c, INIT_STD, rng);
    let head_w = Tensor::glorot(config.head.width(), c, rng);
    let head_b = Tensor::zeros(&[config.head.width()]);
    Ok(Model {
        config,
        params: ModelParams {
            embedding,
            gru,
            attn,
            head_w,
            head_b,
        },
    })
}

impl<T: Scalar> Model<T> {
    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Model { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    fn forward_cached(&self, seq: &EncodedSequence, training: bool, rng: &mut Rng) -> Result<ForwardCache<T>> {
        if seq.true_length == 0 {
            return Err(Error::EmptySequence);
        }
        let p = &self.params;
        let indices = seq.real().to_vec();
        let mut x = embedding_lookup(&indices, &p.embedding)?;
        let emb_mask = DropoutMask::sample(x.len(), self.config.dropout_embed, rng, training)?;
        emb_mask.apply(x.data_mut());
        let (h, gru_cache) = p.gru.run(&x)?;
        let (mut ctx, attn_cache) = p.attn.run(&h)?;
        let ctx_mask = DropoutMask::sample(ctx.len(), self.config.dropout_rnn_output, rng, training)?;
        ctx_mask.apply(&mut ctx);
        let logits = dense(&ctx, &p.head_w, p.head_b.data())?;
        let probs = match self.config.head {
            Head::Binary => vec![sigmoid(logits[0])],
            Head::FourClass => softmax(&logits),
        };
        Ok(ForwardCache {
            indices,
            emb_mask,
            gru_cache,
            h,
            attn_cache,
            ctx_mask,
            ctx,
            probs,
        })
    }

    pub fn forward(&self, seq: &EncodedSequence, training: bool, rng: &mut Rng) -> Result<Prediction> {
        let cache = self.forward_cached(seq, training, rng)?;
        let class_probs: Vec<f64> = cache.probs.iter().map(|p| p.as_f64()).collect();
        let predicted_class = match self.config.head {
            Head::Binary => usize::from(class_probs[0] >= 0.5),
            Head::FourClass => argmax(&class_probs),
        };
        Ok(Prediction {
            class_probs,
            predicted_class,
            alphas: cache.attn_cache.alphas().iter().map(|a| a.as_f64()).collect(),
        })
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, seq: &EncodedSequence) -> Result<Prediction> {
        // Dropout is the identity outside training, so the RNG is never drawn.
        self.forward(seq, false, &mut Rng::seed_from(0))
    }

    fn loss_of(&self, probs: &[T], class: usize) -> T {
        match self.config.head {
            Head::Binary => binary_cross_entropy(probs[0], T::lit(class as f64)),
            Head::FourClass => categorical_cross_entropy(probs, class),
        }
    }

    pub fn loss(&self, seq: &EncodedSequence, class: usize, training: bool, rng: &mut Rng) -> Result<T> {
        self.check_class(class)?;
        let cache = self.forward_cached(seq, training, rng)?;
        Ok(self.loss_of(&cache.probs, class))
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.config.head.n_classes() {
            return Err(Error::LabelMismatch(format!(
                "class {class} for a {:?} head with {} classes",
                self.config.head,
                self.config.head.n_classes()
            )));
        }
        Ok(())
    }

    /// Accumulates `dLoss/dθ` for one sample into `grads` and returns the loss.
    pub fn accumulate_gradients(
        &self,
        seq: &EncodedSequence,
        class: usize,
        training: bool,
        rng: &mut Rng,
        grads: &mut ModelParams<T>,
    ) -> Result<T> {
        self.check_class(class)?;
        let c = self.forward_cached(seq, training, rng)?;
        let loss = self.loss_of(&c.probs, class);
        let d_logits = match self.config.head {
            Head::Binary => vec![bce_logit_grad(c.probs[0], T::lit(class as f64))],
            Head::FourClass => cce_logit_grad(&c.probs, class),
        };
        let p = &self.params;
        let mut d_ctx = dense_backward(&c.ctx, &p.head_w, &d_logits, &mut grads.head_w, grads.head_b.data_mut());
        c.ctx_mask.apply(&mut d_ctx);
        let d_h = p.attn.backward(&c.h, &c.attn_cache, &d_ctx, &mut grads.attn);
        let mut d_x = p.gru.backward(&c.gru_cache, &d_h, &mut grads.gru);
        c.emb_mask.apply(d_x.data_mut());
        crate::neural::embedding_backward(&c.indices, &d_x, &mut grads.embedding);
        Ok(loss)
    }
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

/// Inference over a dataset in input order.
pub fn predict_batch<T: Scalar>(model: &Model<T>, data: &[(String, EncodedSequence)]) -> Result<Vec<Prediction>> {
    data.par_iter()
        .map(|(id, seq)| {
            model.predict(seq).map_err(|e| match e {
                Error::EmptySequence => Error::EmptySample { id: id.clone() },
                other => other,
            })
        })
        .collect()
}

fn predict_samples<T: Scalar>(model: &Model<T>, samples: &[Sample]) -> Result<Vec<Prediction>> {
    samples
        .par_iter()
        .map(|s| model.predict(&s.seq).map_err(|_| Error::EmptySample { id: s.id.clone() }))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,val_loss,val_macro_f1")?;
        for e in &self.epochs {
            writeln!(out, "{},{:.6},{:.6},{:.6}", e.epoch, e.train_loss, e.val_loss, e.val_macro_f1)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, preamble: Option<&str>) -> Result<()> {
        let mut buf = Vec::new();
        if let Some(p) = preamble {
            buf.extend_from_slice(p.trim_end_matches('\n').as_bytes());
            buf.push(b'\n');
        }
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Validation loss and macro F1 in inference mode.
pub fn evaluate_samples<T: Scalar>(model: &Model<T>, samples: &[Sample]) -> Result<(f64, f64)> {
    let preds = predict_samples(model, samples)?;
    let mut cm = ConfusionMatrix::new(model.config.head.n_classes());
    let mut loss = 0.0;
    for (s, p) in samples.iter().zip(&preds) {
        cm.record(s.class, p.predicted_class)?;
        let probs: Vec<T> = p.class_probs.iter().map(|&x| T::lit(x)).collect();
        loss += model.loss_of(&probs, s.class).as_f64();
    }
    Ok((loss / samples.len() as f64, macro_f1(&cm)))
}

/// Mini-batch Adam with early stopping on validation macro F1; returns the
/// model restored to its best epoch.
pub fn train<T: Scalar>(mut model: Model<T>, train_set: &[Sample], val_set: &[Sample]) -> Result<(Model<T>, TrainHistory)> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("train and validation sets must be nonempty".into()));
    }
    for s in train_set.iter().chain(val_set) {
        model.check_class(s.class)?;
        if s.seq.true_length == 0 {
            return Err(Error::EmptySample { id: s.id.clone() });
        }
    }

    let mut rng = Rng::seed_from(cfg.seed);
    let adam_cfg = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, model.params.tensors());
    let mut grads = ModelParams::<T>::zeros(&cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams<T>)> = None;
    let mut wait = 0;

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let s = &train_set[i];
                let mut sample_rng = Rng::seed_from(rng.next_u64());
                let l = model.accumulate_gradients(&s.seq, s.class, true, &mut sample_rng, &mut grads)?;
                epoch_loss += l.as_f64();
            }
            let inv = T::lit(1.0 / batch.len() as f64);
            for g in grads.tensors_mut() {
                g.scale(inv);
            }
            adam.step(&mut model.params.tensors_mut(), &grads.tensors())?;
            for g in grads.tensors_mut() {
                g.fill_zero();
            }
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (val_loss, val_f1) = evaluate_samples(&model, val_set)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_macro_f1: val_f1,
        });
        debug!("epoch {epoch}: train_loss {train_loss:.4} val_loss {val_loss:.4} val_macro_f1 {val_f1:.4}");

        let improved = best.as_ref().is_none_or(|(f, _)| val_f1 > *f);
        if improved {
            best = Some((val_f1, model.params.clone()));
            history.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                history.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    if let Some((f1, params)) = best {
        model.params = params;
        info!("restored epoch {} (val macro F1 {f1:.4})", history.best_epoch);
    }
    Ok((model, history))
}
