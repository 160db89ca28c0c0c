//! Weight container, GloVe ingestion, and the embedding-only and full-weight
//! transfer procedures.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! "VTWX" | version: u32 | header_len: u64 | header: UTF-8 JSON | f32 payloads
//! ```
//!
//! Payloads follow the header's tensor list in order, each row-major.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::stratified_holdout;
use crate::model::{build_model, prepare_samples, train, Head, Model, ModelConfig, ModelParams, TrainHistory, INIT_STD};
use crate::neural::{Rng, Tensor};
use crate::text::{build_vocabulary, Document, Vocabulary, PAD};

pub const MAGIC: &[u8; 4] = b"VTWX";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 4 + 4 + 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    vocab_hash: String,
    label_order: Vec<String>,
    vocab_min_count: usize,
    vocabulary: Vec<String>,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus the metadata needed to rebuild and validate a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub label_order: Vec<String>,
    pub vocabulary: Vocabulary,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl ModelWeights {
    pub fn from_model(model: &Model<f32>, vocab: &Vocabulary) -> Result<Self> {
        if vocab.len() != model.config.vocab_size {
            return Err(Error::Inconsistent(format!(
                "vocabulary has {} entries, model expects {}",
                vocab.len(),
                model.config.vocab_size
            )));
        }
        Ok(ModelWeights {
            config: model.config.clone(),
            vocab_hash: vocab.content_hash(),
            label_order: model.config.head.label_order(),
            vocabulary: vocab.clone(),
            tensors: model
                .params
                .named()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            label_order: self.label_order.clone(),
            vocab_min_count: self.vocabulary.min_count(),
            vocabulary: self.vocabulary.tokens().to_vec(),
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                    dtype: "f32".into(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = self.tensors.iter().map(|(_, t)| 4 * t.len()).sum();
        let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated(format!("{} bytes, no magic", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < PREFIX_LEN {
            return Err(Error::Truncated("incomplete preamble".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|h| PREFIX_LEN.checked_add(h))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Truncated(format!("header of {header_len} bytes")))?;
        let header: Header = serde_json::from_slice(&bytes[PREFIX_LEN..header_end])
            .map_err(|e| Error::Inconsistent(format!("header: {e}")))?;
        if header.format_version != version {
            return Err(Error::Inconsistent(format!(
                "header declares version {}, preamble {version}",
                header.format_version
            )));
        }

        let mut offset = header_end;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            if entry.dtype != "f32" {
                return Err(Error::Inconsistent(format!("{}: dtype {}", entry.name, entry.dtype)));
            }
            let n = entry
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Inconsistent(format!("{}: shape {:?} overflows", entry.name, entry.shape)))?
                / 4;
            let end = offset.saturating_add(4 * n);
            if end > bytes.len() {
                return Err(Error::Truncated(format!(
                    "tensor {} needs {} bytes, {} remain",
                    entry.name,
                    4 * n,
                    bytes.len() - offset
                )));
            }
            let data = bytes[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)?));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(Error::TrailingBytes(bytes.len() - offset));
        }

        let vocabulary = Vocabulary::from_tokens(header.vocabulary, header.vocab_min_count)?;
        if vocabulary.content_hash() != header.vocab_hash {
            return Err(Error::Inconsistent("stored vocabulary does not match its hash".into()));
        }
        let weights = ModelWeights {
            config: header.config,
            vocab_hash: header.vocab_hash,
            label_order: header.label_order,
            vocabulary,
            tensors,
        };
        weights.validate()?;
        Ok(weights)
    }

    /// Tensor names, order and shapes must match what the stored config builds.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = ModelParams::<f32>::zeros(&self.config);
        let expected = expected.named();
        let mut problems = Vec::new();
        if self.tensors.len() != expected.len() {
            problems.push(format!("{} tensors, expected {}", self.tensors.len(), expected.len()));
        }
        for ((name, t), (ename, et)) in self.tensors.iter().zip(&expected) {
            if name != ename {
                problems.push(format!("tensor {name} where {ename} expected"));
            } else if t.shape() != et.shape() {
                problems.push(format!("{name}: shape {:?}, expected {:?}", t.shape(), et.shape()));
            }
        }
        if self.vocabulary.len() != self.config.vocab_size {
            problems.push(format!(
                "vocabulary has {} entries, config says {}",
                self.vocabulary.len(),
                self.config.vocab_size
            ));
        }
        if self.label_order != self.config.head.label_order() {
            problems.push(format!("label order {:?} does not match head", self.label_order));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Inconsistent(problems.join("; ")))
        }
    }

    pub fn params(&self) -> Result<ModelParams<f32>> {
        self.validate()?;
        let mut params = ModelParams::<f32>::zeros(&self.config);
        for (dst, (_, src)) in params.tensors_mut().into_iter().zip(&self.tensors) {
            *dst = src.clone();
        }
        Ok(params)
    }

    /// Rebuilds the model, refusing a vocabulary whose hash differs.
    pub fn to_model(&self, vocab: &Vocabulary) -> Result<Model<f32>> {
        check_vocab(&self.vocab_hash, &vocab.content_hash())?;
        Model::from_params(self.config.clone(), self.params()?)
    }
}

fn check_vocab(weights: &str, vocab: &str) -> Result<()> {
    if weights != vocab {
        return Err(Error::VocabMismatch {
            weights: weights.to_string(),
            vocab: vocab.to_string(),
        });
    }
    Ok(())
}

pub fn save_weights(model: &Model<f32>, vocab: &Vocabulary, path: &Path) -> Result<()> {
    let bytes = ModelWeights::from_model(model, vocab)?.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelWeights::from_bytes(&bytes)
}

/// Pre-trained word vectors keyed by word.
#[derive(Clone, Debug, PartialEq)]
pub struct GloveVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f32>>,
}

impl GloveVectors {
    /// Reads the space-separated text format; every line must carry exactly `dim` values.
    pub fn read(path: &Path, dim: usize) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), path, dim)
    }

    pub fn from_reader<R: BufRead>(reader: R, path: &Path, dim: usize) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut first = true;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let word = fields.next().expect("nonblank line has a field");
            let values = fields
                .map(|f| f.parse::<f32>())
                .collect::<std::result::Result<Vec<f32>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("bad value for {word:?}: {e}"),
                })?;
            let was_first = std::mem::replace(&mut first, false);
            if values.len() != dim {
                // The first vector fixes the file's dimension; later deviations are malformed lines.
                if was_first && !values.is_empty() {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: values.len(),
                    });
                }
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("{} values for {word:?}, expected {dim}", values.len()),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("non-finite value for {word:?}"),
                });
            }
            vectors.entry(word.to_string()).or_insert(values);
        }
        Ok(GloveVectors { dim, vectors })
    }

    /// `V × dim` table: known words copy their vector, PAD is zero, everything
    /// else draws `N(0, 0.1)` in index order. Returns the table and the covered
    /// fraction of non-reserved words.
    pub fn embedding_for(&self, vocab: &Vocabulary, rng: &mut Rng) -> (Tensor<f32>, f64) {
        let d = self.dim;
        let mut table = Tensor::<f32>::zeros(&[vocab.len(), d]);
        let mut covered = 0usize;
        for (i, token) in vocab.tokens().iter().enumerate() {
            if i == PAD {
                continue;
            }
            let known = if i > crate::text::UNK { self.vectors.get(token) } else { None };
            match known {
                Some(v) => {
                    table.row_mut(i).copy_from_slice(v);
                    covered += 1;
                }
                None => {
                    for x in table.row_mut(i) {
                        *x = rng.normal(0.0, INIT_STD) as f32;
                    }
                }
            }
        }
        let words = vocab.len().saturating_sub(2);
        let coverage = if words == 0 { 0.0 } else { covered as f64 / words as f64 };
        (table, coverage)
    }
}

pub fn load_glove(path: &Path, vocab: &Vocabulary, dim: usize, rng: &mut Rng) -> Result<(Tensor<f32>, f64)> {
    let glove = GloveVectors::read(path, dim)?;
    let (table, coverage) = glove.embedding_for(vocab, rng);
    info!("GloVe coverage {:.1}% of {} words", 100.0 * coverage, vocab.len().saturating_sub(2));
    Ok((table, coverage))
}

/// Fresh model whose embedding is `glove`; every other tensor is seeded as in [`build_model`].
pub fn transfer_embeddings(config: ModelConfig, glove: &Tensor<f32>, rng: &mut Rng) -> Result<Model<f32>> {
    if glove.cols() != config.embedding_dim {
        return Err(Error::DimensionMismatch {
            expected: config.embedding_dim,
            found: glove.cols(),
        });
    }
    if glove.shape() != [config.vocab_size, config.embedding_dim] {
        return Err(Error::Shape(format!(
            "embedding {:?} for vocabulary of {}",
            glove.shape(),
            config.vocab_size
        )));
    }
    let mut model = build_model::<f32>(config, rng)?;
    model.params.embedding = glove.clone();
    Ok(model)
}

/// Copies `embedding`, `gru.*` and `attn.*` from a binary-head source and
/// attaches a freshly initialized four-way head.
pub fn transfer_full(source: &ModelWeights, target: &ModelConfig, vocab_hash: &str, rng: &mut Rng) -> Result<Model<f32>> {
    target.validate()?;
    check_vocab(&source.vocab_hash, vocab_hash)?;
    let mut problems = Vec::new();
    if source.config.head != Head::Binary {
        problems.push(format!("source head is {:?}, expected Binary", source.config.head));
    }
    if target.head != Head::FourClass {
        problems.push(format!("target head is {:?}, expected FourClass", target.head));
    }
    let mut model = build_head_only(target.clone(), rng)?;
    let names = ModelParams::<f32>::names();
    for (name, dst) in names.iter().zip(model.params.tensors_mut()) {
        if name.starts_with("head.") {
            continue;
        }
        match source.tensor(name) {
            None => problems.push(format!("{name}: missing from source")),
            Some(src) if src.shape() != dst.shape() => {
                problems.push(format!("{name}: source shape {:?}, target {:?}", src.shape(), dst.shape()))
            }
            Some(src) => *dst = src.clone(),
        }
    }
    if problems.is_empty() {
        Ok(model)
    } else {
        Err(Error::ArchitectureMismatch(problems))
    }
}

/// Result of training the binary source model.
#[derive(Clone, Debug)]
pub struct SourceRun {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub history: TrainHistory,
}

/// Builds the vocabulary, holds out a stratified validation split, and trains
/// a binary-head model on a polarity corpus. With `glove`, the embedding
/// starts from the pre-trained vectors.
pub fn train_source(
    docs: &[Document],
    glove: Option<&GloveVectors>,
    template: &ModelConfig,
    min_count: usize,
    val_fraction: f64,
) -> Result<SourceRun> {
    let vocab = build_vocabulary(docs, min_count)?;
    let mut cfg = template.clone();
    cfg.vocab_size = vocab.len();
    cfg.head = Head::Binary;
    let all = prepare_samples(docs, &vocab, cfg.max_len, Head::Binary)?;
    let labels: Vec<usize> = all.iter().map(|s| s.class).collect();
    let idx: Vec<usize> = (0..all.len()).collect();
    let mut rng = Rng::seed_from(cfg.seed);
    let (train_idx, val_idx) = stratified_holdout(&idx, &labels, val_fraction, &mut rng)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
    let (train_set, val_set) = (pick(&train_idx), pick(&val_idx));
    let mut init_rng = rng.fork();
    let model = match glove {
        Some(g) => {
            let (table, coverage) = g.embedding_for(&vocab, &mut init_rng);
            info!("GloVe coverage {:.1}% of {} words", 100.0 * coverage, vocab.len().saturating_sub(2));
            transfer_embeddings(cfg, &table, &mut init_rng)?
        }
        None => build_model(cfg, &mut init_rng)?,
    };
    let (model, history) = train(model, &train_set, &val_set)?;
    Ok(SourceRun { model, vocab, history })
}

/// Target-shaped model with only the head drawn from `rng`; the body is zero
/// until overwritten.
fn build_head_only(config: ModelConfig, rng: &mut Rng) -> Result<Model<f32>> {
    let mut params = ModelParams::<f32>::zeros(&config);
    params.head_w = Tensor::glorot(config.head.width(), config.context_dim(), rng);
    Model::from_params(config, params)
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;
    use crate::text::{build_vocabulary, Document};

    fn vocab() -> Vocabulary {
        let docs = vec![Document::new("1", "good day good"), Document::new("2", "bad day")];
        build_vocabulary(&docs, 1).unwrap()
    }

    fn source(vocab: &Vocabulary, seed: u64) -> Model<f32> {
        let cfg = ModelConfig {
            embedding_dim: 4,
            gru_units: 3,
            ..ModelConfig::new(vocab.len(), Head::Binary)
        };
        build_model(cfg, &mut Rng::seed_from(seed)).unwrap()
    }

    fn target_config(source: &ModelConfig) -> ModelConfig {
        ModelConfig {
            head: Head::FourClass,
            ..source.clone()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let v = vocab();
        let m = source(&v, 1);
        let w = ModelWeights::from_model(&m, &v).unwrap();
        let back = ModelWeights::from_bytes(&w.to_bytes().unwrap()).unwrap();
        assert_eq!(back.tensors.len(), w.tensors.len());
        for ((n1, a), (n2, b)) in w.tensors.iter().zip(&back.tensors) {
            assert_eq!(n1, n2);
            assert!(a.bit_eq(b), "{n1}");
        }
        assert_eq!(back.to_model(&v).unwrap(), m);
    }

    #[test]
    fn container_errors_are_distinct() {
        let v = vocab();
        let bytes = ModelWeights::from_model(&source(&v, 1), &v).unwrap().to_bytes().unwrap();
        assert!(matches!(ModelWeights::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));
        assert!(matches!(ModelWeights::from_bytes(&bytes[..20]), Err(Error::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(ModelWeights::from_bytes(&extra), Err(Error::TrailingBytes(1))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ModelWeights::from_bytes(&bad), Err(Error::BadMagic)));
        let mut old = bytes.clone();
        old[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            ModelWeights::from_bytes(&old),
            Err(Error::VersionMismatch { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn renamed_tensor_is_inconsistent() {
        let v = vocab();
        let mut w = ModelWeights::from_model(&source(&v, 1), &v).unwrap();
        w.tensors[3].0 = "gru.fwd.bogus".into();
        assert!(matches!(ModelWeights::from_bytes(&w.to_bytes().unwrap()), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn vocab_hash_mismatch_is_refused() {
        let v = vocab();
        let w = ModelWeights::from_model(&source(&v, 1), &v).unwrap();
        let other = build_vocabulary(&[Document::new("x", "good day good"), Document::new("y", "sad day")], 1).unwrap();
        assert_eq!(other.len(), v.len());
        assert!(matches!(w.to_model(&other), Err(Error::VocabMismatch { .. })));
    }

    #[test]
    fn glove_examples() {
        let v = vocab();
        let a = v.get("good").unwrap();
        let text = "good 1.0 2.0\nunused 3.0 4.0\n";
        let g = GloveVectors::from_reader(Cursor::new(text), Path::new("g.txt"), 2).unwrap();
        let (t1, cov) = g.embedding_for(&v, &mut Rng::seed_from(3));
        assert_eq!(t1.row(a), &[1.0, 2.0]);
        assert_eq!(t1.row(PAD), &[0.0, 0.0]);
        assert!((cov - 1.0 / 3.0).abs() < 1e-12);
        let (t2, _) = g.embedding_for(&v, &mut Rng::seed_from(3));
        assert!(t1.bit_eq(&t2));
        let bad = v.get("bad").unwrap();
        assert!(t1.row(bad).iter().all(|x| *x != 0.0));
    }

    #[test]
    fn glove_errors() {
        let p = Path::new("g.txt");
        assert!(matches!(
            GloveVectors::from_reader(Cursor::new("a 1 2 3\n"), p, 2),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(matches!(
            GloveVectors::from_reader(Cursor::new("a 1 2\nb 1 x\n"), p, 2),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            GloveVectors::from_reader(Cursor::new("a 1 2\nb 1\n"), p, 2),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn embedding_transfer_keeps_glove_and_rng_stream() {
        let v = vocab();
        let cfg = ModelConfig {
            embedding_dim: 2,
            gru_units: 3,
            ..ModelConfig::new(v.len(), Head::FourClass)
        };
        let glove = Tensor::<f32>::normal(&[v.len(), 2], 1.0, &mut Rng::seed_from(0));
        let m = transfer_embeddings(cfg.clone(), &glove, &mut Rng::seed_from(5)).unwrap();
        assert!(m.params.embedding.bit_eq(&glove));
        let r = build_model::<f32>(cfg.clone(), &mut Rng::seed_from(5)).unwrap();
        assert!(m.params.gru.fwd.u_r.bit_eq(&r.params.gru.fwd.u_r));
        let wrong = Tensor::<f32>::zeros(&[v.len(), 3]);
        assert!(matches!(
            transfer_embeddings(cfg, &wrong, &mut Rng::seed_from(5)),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn full_transfer_copies_body_only() {
        let v = vocab();
        let src = source(&v, 2);
        let w = ModelWeights::from_model(&src, &v).unwrap();
        let target = target_config(&src.config);
        let m = transfer_full(&w, &target, &v.content_hash(), &mut Rng::seed_from(9)).unwrap();
        for ((name, a), (_, b)) in m.params.named().into_iter().zip(src.params.named()) {
            if name.starts_with("head.") {
                continue;
            }
            assert!(a.bit_eq(b), "{name}");
        }
        assert_eq!(m.params.head_w.shape(), &[4, 6]);
        assert_eq!(m.params.head_b.shape(), &[4]);
        assert_eq!(src.params.head_w.shape(), &[1, 6]);

        // Source head values do not leak into the transferred model.
        let mut w2 = w.clone();
        for (n, t) in &mut w2.tensors {
            if n.starts_with("head.") {
                t.data_mut().iter_mut().for_each(|x| *x += 1.0);
            }
        }
        let m2 = transfer_full(&w2, &target, &v.content_hash(), &mut Rng::seed_from(9)).unwrap();
        assert_eq!(m, m2);

        // Serialization is transparent.
        let w3 = ModelWeights::from_bytes(&w.to_bytes().unwrap()).unwrap();
        let m3 = transfer_full(&w3, &target, &v.content_hash(), &mut Rng::seed_from(9)).unwrap();
        assert_eq!(m, m3);
    }

    #[test]
    fn full_transfer_lists_every_mismatch() {
        let v = vocab();
        let src = source(&v, 2);
        let w = ModelWeights::from_model(&src, &v).unwrap();
        let target = ModelConfig {
            gru_units: 5,
            ..target_config(&src.config)
        };
        match transfer_full(&w, &target, &v.content_hash(), &mut Rng::seed_from(0)) {
            Err(Error::ArchitectureMismatch(list)) => assert_eq!(list.len(), 2 * 9 + 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            transfer_full(&w, &target_config(&src.config), "deadbeef", &mut Rng::seed_from(0)),
            Err(Error::VocabMismatch { .. })
        ));
    }
}
