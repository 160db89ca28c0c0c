use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use valence_transfer::baseline::LogRegConfig;
use valence_transfer::evaluation::ComparisonConfig;
use valence_transfer::model::{Head, ModelConfig};
use valence_transfer::synthetic::SyntheticConfig;
use valence_transfer::text::CorpusFormat;

/// Everything a run depends on. Read from a TOML file, then overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub format: String,
    pub output: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub glove: Option<PathBuf>,
    pub folds: usize,
    pub val_fraction: f64,
    pub min_count: usize,
    pub bin_width: usize,
    pub top_n: usize,
    pub grad_seeds: u64,
    pub metric_instances: u64,

    pub embedding_dim: usize,
    pub gru_units: usize,
    pub dropout_embed: f64,
    pub dropout_rnn_output: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub max_len: usize,

    pub logreg_lambda: f64,
    pub logreg_max_iter: usize,
    pub logreg_tolerance: f64,

    /// Corpus shape for `synth`; its `glove_dim` is replaced by `embedding_dim`.
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(0, Head::FourClass);
        let lr = LogRegConfig::default();
        RunConfig {
            seed: 0,
            input: None,
            format: "jsonl".into(),
            output: None,
            weights: None,
            glove: None,
            folds: 5,
            val_fraction: 0.1,
            min_count: 1,
            bin_width: 10,
            top_n: valence_transfer::evaluation::DEFAULT_TOP_N,
            grad_seeds: 20,
            metric_instances: 100,
            embedding_dim: m.embedding_dim,
            gru_units: m.gru_units,
            dropout_embed: m.dropout_embed,
            dropout_rnn_output: m.dropout_rnn_output,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            max_epochs: m.max_epochs,
            patience: m.patience,
            max_len: m.max_len,
            logreg_lambda: lr.lambda,
            logreg_max_iter: lr.max_iter,
            logreg_tolerance: lr.tolerance,
            synthetic: SyntheticConfig::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub format: Option<String>,
    pub output: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub glove: Option<PathBuf>,
    pub folds: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("invalid config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.input {
            self.input = Some(v);
        }
        if let Some(v) = o.format {
            self.format = v;
        }
        if let Some(v) = o.output {
            self.output = Some(v);
        }
        if let Some(v) = o.weights {
            self.weights = Some(v);
        }
        if let Some(v) = o.glove {
            self.glove = Some(v);
        }
        if let Some(v) = o.folds {
            self.folds = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus_format()?;
        // The vocabulary size is only known once a corpus is read.
        let mut m = self.model_config(Head::FourClass);
        m.vocab_size = 2;
        m.validate()?;
        if self.folds < 2 {
            bail!("folds must be at least 2, got {}", self.folds);
        }
        if !(0.0..1.0).contains(&self.val_fraction) || self.val_fraction == 0.0 {
            bail!("val_fraction must lie in (0, 1), got {}", self.val_fraction);
        }
        if self.min_count == 0 || self.bin_width == 0 {
            bail!("min_count and bin_width must be positive");
        }
        if !(self.logreg_lambda >= 0.0) || !(self.logreg_tolerance > 0.0) {
            bail!("logreg_lambda must be non-negative and logreg_tolerance positive");
        }
        Ok(())
    }

    pub fn corpus_format(&self) -> Result<CorpusFormat> {
        Ok(self.format.parse::<CorpusFormat>()?)
    }

    pub fn model_config(&self, head: Head) -> ModelConfig {
        ModelConfig {
            vocab_size: 0,
            embedding_dim: self.embedding_dim,
            gru_units: self.gru_units,
            dropout_embed: self.dropout_embed,
            dropout_rnn_output: self.dropout_rnn_output,
            head,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            max_len: self.max_len,
        }
    }

    pub fn comparison_config(&self) -> ComparisonConfig {
        let mut c = ComparisonConfig::new(self.model_config(Head::FourClass));
        c.folds = self.folds;
        c.seed = self.seed;
        c.val_fraction = self.val_fraction;
        c.top_n = self.top_n;
        c.logreg = LogRegConfig {
            lambda: self.logreg_lambda,
            max_iter: self.logreg_max_iter,
            tolerance: self.logreg_tolerance,
        };
        c
    }

    /// First 16 hex digits of the SHA-256 of the effective configuration as
    /// JSON. The output location is excluded: it does not affect file content.
    pub fn hash(&self) -> String {
        let content = RunConfig {
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&content).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    /// Provenance line written at the top of every output file.
    pub fn header(&self) -> String {
        format!("# vt {} config={} seed={}", env!("CARGO_PKG_VERSION"), self.hash(), self.seed)
    }

    pub fn existing(&self, path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        match path {
            None => bail!("no {what} path given (use --{what} or set `{what}` in the config)"),
            Some(p) if !p.exists() => bail!("{what} path does not exist: {}", p.display()),
            Some(p) => Ok(p.clone()),
        }
    }

    pub fn output_path(&self) -> Result<PathBuf> {
        self.output
            .clone()
            .ok_or_else(|| anyhow::anyhow!("no output path given (use --output or set `output` in the config)"))
    }
}
