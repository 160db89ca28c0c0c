//! Seeded synthetic corpora with a known signal vocabulary.
//!
//! A set of positive and negative signal tokens is embedded in noise text.
//! Source documents are binary-labelled by the polarity of their signal
//! tokens; target documents are valence-labelled by which polarities appear.
//! The accompanying word vectors cluster signal tokens by polarity.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::neural::Rng;
use crate::text::{Document, Label, PolarityLabel, ValenceLabel};
use crate::transfer::GloveVectors;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_source: usize,
    pub n_target: usize,
    /// Tokens per polarity.
    pub n_signal: usize,
    pub n_noise: usize,
    /// Target class counts in [`ValenceLabel::ALL`] order; rescaled to `n_target`.
    pub target_skew: [usize; 4],
    pub noise_len: (usize, usize),
    /// Chance that a source document also carries one opposite-polarity token.
    pub source_confusion: f64,
    pub glove_dim: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_source: 5000,
            n_target: 300,
            n_signal: 20,
            n_noise: 2000,
            target_skew: [12, 60, 14, 14],
            noise_len: (6, 20),
            source_confusion: 0.1,
            glove_dim: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub source: Vec<Document>,
    pub target: Vec<Document>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub glove: GloveVectors,
}

impl SyntheticData {
    pub fn is_signal(&self, word: &str) -> bool {
        self.positive.iter().chain(&self.negative).any(|w| w == word)
    }
}

fn noise_word(i: usize) -> String {
    format!("w{i:04}")
}

fn pick<'a>(words: &'a [String], rng: &mut Rng) -> &'a str {
    &words[rng.below(words.len())]
}

fn compose(rng: &mut Rng, cfg: &SyntheticConfig, noise: &[String], signal: Vec<&str>) -> String {
    let (lo, hi) = cfg.noise_len;
    let n = lo + rng.below(hi - lo + 1);
    let mut words: Vec<&str> = (0..n).map(|_| pick(noise, rng)).collect();
    for s in signal {
        let at = rng.below(words.len() + 1);
        words.insert(at, s);
    }
    words.join(" ")
}

/// Class counts for `n` documents following `skew`, largest remainders first.
pub fn skewed_counts(skew: [usize; 4], n: usize) -> [usize; 4] {
    let total: usize = skew.iter().sum();
    let mut counts = [0; 4];
    let mut rem: Vec<(usize, usize)> = Vec::new();
    for (c, &s) in skew.iter().enumerate() {
        counts[c] = s * n / total;
        rem.push(((s * n) % total, c));
    }
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = n - counts.iter().sum::<usize>();
    for (_, c) in rem {
        if left == 0 {
            break;
        }
        counts[c] += 1;
        left -= 1;
    }
    counts
}

pub fn generate(cfg: &SyntheticConfig, seed: u64) -> SyntheticData {
    let mut rng = Rng::seed_from(seed);
    let positive: Vec<String> = (0..cfg.n_signal).map(|i| format!("sp{i:02}")).collect();
    let negative: Vec<String> = (0..cfg.n_signal).map(|i| format!("sn{i:02}")).collect();
    let noise: Vec<String> = (0..cfg.n_noise).map(noise_word).collect();

    let mut src_rng = rng.fork();
    let source = (0..cfg.n_source)
        .map(|i| {
            let pos = src_rng.bernoulli(0.5);
            let (own, other) = if pos { (&positive, &negative) } else { (&negative, &positive) };
            let mut signal: Vec<&str> = (0..1 + src_rng.below(3)).map(|_| pick(own, &mut src_rng)).collect();
            if src_rng.bernoulli(cfg.source_confusion) {
                signal.push(pick(other, &mut src_rng));
            }
            let polarity = if pos { PolarityLabel::Positive } else { PolarityLabel::Negative };
            Document::new(format!("s{i:05}"), compose(&mut src_rng, cfg, &noise, signal)).with_label(Label::Polarity(polarity))
        })
        .collect();

    let mut tgt_rng = rng.fork();
    let counts = skewed_counts(cfg.target_skew, cfg.n_target);
    let mut labels: Vec<ValenceLabel> = ValenceLabel::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&l, n)| std::iter::repeat_n(l, n))
        .collect();
    tgt_rng.shuffle(&mut labels);
    let target = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut signal = Vec::new();
            let draw = |words: &[String], rng: &mut Rng, signal: &mut Vec<String>| {
                for _ in 0..1 + rng.below(2) {
                    signal.push(pick(words, rng).to_string());
                }
            };
            match label {
                ValenceLabel::Positive => draw(&positive, &mut tgt_rng, &mut signal),
                ValenceLabel::Negative => draw(&negative, &mut tgt_rng, &mut signal),
                ValenceLabel::Both => {
                    signal.push(pick(&positive, &mut tgt_rng).to_string());
                    signal.push(pick(&negative, &mut tgt_rng).to_string());
                }
                ValenceLabel::Neither => {}
            }
            let signal = signal.iter().map(String::as_str).collect();
            Document::new(format!("t{i:04}"), compose(&mut tgt_rng, cfg, &noise, signal)).with_label(Label::Valence(label))
        })
        .collect();

    let glove = synthetic_glove(cfg.glove_dim, &positive, &negative, &noise, &mut rng.fork());
    SyntheticData {
        source,
        target,
        positive,
        negative,
        glove,
    }
}

/// Signal words sit around `±centroid`, noise words around the origin.
fn synthetic_glove(dim: usize, positive: &[String], negative: &[String], noise: &[String], rng: &mut Rng) -> GloveVectors {
    const SPREAD: f64 = 0.1;
    let raw: Vec<f64> = (0..dim).map(|_| rng.normal(0.0, 1.0)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let centroid: Vec<f64> = raw.iter().map(|x| x / norm).collect();
    let mut vectors = HashMap::new();
    let mut add = |words: &[String], sign: f64, rng: &mut Rng| {
        for w in words {
            let v = centroid.iter().map(|&c| (sign * c + rng.normal(0.0, SPREAD)) as f32).collect();
            vectors.insert(w.clone(), v);
        }
    };
    add(positive, 1.0, rng);
    add(negative, -1.0, rng);
    add(noise, 0.0, rng);
    GloveVectors { dim, vectors }
}

/// Writes vectors in the whitespace text format, words sorted.
pub fn write_glove<W: Write>(glove: &GloveVectors, mut out: W) -> Result<()> {
    let mut words: Vec<&String> = glove.vectors.keys().collect();
    words.sort();
    for w in words {
        let vals: Vec<String> = glove.vectors[w].iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{w} {}", vals.join(" ")).map_err(|e| crate::Error::io("<glove>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_source: 200,
            n_target: 50,
            n_noise: 100,
            glove_dim: 8,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn skew_counts() {
        assert_eq!(skewed_counts([12, 60, 14, 14], 300), [36, 180, 42, 42]);
        assert_eq!(skewed_counts([12, 60, 14, 14], 50).iter().sum::<usize>(), 50);
    }

    #[test]
    fn labels_follow_signal_tokens() {
        let d = generate(&small(), 4);
        for doc in &d.target {
            let toks = doc.tokens();
            let has_pos = toks.iter().any(|t| d.positive.contains(t));
            let has_neg = toks.iter().any(|t| d.negative.contains(t));
            let expected = match (has_pos, has_neg) {
                (true, false) => ValenceLabel::Positive,
                (false, true) => ValenceLabel::Negative,
                (true, true) => ValenceLabel::Both,
                (false, false) => ValenceLabel::Neither,
            };
            assert_eq!(doc.valence(), Some(expected));
        }
        assert_eq!(d.source.len(), 200);
    }

    #[test]
    fn deterministic_and_glove_round_trips() {
        let a = generate(&small(), 9);
        assert_eq!(a, generate(&small(), 9));
        let mut buf = Vec::new();
        write_glove(&a.glove, &mut buf).unwrap();
        let back = GloveVectors::from_reader(buf.as_slice(), Path::new("g"), 8).unwrap();
        assert_eq!(back.vectors.len(), a.glove.vectors.len());
        assert_eq!(back.vectors["sp00"], a.glove.vectors["sp00"]);
    }
}
