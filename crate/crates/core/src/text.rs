//! Text normalization, tokenization, vocabulary construction and corpus I/O.
//!
//! Everything here is a pure function over its inputs. The normalization rules
//! are: lowercase, drop hyperlinks (`http://…`, `https://…`, `www.…`), drop
//! `@mentions`, strip punctuation (Unicode `P*` plus the ASCII symbols
//! `$^+=|~`) without inserting a space, then collapse whitespace.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Index of the padding token.
pub const PAD: usize = 0;
/// Index of the out-of-vocabulary token.
pub const UNK: usize = 1;

// Bracketed names cannot survive `preprocess`, so they never collide with corpus tokens.
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

pub const DEFAULT_MAX_LEN: usize = 64;

/// Four-way emotional valence. The discriminant order is part of every
/// serialized artifact (weights, CSV column order).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValenceLabel {
    Positive = 0,
    Negative = 1,
    Both = 2,
    Neither = 3,
}

impl ValenceLabel {
    pub const ALL: [ValenceLabel; 4] = [
        ValenceLabel::Positive,
        ValenceLabel::Negative,
        ValenceLabel::Both,
        ValenceLabel::Neither,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValenceLabel::Positive => "positive",
            ValenceLabel::Negative => "negative",
            ValenceLabel::Both => "both",
            ValenceLabel::Neither => "neither",
        }
    }

    /// Display name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            ValenceLabel::Positive => "Positive",
            ValenceLabel::Negative => "Negative",
            ValenceLabel::Both => "Both",
            ValenceLabel::Neither => "Neither",
        }
    }
}

impl fmt::Display for ValenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValenceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(ValenceLabel::Positive),
            "negative" => Ok(ValenceLabel::Negative),
            "both" => Ok(ValenceLabel::Both),
            "neither" => Ok(ValenceLabel::Neither),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Binary source-task polarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityLabel {
    Negative = 0,
    Positive = 1,
}

impl PolarityLabel {
    pub const ALL: [PolarityLabel; 2] = [PolarityLabel::Negative, PolarityLabel::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(PolarityLabel::Negative),
            1 => Some(PolarityLabel::Positive),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolarityLabel::Negative => "negative",
            PolarityLabel::Positive => "positive",
        }
    }
}

impl FromStr for PolarityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(PolarityLabel::Negative),
            "positive" => Ok(PolarityLabel::Positive),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Supervision attached to a [`Document`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Label {
    Valence(ValenceLabel),
    Polarity(PolarityLabel),
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Valence(v) => v.as_str(),
            Label::Polarity(p) => p.as_str(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub label: Option<Label>,
    pub annotator_labels: Option<Vec<ValenceLabel>>,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            raw_text: raw_text.into(),
            label: None,
            annotator_labels: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    /// Tokens of the normalized text.
    pub fn tokens(&self) -> Vec<String> {
        tokenize(&preprocess(&self.raw_text))
    }

    pub fn valence(&self) -> Option<ValenceLabel> {
        match self.label {
            Some(Label::Valence(v)) => Some(v),
            _ => None,
        }
    }
}

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:https?://|www\.)\S*").expect("url regex"));
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").expect("mention regex"));
static PUNCT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{P}$^+=|~]").expect("punctuation regex"));

pub fn preprocess(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let no_urls = URL_RE.replace_all(&lowered, " ");
    let no_mentions = MENTION_RE.replace_all(&no_urls, " ");
    let stripped = PUNCT_RE.replace_all(&no_mentions, "");
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True for characters removed by the punctuation rule.
pub fn is_stripped_punctuation(c: char) -> bool {
    let mut buf = [0u8; 4];
    PUNCT_RE.is_match(c.encode_utf8(&mut buf))
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Token to index map with `[PAD]` at 0 and `[UNK]` at 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its tokens in index order, reserved slots first.
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Inconsistent(
                "vocabulary must start with [PAD], [UNK]".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Inconsistent(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            min_count,
        })
    }

    fn reserved_only(min_count: usize) -> Self {
        Self::from_tokens(vec![PAD_TOKEN.into(), UNK_TOKEN.into()], min_count)
            .expect("reserved tokens are valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        // The reserved slots are always present.
        false
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// Index for `token`, or `None` if it is not stored.
    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Words in index order, skipping the reserved slots.
    pub fn words(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (i, t.as_str()))
    }

    /// SHA-256 over the tokens in index order, newline separated, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

pub fn build_vocabulary(corpus: &[Document], min_count: usize) -> Result<Vocabulary> {
    build_vocabulary_from_tokens(corpus.iter().map(Document::tokens), min_count)
}

/// Builds a vocabulary from already tokenized documents. Tokens are ordered by
/// descending frequency, ties broken lexicographically.
pub fn build_vocabulary_from_tokens<I, D, S>(docs: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = D>,
    D: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in docs {
        for tok in doc {
            let tok = tok.as_ref();
            if tok.is_empty() || tok == PAD_TOKEN || tok == UNK_TOKEN {
                continue;
            }
            *counts.entry(tok.to_owned()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut vocab = Vocabulary::reserved_only(min_count);
    for (tok, _) in kept {
        let i = vocab.tokens.len();
        vocab.index.insert(tok.clone(), i);
        vocab.tokens.push(tok);
    }
    Ok(vocab)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSequence {
    pub indices: Vec<usize>,
    pub mask: Vec<u8>,
    pub true_length: usize,
}

impl EncodedSequence {
    pub fn max_len(&self) -> usize {
        self.indices.len()
    }

    /// Indices of the real tokens.
    pub fn real(&self) -> &[usize] {
        &self.indices[..self.true_length]
    }
}

pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> Result<EncodedSequence> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let true_length = tokens.len().min(max_len);
    let mut indices = vec![PAD; max_len];
    let mut mask = vec![0u8; max_len];
    for (i, tok) in tokens.iter().take(max_len).enumerate() {
        indices[i] = vocab.index_of(tok.as_ref());
        mask[i] = 1;
    }
    Ok(EncodedSequence {
        indices,
        mask,
        true_length,
    })
}

/// Maps every index back to its token, reserved slots included.
pub fn decode(seq: &EncodedSequence, vocab: &Vocabulary) -> Vec<String> {
    seq.real()
        .iter()
        .map(|&i| vocab.token(i).unwrap_or(UNK_TOKEN).to_owned())
        .collect()
}

/// Number of documents per word-count bin, keyed by bin start.
pub fn word_count_histogram(corpus: &[Document], bin_width: usize) -> Result<BTreeMap<usize, usize>> {
    if bin_width == 0 {
        return Err(Error::InvalidArgument("bin_width must be at least 1".into()));
    }
    let mut hist = BTreeMap::new();
    for doc in corpus {
        let n = tokenize(&preprocess(&doc.raw_text)).len();
        *hist.entry(n / bin_width * bin_width).or_default() += 1;
    }
    Ok(hist)
}

pub fn write_histogram_csv<W: Write>(hist: &BTreeMap<usize, usize>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_start", "count"])?;
    for (bin, count) in hist {
        w.write_record([bin.to_string(), count.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<histogram>", e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Sentiment140Csv,
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentiment140-csv" | "csv" => Ok(CorpusFormat::Sentiment140Csv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown corpus format {other:?}"))),
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Document>> {
    match format {
        CorpusFormat::Sentiment140Csv => load_sentiment140(path),
        CorpusFormat::Jsonl => load_jsonl(path),
    }
}

fn decode_field(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_owned(),
        // Latin-1 maps each byte to the code point of the same value.
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

/// Reads the six-field Sentiment140 layout: polarity, id, date, query, user, text.
pub fn load_sentiment140(path: &Path) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sentiment140(file, path)
}

pub fn read_sentiment140<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<Document>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    let mut record = csv::ByteRecord::new();
    loop {
        let line = rdr.position().line() as usize;
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    message: e.to_string(),
                })
            }
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(line);
        if record.len() != 6 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                message: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let code = decode_field(&record[0]);
        let label = match code.trim() {
            "0" => PolarityLabel::Negative,
            "4" => PolarityLabel::Positive,
            _ => return Err(Error::UnknownPolarity { code, line }),
        };
        let mut id = decode_field(&record[1]);
        if id.is_empty() || !seen.insert(id.clone()) {
            id = format!("{id}#{line}");
            seen.insert(id.clone());
        }
        docs.push(Document {
            id,
            raw_text: decode_field(&record[5]),
            label: Some(Label::Polarity(label)),
            annotator_labels: None,
        });
    }
    Ok(docs)
}

/// Writes polarity-labelled documents as six-field Sentiment140 rows.
pub fn write_sentiment140<W: Write>(docs: &[Document], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Always)
        .from_writer(out);
    for doc in docs {
        let code = match doc.label {
            Some(Label::Polarity(PolarityLabel::Negative)) => "0",
            Some(Label::Polarity(PolarityLabel::Positive)) => "4",
            _ => return Err(Error::LabelMismatch(format!("document {} has no polarity label", doc.id))),
        };
        w.write_record([code, &doc.id, "", "NO_QUERY", "", &doc.raw_text])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonDocument {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    /// Binary source-task label; exclusive with `label`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polarity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotator_labels: Option<Vec<String>>,
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), path)
}

pub fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Document>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let raw: JsonDocument =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if raw.id.is_empty() {
            return Err(parse_err(lineno, "empty id".into()));
        }
        if !seen.insert(raw.id.clone()) {
            return Err(parse_err(lineno, format!("duplicate id {:?}", raw.id)));
        }
        let label = match (raw.label.as_deref(), raw.polarity.as_deref()) {
            (Some(_), Some(_)) => return Err(parse_err(lineno, "both label and polarity given".into())),
            (Some(v), None) => Some(v.parse::<ValenceLabel>().map(Label::Valence)),
            (None, Some(p)) => Some(p.parse::<PolarityLabel>().map(Label::Polarity)),
            (None, None) => None,
        }
        .transpose()
        .map_err(|e| parse_err(lineno, e.to_string()))?;
        let annotator_labels = raw
            .annotator_labels
            .map(|v| v.iter().map(|s| s.parse::<ValenceLabel>()).collect::<Result<Vec<_>>>())
            .transpose()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        docs.push(Document {
            id: raw.id,
            raw_text: raw.text,
            label,
            annotator_labels,
        });
    }
    Ok(docs)
}

/// Writes documents in the JSONL corpus layout, the inverse of [`read_jsonl`].
pub fn write_jsonl<W: Write>(docs: &[Document], mut out: W) -> Result<()> {
    for doc in docs {
        let raw = JsonDocument {
            id: doc.id.clone(),
            text: doc.raw_text.clone(),
            label: match doc.label {
                Some(Label::Valence(v)) => Some(v.as_str().to_owned()),
                _ => None,
            },
            polarity: match doc.label {
                Some(Label::Polarity(p)) => Some(p.as_str().to_owned()),
                _ => None,
            },
            annotator_labels: doc
                .annotator_labels
                .as_ref()
                .map(|v| v.iter().map(|l| l.as_str().to_owned()).collect()),
        };
        serde_json::to_writer(&mut out, &raw)?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}
