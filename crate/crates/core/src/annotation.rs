//! Majority-vote label resolution and chance-corrected agreement statistics.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Document, Label, ValenceLabel};

/// Label with a strict plurality of the votes, or `None` when the top count is shared.
pub fn resolve_majority<L: Copy + Eq + Hash>(votes: &[L]) -> Option<L> {
    let mut counts: HashMap<L, usize> = HashMap::new();
    for &v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let top = counts.values().copied().max()?;
    let mut winners = counts.into_iter().filter(|&(_, c)| c == top);
    let (label, _) = winners.next()?;
    match winners.next() {
        Some(_) => None,
        None => Some(label),
    }
}

/// Cohen's kappa for two raters over the same items.
pub fn cohen_kappa<L: Copy + Eq + Hash>(a: &[L], b: &[L]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "rater sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("no items to compare".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let p_o = agree / n;

    let mut marg: HashMap<L, (usize, usize)> = HashMap::new();
    for &x in a {
        marg.entry(x).or_default().0 += 1;
    }
    for &y in b {
        marg.entry(y).or_default().1 += 1;
    }
    // Integer products keep p_e exact up to the final division.
    let cross: usize = marg.values().map(|&(ca, cb)| ca * cb).sum();
    let p_e = cross as f64 / (n * n);
    kappa_from(p_o, p_e, cross == a.len() * a.len())
}

fn kappa_from(observed: f64, expected: f64, expected_is_one: bool) -> Result<f64> {
    if expected_is_one {
        return if observed == 1.0 {
            Ok(1.0)
        } else {
            Err(Error::DegenerateMarginals)
        };
    }
    Ok((observed - expected) / (1.0 - expected))
}

/// Fleiss' kappa over an items × categories matrix of vote counts.
pub fn fleiss_kappa(counts: &[Vec<usize>]) -> Result<f64> {
    let first = counts
        .first()
        .ok_or_else(|| Error::InvalidArgument("no items".into()))?;
    let k = first.len();
    let raters: usize = first.iter().sum();
    if raters < 2 {
        return Err(Error::InvalidArgument("need at least two raters per item".into()));
    }
    for (i, row) in counts.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidArgument(format!("row {i} has {} categories, expected {k}", row.len())));
        }
        let s: usize = row.iter().sum();
        if s != raters {
            return Err(Error::InvalidArgument(format!("row {i} sums to {s}, expected {raters}")));
        }
    }
    let items = counts.len();
    let n = raters as f64;

    let p_bar = counts
        .iter()
        .map(|row| {
            let sq: usize = row.iter().map(|&c| c * c).sum();
            (sq - raters) as f64 / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items as f64;

    let total = (items * raters) as f64;
    let mut col_totals = vec![0usize; k];
    for row in counts {
        for (j, &c) in row.iter().enumerate() {
            col_totals[j] += c;
        }
    }
    let p_e: f64 = col_totals.iter().map(|&c| (c as f64 / total).powi(2)).sum();
    let degenerate = col_totals.iter().filter(|&&c| c > 0).count() == 1;
    kappa_from(p_bar, p_e, degenerate)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseKappa {
    pub annotator_a: usize,
    pub annotator_b: usize,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// One entry per unordered annotator pair; lookup is symmetric via [`AgreementReport::cohen`].
    pub pairwise_cohen: Vec<PairwiseKappa>,
    pub fleiss: f64,
    pub n_items: usize,
    pub n_discarded: usize,
    pub label_counts: BTreeMap<String, usize>,
}

impl AgreementReport {
    pub fn cohen(&self, i: usize, j: usize) -> Option<f64> {
        self.pairwise_cohen
            .iter()
            .find(|p| (p.annotator_a, p.annotator_b) == (i, j) || (p.annotator_a, p.annotator_b) == (j, i))
            .map(|p| p.kappa)
    }
}

/// Vote-count matrix over the four valence categories.
pub fn vote_matrix(votes: &[Vec<ValenceLabel>]) -> Vec<Vec<usize>> {
    votes
        .iter()
        .map(|v| {
            let mut row = vec![0usize; ValenceLabel::ALL.len()];
            for l in v {
                row[l.index()] += 1;
            }
            row
        })
        .collect()
}

/// Resolves every document's annotator votes and computes agreement.
///
/// Annotator identity is the position in `annotator_labels`; all documents
/// must carry the same number of votes. Returns the report and the documents
/// that received a majority label (with `label` set).
pub fn resolve_corpus(corpus: &[Document]) -> Result<(AgreementReport, Vec<Document>)> {
    let mut votes = Vec::with_capacity(corpus.len());
    for doc in corpus {
        let v = doc
            .annotator_labels
            .as_ref()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::Missing(format!("document {} has no annotator_labels", doc.id)))?;
        votes.push(v.clone());
    }
    let raters = votes.first().map(Vec::len).unwrap_or(0);
    if raters < 2 {
        return Err(Error::InvalidArgument("agreement needs at least two annotators".into()));
    }
    if let Some(doc) = corpus.iter().zip(&votes).find(|(_, v)| v.len() != raters) {
        return Err(Error::InvalidArgument(format!(
            "document {} has {} votes, expected {raters}",
            doc.0.id,
            doc.1.len()
        )));
    }

    let mut pairwise_cohen = Vec::new();
    for i in 0..raters {
        for j in i + 1..raters {
            let a: Vec<_> = votes.iter().map(|v| v[i]).collect();
            let b: Vec<_> = votes.iter().map(|v| v[j]).collect();
            pairwise_cohen.push(PairwiseKappa {
                annotator_a: i,
                annotator_b: j,
                kappa: cohen_kappa(&a, &b)?,
            });
        }
    }
    let fleiss = fleiss_kappa(&vote_matrix(&votes))?;

    let mut resolved = Vec::new();
    let mut label_counts = BTreeMap::new();
    for (doc, v) in corpus.iter().zip(&votes) {
        if let Some(l) = resolve_majority(v) {
            *label_counts.entry(l.as_str().to_owned()).or_default() += 1;
            let mut d = doc.clone();
            d.label = Some(Label::Valence(l));
            resolved.push(d);
        }
    }
    let report = AgreementReport {
        pairwise_cohen,
        fleiss,
        n_items: corpus.len(),
        n_discarded: corpus.len() - resolved.len(),
        label_counts,
    };
    Ok((report, resolved))
}
