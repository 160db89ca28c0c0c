use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, Prediction};
use crate::neural::Scalar;
use crate::text::EncodedSequence;

/// Rows shown per column by default.
pub const DEFAULT_TOP_N: usize = 13;
/// Masses are reported per ten thousand of the global attention total.
pub const MASS_SCALE: f64 = 1e4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionColumn {
    pub name: String,
    /// Every word with nonzero mass, descending by mass then ascending by word.
    pub ranked: Vec<(String, f64)>,
}

impl AttentionColumn {
    pub fn top(&self, n: usize) -> &[(String, f64)] {
        &self.ranked[..n.min(self.ranked.len())]
    }

    pub fn mass(&self, word: &str) -> f64 {
        self.ranked.iter().find(|(w, _)| w == word).map_or(0.0, |(_, m)| *m)
    }
}

/// An all-classes column followed by one column per predicted class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionReport {
    pub columns: Vec<AttentionColumn>,
}

fn ranked(sums: BTreeMap<&str, f64>, scale: f64) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = sums.into_iter().map(|(w, s)| (w.to_string(), s * scale)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Accumulates each token's α into its word, bucketed by predicted class, and
/// normalizes by the global α total. `tokens[i]` must align with
/// `predictions[i].alphas`.
pub fn attention_report_from_predictions<S: AsRef<str>>(
    tokens: &[Vec<S>],
    predictions: &[Prediction],
    class_names: &[&str],
) -> Result<AttentionReport> {
    if tokens.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if tokens.len() != predictions.len() {
        return Err(Error::Shape(format!("{} token lists, {} predictions", tokens.len(), predictions.len())));
    }
    let mut all: BTreeMap<&str, f64> = BTreeMap::new();
    let mut per_class: Vec<BTreeMap<&str, f64>> = vec![BTreeMap::new(); class_names.len()];
    let mut total = 0.0;
    for (toks, pred) in tokens.iter().zip(predictions) {
        if toks.len() != pred.alphas.len() {
            return Err(Error::Shape(format!("{} tokens, {} attention weights", toks.len(), pred.alphas.len())));
        }
        let bucket = per_class
            .get_mut(pred.predicted_class)
            .ok_or_else(|| Error::InvalidArgument(format!("predicted class {}", pred.predicted_class)))?;
        for (t, &a) in toks.iter().zip(&pred.alphas) {
            *all.entry(t.as_ref()).or_default() += a;
            *bucket.entry(t.as_ref()).or_default() += a;
            total += a;
        }
    }
    if total <= 0.0 {
        return Err(Error::EmptyEvaluation);
    }
    let scale = MASS_SCALE / total;
    let mut columns = vec![AttentionColumn {
        name: "All Classes".into(),
        ranked: ranked(all, scale),
    }];
    for (name, sums) in class_names.iter().zip(per_class) {
        columns.push(AttentionColumn {
            name: name.to_string(),
            ranked: ranked(sums, scale),
        });
    }
    Ok(AttentionReport { columns })
}

/// Runs inference over `dataset` (surface tokens paired with their encoding) and reports attention mass.
pub fn attention_report<T: Scalar, S: AsRef<str> + Sync>(
    model: &Model<T>,
    dataset: &[(Vec<S>, EncodedSequence)],
    class_names: &[&str],
) -> Result<AttentionReport> {
    let mut tokens = Vec::with_capacity(dataset.len());
    let mut preds = Vec::with_capacity(dataset.len());
    for (toks, seq) in dataset {
        let p = model.predict(seq)?;
        tokens.push(&toks[..seq.true_length]);
        preds.push(p);
    }
    let tokens: Vec<Vec<&str>> = tokens.iter().map(|t| t.iter().map(AsRef::as_ref).collect()).collect();
    attention_report_from_predictions(&tokens, &preds, class_names)
}

impl AttentionReport {
    pub fn write_csv<W: Write>(&self, mut out: W, top_n: usize) -> std::io::Result<()> {
        let header: Vec<String> = self
            .columns
            .iter()
            .flat_map(|c| [format!("{} word", c.name), format!("{} mass", c.name)])
            .collect();
        writeln!(out, "rank,{}", header.join(","))?;
        for r in 0..top_n {
            let cells: Vec<String> = self
                .columns
                .iter()
                .flat_map(|c| match c.ranked.get(r) {
                    Some((w, m)) => [w.clone(), format!("{m:.1}")],
                    None => [String::new(), String::new()],
                })
                .collect();
            writeln!(out, "{},{}", r + 1, cells.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(class: usize, alphas: Vec<f64>) -> Prediction {
        Prediction {
            class_probs: vec![0.25; 4],
            predicted_class: class,
            alphas,
        }
    }

    const NAMES: [&str; 4] = ["Positive", "Negative", "Both", "Neither"];

    #[test]
    fn single_word() {
        let r = attention_report_from_predictions(&[vec!["calm"]], &[pred(0, vec![1.0])], &NAMES).unwrap();
        assert_eq!(r.columns[0].mass("calm"), 10000.0);
    }

    #[test]
    fn two_words_two_classes() {
        let r = attention_report_from_predictions(
            &[vec!["calm"], vec!["worried"]],
            &[pred(0, vec![1.0]), pred(1, vec![1.0])],
            &NAMES,
        )
        .unwrap();
        assert_eq!(r.columns[1].mass("calm"), 5000.0);
        assert_eq!(r.columns[1].mass("worried"), 0.0);
        assert_eq!(r.columns[2].mass("worried"), 5000.0);
        assert_eq!(r.columns[0].mass("worried"), 5000.0);
    }

    #[test]
    fn masses_sum_to_scale_and_columns_add_up() {
        let toks = vec![vec!["a", "b", "a"], vec!["b", "c"], vec!["c"]];
        let preds = vec![pred(0, vec![0.2, 0.5, 0.3]), pred(3, vec![0.9, 0.1]), pred(0, vec![1.0])];
        let r = attention_report_from_predictions(&toks, &preds, &NAMES).unwrap();
        let total: f64 = r.columns[0].ranked.iter().map(|(_, m)| m).sum();
        assert!((total - 10000.0).abs() < 1e-3);
        for w in ["a", "b", "c"] {
            let parts: f64 = r.columns[1..].iter().map(|c| c.mass(w)).sum();
            assert!((parts - r.columns[0].mass(w)).abs() < 1e-9);
        }
        assert_eq!(r.columns[0].ranked[0].0, "b");
    }

    #[test]
    fn empty_dataset_errors() {
        let none: Vec<Vec<&str>> = vec![];
        assert!(attention_report_from_predictions(&none, &[], &NAMES).is_err());
    }
}
