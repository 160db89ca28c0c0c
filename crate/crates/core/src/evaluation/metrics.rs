//! Confusion matrices, per-class precision/recall/F1, and rank-based AUROC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C × C` counts, rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_pairs(n_classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} true labels, {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n_classes || predicted >= self.n_classes {
            return Err(Error::InvalidArgument(format!(
                "class ({truth}, {predicted}) outside 0..{}",
                self.n_classes
            )));
        }
        self.counts[truth * self.n_classes + predicted] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    /// Number of samples whose true class is `c`.
    pub fn support(&self, c: usize) -> usize {
        (0..self.n_classes).map(|p| self.get(c, p)).sum()
    }

    pub fn predicted_count(&self, c: usize) -> usize {
        (0..self.n_classes).map(|t| self.get(t, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        self.counts.chunks(self.n_classes).map(<[usize]>::to_vec).collect()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// One-vs-rest AUROC; `None` when the class is absent or universal.
    pub auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    /// One-vs-rest ROC points `(fpr, tpr)` per class.
    pub roc: Vec<Vec<(f64, f64)>>,
    pub confusion: ConfusionMatrix,
}

/// Precision, recall and F1 per class from a confusion matrix; zero denominators give 0.
pub fn class_scores(cm: &ConfusionMatrix) -> Vec<(f64, f64, f64)> {
    (0..cm.n_classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let p = ratio(tp, cm.predicted_count(c));
            let r = ratio(tp, cm.support(c));
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f1)
        })
        .collect()
}

pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let scores = class_scores(cm);
    scores.iter().map(|s| s.2).sum::<f64>() / scores.len() as f64
}

/// Full report. `scores[i][c]` is the model's score for class `c` on sample `i`.
pub fn compute_metrics(cm: &ConfusionMatrix, scores: &[Vec<f64>], labels: &[usize]) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let k = cm.n_classes();
    if scores.len() != labels.len() || scores.iter().any(|s| s.len() != k) {
        return Err(Error::Shape(format!(
            "{} score rows (width {k} expected), {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let class = class_scores(cm);
    let mut per_class = Vec::with_capacity(k);
    let mut roc = Vec::with_capacity(k);
    for (c, &(precision, recall, f1)) in class.iter().enumerate() {
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let bin: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let auc = auroc(&col, &bin).ok();
        roc.push(roc_curve(&col, &bin));
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.support(c),
            auroc: auc,
        });
    }
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / k as f64;
    let weighted_f1 = per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / total as f64;
    Ok(MetricsReport {
        per_class,
        accuracy: cm.trace() as f64 / total as f64,
        macro_f1,
        weighted_f1,
        roc,
        confusion: cm.clone(),
    })
}

/// Mann–Whitney AUROC: the probability a random positive outscores a random
/// negative, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AurocUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Count pairs in integer halves so tied groups stay exact.
    let mut negatives_below = 0u128;
    let mut twice_wins = 0u128;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|&&x| labels[x]).count() as u128;
        let neg = group.len() as u128 - pos;
        twice_wins += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Ok(twice_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// ROC points at every distinct threshold, from `(0, 0)` to `(1, 1)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((ratio(fp, n_neg), ratio(tp, n_pos)));
    }
    points
}
