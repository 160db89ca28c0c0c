//! Bag-of-words tf-idf features with multinomial logistic regression.
//!
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`; document vectors are L2-normalized.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse vector with strictly increasing column indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    fn dot_row(&self, row: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| row[i] * v).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    /// Token to column; columns follow lexicographic token order.
    pub columns: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

pub fn tfidf_fit<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("tf-idf needs a nonempty corpus".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t.to_string()).or_default() += 1;
        }
    }
    let n = corpus.len() as f64;
    let mut columns = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    for (col, (token, count)) in df.into_iter().enumerate() {
        idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
        columns.insert(token, col);
    }
    Ok(TfidfModel {
        columns,
        idf,
        n_docs: corpus.len(),
    })
}

impl TfidfModel {
    pub fn n_features(&self) -> usize {
        self.idf.len()
    }

    /// Unseen tokens are ignored; an empty result stays the zero vector.
    pub fn transform<S: AsRef<str>>(&self, doc: &[S]) -> SparseVector {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc {
            if let Some(&c) = self.columns.get(t.as_ref()) {
                *tf.entry(c).or_default() += 1.0;
            }
        }
        let mut v = SparseVector {
            indices: tf.keys().copied().collect(),
            values: tf.iter().map(|(&c, &n)| n * self.idf[c]).collect(),
        };
        let norm = v.norm();
        if norm > 0.0 {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    /// Coefficient of `‖W‖²`; the bias is not penalized.
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once `‖∇‖∞` falls below this.
    pub tolerance: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            lambda: 1e-3,
            max_iter: 2000,
            tolerance: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub n_classes: usize,
    pub n_features: usize,
    /// Row-major `C × F`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Optimizer trace.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearClassifier {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        LinearClassifier {
            n_classes,
            n_features,
            weights: vec![0.0; n_classes * n_features],
            bias: vec![0.0; n_classes],
        }
    }

    fn row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.n_features..(c + 1) * self.n_features]
    }

    /// `softmax(W x + b)`.
    pub fn predict_proba(&self, x: &SparseVector) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.n_classes).map(|c| x.dot_row(self.row(c)) + self.bias[c]).collect();
        softmax64(&logits)
    }

    pub fn predict(&self, x: &SparseVector) -> usize {
        let p = self.predict_proba(x);
        (0..p.len()).fold(0, |best, c| if p[c] > p[best] { c } else { best })
    }
}

fn softmax64(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Mean cross-entropy plus `λ‖W‖²`, with its gradient `(dW, db)`.
pub fn objective_and_gradient(
    clf: &LinearClassifier,
    features: &[SparseVector],
    labels: &[usize],
    lambda: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = features.len() as f64;
    let f = clf.n_features;
    let mut dw: Vec<f64> = clf.weights.iter().map(|w| 2.0 * lambda * w).collect();
    let mut db = vec![0.0; clf.n_classes];
    let mut loss = lambda * clf.weights.iter().map(|w| w * w).sum::<f64>();
    for (x, &y) in features.iter().zip(labels) {
        let p = clf.predict_proba(x);
        loss -= p[y].max(f64::MIN_POSITIVE).ln() / n;
        for (c, &pc) in p.iter().enumerate() {
            let err = (pc - f64::from(u8::from(c == y))) / n;
            db[c] += err;
            for (&i, &v) in x.indices.iter().zip(&x.values) {
                dw[c * f + i] += err * v;
            }
        }
    }
    (loss, dw, db)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().chain(b).fold(0.0, |m, v| m.max(v.abs()))
}

/// Full-batch gradient descent with Armijo backtracking from `W = 0, b = 0`.
pub fn logreg_train(
    features: &[SparseVector],
    labels: &[usize],
    n_classes: usize,
    n_features: usize,
    config: &LogRegConfig,
) -> Result<(LinearClassifier, FitTrace)> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::LabelMismatch(format!("label {bad} with {n_classes} classes")));
    }
    for (row, x) in features.iter().enumerate() {
        if x.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature in row {row}")));
        }
        if x.indices.iter().any(|&i| i >= n_features) {
            return Err(Error::InvalidArgument(format!("feature column out of range in row {row}")));
        }
    }

    let mut clf = LinearClassifier::zeros(n_classes, n_features);
    let (mut obj, mut dw, mut db) = objective_and_gradient(&clf, features, labels, config.lambda);
    let mut trace = FitTrace {
        objective: vec![obj],
        ..FitTrace::default()
    };
    let mut step = 1.0;
    const ARMIJO: f64 = 1e-4;
    for _ in 0..config.max_iter {
        if max_abs(&dw, &db) < config.tolerance {
            trace.converged = true;
            break;
        }
        let g2: f64 = dw.iter().chain(&db).map(|g| g * g).sum();
        let accepted = loop {
            let mut cand = clf.clone();
            cand.weights.iter_mut().zip(&dw).for_each(|(w, g)| *w -= step * g);
            cand.bias.iter_mut().zip(&db).for_each(|(b, g)| *b -= step * g);
            let (c_obj, c_dw, c_db) = objective_and_gradient(&cand, features, labels, config.lambda);
            if c_obj <= obj - ARMIJO * step * g2 {
                break Some((cand, c_obj, c_dw, c_db));
            }
            step *= 0.5;
            if step < 1e-12 {
                break None;
            }
        };
        let Some((cand, c_obj, c_dw, c_db)) = accepted else {
            break;
        };
        clf = cand;
        obj = c_obj;
        dw = c_dw;
        db = c_db;
        trace.objective.push(obj);
        trace.iterations += 1;
        step = (step * 2.0).min(1e4);
    }
    if !trace.converged {
        trace.converged = max_abs(&dw, &db) < config.tolerance;
    }
    Ok((clf, trace))
}

/// tf-idf vectorizer and classifier fitted together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub tfidf: TfidfModel,
    pub classifier: LinearClassifier,
}

impl Baseline {
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>], labels: &[usize], n_classes: usize, config: &LogRegConfig) -> Result<Self> {
        let tfidf = tfidf_fit(docs)?;
        let x: Vec<SparseVector> = docs.iter().map(|d| tfidf.transform(d)).collect();
        let (classifier, _) = logreg_train(&x, labels, n_classes, tfidf.n_features(), config)?;
        Ok(Baseline { tfidf, classifier })
    }

    pub fn predict_proba<S: AsRef<str>>(&self, doc: &[S]) -> Vec<f64> {
        self.classifier.predict_proba(&self.tfidf.transform(doc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{numeric_gradient, relative_error};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn idf_hand_cases() {
        let m = tfidf_fit(&[toks("a b"), toks("a")]).unwrap();
        let a = m.columns["a"];
        let b = m.columns["b"];
        assert!((m.idf[a] - 1.0).abs() < 1e-12);
        assert!((m.idf[b] - (1.5f64.ln() + 1.0)).abs() < 1e-12);
        let v = m.transform(&toks("a b"));
        let d = v.to_dense(2);
        let idf_b = 1.5f64.ln() + 1.0;
        let norm = (1.0 + idf_b * idf_b).sqrt();
        assert!((d[a] - 1.0 / norm).abs() < 1e-12, "{d:?}");
        assert!((d[b] - idf_b / norm).abs() < 1e-12);
        assert!((d[a] - 0.5797).abs() < 1e-4 && (d[b] - 0.8148).abs() < 1e-4);
        assert!((v.norm() - 1.0).abs() < 1e-9);
        assert_eq!(m.transform::<String>(&[]), SparseVector::default());
        assert!(tfidf_fit::<String>(&[]).is_err());
    }

    #[test]
    fn zero_weights_are_uniform() {
        let clf = LinearClassifier::zeros(4, 3);
        let x = SparseVector {
            indices: vec![0, 2],
            values: vec![0.6, 0.8],
        };
        assert_eq!(clf.predict_proba(&x), vec![0.25; 4]);
    }

    fn toy() -> (Vec<SparseVector>, Vec<usize>) {
        let x = vec![
            SparseVector { indices: vec![0], values: vec![1.0] },
            SparseVector { indices: vec![0, 1], values: vec![0.8, 0.6] },
            SparseVector { indices: vec![2], values: vec![1.0] },
            SparseVector { indices: vec![1, 2], values: vec![0.6, 0.8] },
        ];
        (x, vec![0, 0, 1, 1])
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = toy();
        let mut clf = LinearClassifier::zeros(3, 3);
        for (i, w) in clf.weights.iter_mut().enumerate() {
            *w = (i as f64 * 0.37).sin();
        }
        clf.bias = vec![0.1, -0.2, 0.3];
        let lambda = 0.05;
        let (_, dw, db) = objective_and_gradient(&clf, &x, &y, lambda);
        let nw = numeric_gradient(
            |w| {
                let c = LinearClassifier { weights: w.to_vec(), ..clf.clone() };
                objective_and_gradient(&c, &x, &y, lambda).0
            },
            &clf.weights,
            1e-5,
        );
        let nb = numeric_gradient(
            |b| {
                let c = LinearClassifier { bias: b.to_vec(), ..clf.clone() };
                objective_and_gradient(&c, &x, &y, lambda).0
            },
            &clf.bias,
            1e-5,
        );
        assert!(relative_error(&dw, &nw) < 1e-6);
        assert!(relative_error(&db, &nb) < 1e-6);
    }

    #[test]
    fn zero_weight_gradient_is_mean_residual() {
        let (x, y) = toy();
        let clf = LinearClassifier::zeros(2, 3);
        let (_, dw, _) = objective_and_gradient(&clf, &x, &y, 0.0);
        // (p − onehot) xᵀ averaged, with p = 1/2 everywhere.
        let mut expect = vec![0.0; 6];
        for (xi, &yi) in x.iter().zip(&y) {
            let d = xi.to_dense(3);
            for c in 0..2 {
                let r = 0.5 - if c == yi { 1.0 } else { 0.0 };
                for f in 0..3 {
                    expect[c * 3 + f] += r * d[f] / 4.0;
                }
            }
        }
        for (a, b) in dw.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let (x, y) = toy();
        let cfg = LogRegConfig {
            lambda: 0.0,
            ..LogRegConfig::default()
        };
        let (clf, trace) = logreg_train(&x, &y, 2, 3, &cfg).unwrap();
        assert!(x.iter().zip(&y).all(|(xi, &yi)| clf.predict(xi) == yi));
        assert!(trace.objective.windows(2).all(|w| w[1] <= w[0]));
        for xi in &x {
            assert!((clf.predict_proba(xi).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_features_error() {
        let x = vec![SparseVector { indices: vec![0], values: vec![f64::NAN] }];
        assert!(logreg_train(&x, &[0], 2, 1, &LogRegConfig::default()).is_err());
    }

    #[test]
    fn regularized_fit_converges() {
        let (x, y) = toy();
        let (_, trace) = logreg_train(&x, &y, 2, 3, &LogRegConfig { lambda: 0.1, ..LogRegConfig::default() }).unwrap();
        assert!(trace.converged, "{} iterations", trace.iterations);
    }
}
