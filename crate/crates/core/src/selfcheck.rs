//! Finite-difference gradient suite over every layer and the full model, and
//! brute-force oracles for the evaluation metrics.

use serde::Serialize;

use crate::error::Result;
use crate::evaluation::{auroc, compute_metrics, ConfusionMatrix};
use crate::model::{build_model, Head, ModelConfig, ModelParams};
use crate::neural::{
    bce_logit_grad, binary_cross_entropy, categorical_cross_entropy, cce_logit_grad, dense,
    dense_backward, dot, embedding_backward, embedding_lookup, grad_check, sigmoid, softmax,
    AttentionParams, BiGruParams, GruParams, Rng, Tensor,
};
use crate::text::EncodedSequence;

/// Pass threshold on the maximum relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Finite-difference step for single layers.
pub const LAYER_STEP: f64 = 1e-5;
/// Finite-difference step for the full model, whose loss carries more roundoff.
pub const MODEL_STEP: f64 = 1e-4;
/// Standard deviation of randomized micro-instance parameters.
pub const INSTANCE_STD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCase {
    pub component: String,
    pub seed: u64,
    pub shape: String,
    pub max_relative_error: f64,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRAD_TOLERANCE
    }
}

fn flat<'a>(ts: impl IntoIterator<Item = &'a Tensor<f64>>) -> Vec<f64> {
    ts.into_iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn load<'a>(ts: impl IntoIterator<Item = &'a mut Tensor<f64>>, values: &[f64]) {
    let mut off = 0;
    for t in ts {
        let n = t.len();
        t.data_mut().copy_from_slice(&values[off..off + n]);
        off += n;
    }
}

fn randomize<'a>(ts: impl IntoIterator<Item = &'a mut Tensor<f64>>, rng: &mut Rng) {
    for t in ts {
        for v in t.data_mut() {
            *v = rng.normal(0.0, INSTANCE_STD);
        }
    }
}

fn normal_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.normal(0.0, 1.0)).collect()
}

fn check(f: impl Fn(&[f64]) -> f64, at: &[f64], analytic: &[f64], h: f64) -> f64 {
    grad_check(f, at, analytic, h).max_relative_error
}

fn gru_cell_case(seed: u64) -> GradCase {
    let mut rng = Rng::seed_from(seed);
    let (d_in, d_h) = (1 + rng.below(5), 1 + rng.below(5));
    let mut p = GruParams::<f64>::zeros(d_in, d_h);
    randomize(p.tensors_mut(), &mut rng);
    let x = normal_vec(d_in, &mut rng);
    let h = normal_vec(d_h, &mut rng);
    let w = normal_vec(d_h, &mut rng);
    let loss = |p: &GruParams<f64>, x: &[f64], h: &[f64]| dot(&p.step(x, h).0, &w);

    let (_, cache) = p.step(&x, &h);
    let mut g = GruParams::zeros(d_in, d_h);
    let mut dx = vec![0.0; d_in];
    let dh = p.step_backward(&cache, &w, &mut g, &mut dx);
    let e_p = check(
        |v| {
            let mut q = p.clone();
            load(q.tensors_mut(), v);
            loss(&q, &x, &h)
        },
        &flat(p.tensors()),
        &flat(g.tensors()),
        LAYER_STEP,
    );
    let e_x = check(|v| loss(&p, v, &h), &x, &dx, LAYER_STEP);
    let e_h = check(|v| loss(&p, &x, v), &h, &dh, LAYER_STEP);
    GradCase {
        component: "gru_cell".into(),
        seed,
        shape: format!("d_in={d_in} d_h={d_h}"),
        max_relative_error: e_p.max(e_x).max(e_h),
    }
}

fn bigru_case(seed: u64) -> GradCase {
    let mut rng = Rng::seed_from(seed);
    let (d_in, d_h, len) = (1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(6));
    let mut p = BiGruParams::<f64>::zeros(d_in, d_h);
    randomize(p.fwd.tensors_mut(), &mut rng);
    randomize(p.bwd.tensors_mut(), &mut rng);
    let x = Tensor::<f64>::normal(&[len, d_in], 1.0, &mut rng);
    let w = Tensor::<f64>::normal(&[len, 2 * d_h], 1.0, &mut rng);
    let loss = |p: &BiGruParams<f64>, x: &Tensor<f64>| dot(p.run(x).unwrap().0.data(), w.data());

    let (_, cache) = p.run(&x).unwrap();
    let mut g = BiGruParams::zeros(d_in, d_h);
    let dx = p.backward(&cache, &w, &mut g);
    let params = |p: &BiGruParams<f64>| flat(p.fwd.tensors().into_iter().chain(p.bwd.tensors()));
    let e_p = check(
        |v| {
            let mut q = p.clone();
            load(q.fwd.tensors_mut().into_iter().chain(q.bwd.tensors_mut()), v);
            loss(&q, &x)
        },
        &params(&p),
        &params(&g),
        LAYER_STEP,
    );
    let e_x = check(
        |v| loss(&p, &Tensor::new(vec![len, d_in], v.to_vec()).unwrap()),
        x.data(),
        dx.data(),
        LAYER_STEP,
    );
    GradCase {
        component: "bigru".into(),
        seed,
        shape: format!("L={len} d_in={d_in} d_h={d_h}"),
        max_relative_error: e_p.max(e_x),
    }
}

fn attention_case(seed: u64) -> GradCase {
    let mut rng = Rng::seed_from(seed);
    let (d, len) = (1 + rng.below(6), 1 + rng.below(6));
    let mut p = AttentionParams::<f64>::zeros(d);
    randomize(p.tensors_mut(), &mut rng);
    let h = Tensor::<f64>::normal(&[len, d], 1.0, &mut rng);
    let w = normal_vec(d, &mut rng);
    let loss = |p: &AttentionParams<f64>, h: &Tensor<f64>| dot(&p.run(h).unwrap().0, &w);

    let (_, cache) = p.run(&h).unwrap();
    let mut g = AttentionParams::zeros(d);
    let dh = p.backward(&h, &cache, &w, &mut g);
    let e_p = check(
        |v| {
            let mut q = p.clone();
            load(q.tensors_mut(), v);
            loss(&q, &h)
        },
        &flat(p.tensors()),
        &flat(g.tensors()),
        LAYER_STEP,
    );
    let e_h = check(
        |v| loss(&p, &Tensor::new(vec![len, d], v.to_vec()).unwrap()),
        h.data(),
        dh.data(),
        LAYER_STEP,
    );
    GradCase {
        component: "attention".into(),
        seed,
        shape: format!("L={len} D={d}"),
        max_relative_error: e_p.max(e_h),
    }
}

fn dense_case(seed: u64) -> GradCase {
    let mut rng = Rng::seed_from(seed);
    let (n_out, n_in) = (1 + rng.below(5), 1 + rng.below(6));
    let w = Tensor::<f64>::normal(&[n_out, n_in], 1.0, &mut rng);
    let b = normal_vec(n_out, &mut rng);
    let x = normal_vec(n_in, &mut rng);
    let t = normal_vec(n_out, &mut rng);
    // Squared error keeps the loss nonlinear in every input.
    let loss = |w: &Tensor<f64>, b: &[f64], x: &[f64]| {
        dense(x, w, b).unwrap().iter().zip(&t).map(|(y, t)| 0.5 * (y - t) * (y - t)).sum::<f64>()
    };
    let y = dense(&x, &w, &b).unwrap();
    let dy: Vec<f64> = y.iter().zip(&t).map(|(y, t)| y - t).collect();
    let mut dw = Tensor::zeros(&[n_out, n_in]);
    let mut db = vec![0.0; n_out];
    let dx = dense_backward(&x, &w, &dy, &mut dw, &mut db);
    let e_w = check(
        |v| loss(&Tensor::new(vec![n_out, n_in], v.to_vec()).unwrap(), &b, &x),
        w.data(),
        dw.data(),
        LAYER_STEP,
    );
    let e_b = check(|v| loss(&w, v, &x), &b, &db, LAYER_STEP);
    let e_x = check(|v| loss(&w, &b, v), &x, &dx, LAYER_STEP);
    GradCase {
        component: "dense".into(),
        seed,
        shape: format!("{n_out}x{n_in}"),
        max_relative_error: e_w.max(e_b).max(e_x),
    }
}

fn embedding_case(seed: u64) -> GradCase {
    let mut rng = Rng::seed_from(seed);
    let (v, d, len) = (2 + rng.below(5), 1 + rng.below(4), 1 + rng.below(6));
    let table = Tensor::<f64>::normal(&[v, d], 1.0, &mut rng);
    let idx: Vec<usize> = (0..len).map(|_| rng.below(v)).collect();
    let w = Tensor::<f64>::normal(&[len, d], 1.0, &mut rng);
    let loss = |t: &Tensor<f64>| {
        let e = embedding_lookup(&idx, t).unwrap();
        e.data().iter().zip(w.data()).map(|(e, w)| w * e * e).sum::<f64>()
    };
    let e = embedding_lookup(&idx, &table).unwrap();
    let d_out: Vec<f64> = e.data().iter().zip(w.data()).map(|(e, w)| 2.0 * w * e).collect();
    let mut g = Tensor::zeros(&[v, d]);
    embedding_backward(&idx, &Tensor::new(vec![len, d], d_out).unwrap(), &mut g);
    let err = check(
        |vals| loss(&Tensor::new(vec![v, d], vals.to_vec()).unwrap()),
        table.data(),
        g.data(),
        LAYER_STEP,
    );
    GradCase {
        component: "embedding".into(),
        seed,
        shape: format!("V={v} d={d} L={len}"),
        max_relative_error: err,
    }
}

fn output_case(seed: u64) -> Vec<GradCase> {
    let mut rng = Rng::seed_from(seed);
    let z = rng.normal(0.0, 2.0);
    let y = rng.below(2) as f64;
    let e_bin = check(
        |v| binary_cross_entropy(sigmoid(v[0]), y),
        &[z],
        &[bce_logit_grad(sigmoid(z), y)],
        LAYER_STEP,
    );
    let k = 2 + rng.below(4);
    let logits = normal_vec(k, &mut rng);
    let class = rng.below(k);
    let e_cat = check(
        |v| categorical_cross_entropy(&softmax(v), class),
        &logits,
        &cce_logit_grad(&softmax(&logits), class),
        LAYER_STEP,
    );
    vec![
        GradCase {
            component: "sigmoid_bce".into(),
            seed,
            shape: "1".into(),
            max_relative_error: e_bin,
        },
        GradCase {
            component: "softmax_cce".into(),
            seed,
            shape: k.to_string(),
            max_relative_error: e_cat,
        },
    ]
}

/// Full-model loss gradient on a random micro-instance, dropout active when `training`.
pub fn model_gradient_error(head: Head, seed: u64, training: bool) -> Result<f64> {
    let cfg = ModelConfig {
        embedding_dim: 3,
        gru_units: 2,
        max_len: 8,
        dropout_embed: 0.3,
        dropout_rnn_output: 0.3,
        ..ModelConfig::new(7, head)
    };
    let mut rng = Rng::seed_from(seed);
    let mut model = build_model::<f64>(cfg.clone(), &mut rng)?;
    randomize(model.params.tensors_mut(), &mut rng);
    let len = 6;
    let mut indices: Vec<usize> = (0..len).map(|_| 1 + rng.below(cfg.vocab_size - 1)).collect();
    let mut mask = vec![1u8; len];
    indices.resize(cfg.max_len, 0);
    mask.resize(cfg.max_len, 0);
    let seq = EncodedSequence {
        indices,
        mask,
        true_length: len,
    };
    // The least likely class keeps the output error, and with it every gradient, O(1).
    let scores = model.predict(&seq)?.class_scores();
    let class = (0..scores.len())
        .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .unwrap_or(0);
    let dropout_seed = rng.next_u64();

    let mut grads = ModelParams::zeros(&cfg);
    model.accumulate_gradients(&seq, class, training, &mut Rng::seed_from(dropout_seed), &mut grads)?;
    let report = grad_check(
        |v| {
            let mut m = model.clone();
            load(m.params.tensors_mut(), v);
            m.loss(&seq, class, training, &mut Rng::seed_from(dropout_seed))
                .expect("micro-instance loss")
        },
        &model.params.to_flat(),
        &grads.to_flat(),
        MODEL_STEP,
    );
    Ok(report.max_relative_error)
}

/// Every layer plus the full model (both heads, with and without dropout), once per seed.
pub fn gradient_suite(seeds: impl IntoIterator<Item = u64>) -> Result<Vec<GradCase>> {
    let mut cases = Vec::new();
    for seed in seeds {
        cases.push(gru_cell_case(seed));
        cases.push(bigru_case(seed));
        cases.push(attention_case(seed));
        cases.push(dense_case(seed));
        cases.push(embedding_case(seed));
        cases.extend(output_case(seed));
        for head in [Head::Binary, Head::FourClass] {
            for training in [false, true] {
                let mode = if training { "train" } else { "infer" };
                cases.push(GradCase {
                    component: format!("model_{}", if head == Head::Binary { "binary" } else { "four_class" }),
                    seed,
                    shape: format!("V=7 d=3 h=2 L=6 {mode}"),
                    max_relative_error: model_gradient_error(head, seed, training)?,
                });
            }
        }
    }
    Ok(cases)
}

/// Tolerance for the F1 family against the brute-force oracle.
pub const METRIC_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricCase {
    pub seed: u64,
    pub n: usize,
    pub n_classes: usize,
    /// Largest deviation over precision, recall, F1, accuracy, macro and weighted F1.
    pub f1_family_error: f64,
    /// Classes whose AUROC differs from pair counting (compared exactly).
    pub auroc_mismatches: usize,
}

impl MetricCase {
    pub fn passed(&self) -> bool {
        self.f1_family_error <= METRIC_TOLERANCE && self.auroc_mismatches == 0
    }
}

/// Counts TP/FP/FN directly from the pairs and ranks by comparing every
/// positive with every negative.
fn oracle_scores(truth: &[usize], pred: &[usize], k: usize) -> (Vec<(f64, f64, f64)>, f64, f64, f64) {
    let mut per = Vec::new();
    let mut support = Vec::new();
    for c in 0..k {
        let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
        let fp = truth.iter().zip(pred).filter(|&(&t, &p)| t != c && p == c).count() as f64;
        let fn_ = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p != c).count() as f64;
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        per.push((p, r, f));
        support.push((tp + fn_) as f64);
    }
    let n = truth.len() as f64;
    let acc = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / n;
    let macro_f1 = per.iter().map(|x| x.2).sum::<f64>() / k as f64;
    let weighted = per.iter().zip(&support).map(|(x, s)| x.2 * s).sum::<f64>() / n;
    (per, acc, macro_f1, weighted)
}

fn pair_auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 2;
                wins += match scores[i].partial_cmp(&scores[j]).expect("finite scores") {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    (pairs > 0).then(|| wins as f64 / pairs as f64)
}

/// One random evaluation instance checked against the oracles.
pub fn metric_case(seed: u64) -> Result<MetricCase> {
    let mut rng = Rng::seed_from(seed);
    let k = 2 + rng.below(4);
    let n = 2 + rng.below(199);
    let truth: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    let pred: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    // Coarse score grid so ties occur.
    let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.below(11) as f64 / 10.0).collect()).collect();
    let cm = ConfusionMatrix::from_pairs(k, &truth, &pred)?;
    let report = compute_metrics(&cm, &scores, &truth)?;
    let (per, acc, macro_f1, weighted) = oracle_scores(&truth, &pred, k);
    let mut err = (report.accuracy - acc).abs().max((report.macro_f1 - macro_f1).abs()).max((report.weighted_f1 - weighted).abs());
    let mut mismatches = 0;
    for c in 0..k {
        let m = &report.per_class[c];
        err = err.max((m.precision - per[c].0).abs()).max((m.recall - per[c].1).abs()).max((m.f1 - per[c].2).abs());
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let bin: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let expected = pair_auroc(&col, &bin);
        let got = auroc(&col, &bin).ok();
        if got != expected || m.auroc != expected {
            mismatches += 1;
        }
    }
    Ok(MetricCase {
        seed,
        n,
        n_classes: k,
        f1_family_error: err,
        auroc_mismatches: mismatches,
    })
}

pub fn metric_suite(seeds: impl IntoIterator<Item = u64>) -> Result<Vec<MetricCase>> {
    seeds.into_iter().map(metric_case).collect()
}
