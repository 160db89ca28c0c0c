use crate::error::{Error, Result};
use crate::neural::{mat_vec_acc, outer_acc, vec_mat_acc, Rng, Scalar, Tensor};
use crate::text::EncodedSequence;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

/// Looks up every position of `seq`, padding included (PAD rows are `table[0]`).
pub fn embedding_forward<T: Scalar>(seq: &EncodedSequence, table: &Tensor<T>) -> Result<Tensor<T>> {
    embedding_lookup(&seq.indices, table)
}

/// One row of `table` per index.
pub fn embedding_lookup<T: Scalar>(indices: &[usize], table: &Tensor<T>) -> Result<Tensor<T>> {
    let (v, d) = (table.rows(), table.cols());
    let mut out = Vec::with_capacity(indices.len() * d);
    for &i in indices {
        if i >= v {
            return Err(Error::IndexOutOfRange { index: i, size: v });
        }
        out.extend_from_slice(table.row(i));
    }
    Tensor::new(vec![indices.len(), d], out)
}

/// Scatter-adds `d_out` rows into `grad` by index; repeated indices accumulate.
pub fn embedding_backward<T: Scalar>(indices: &[usize], d_out: &Tensor<T>, grad: &mut Tensor<T>) {
    for (pos, &i) in indices.iter().enumerate() {
        let src = d_out.row(pos);
        for (g, &s) in grad.row_mut(i).iter_mut().zip(src) {
            *g += s;
        }
    }
}

/// Per-element inverted-dropout factors (`0` or `1/(1-rate)`), or the identity.
#[derive(Clone, Debug, PartialEq)]
pub enum DropoutMask<T> {
    Identity,
    Scale(Vec<T>),
}

impl<T: Scalar> DropoutMask<T> {
    pub fn sample(len: usize, rate: f64, rng: &mut Rng, training: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(DropoutMask::Identity);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let scale = (0..len)
            .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep })
            .collect();
        Ok(DropoutMask::Scale(scale))
    }

    /// Applies the mask in place; the backward pass is the same operation.
    pub fn apply(&self, x: &mut [T]) {
        if let DropoutMask::Scale(s) = self {
            debug_assert_eq!(s.len(), x.len());
            for (v, &k) in x.iter_mut().zip(s) {
                *v *= k;
            }
        }
    }
}

pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, rng: &mut Rng, training: bool) -> Result<Tensor<T>> {
    let mask = DropoutMask::sample(x.len(), rate, rng, training)?;
    let mut out = x.clone();
    mask.apply(out.data_mut());
    Ok(out)
}

/// `y = W x + b` with `W` of shape `out × in`.
pub fn dense<T: Scalar>(x: &[T], w: &Tensor<T>, b: &[T]) -> Result<Vec<T>> {
    if w.shape().len() != 2 || w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::Shape(format!(
            "dense: W {:?}, x {}, b {}",
            w.shape(),
            x.len(),
            b.len()
        )));
    }
    let mut y = b.to_vec();
    mat_vec_acc(w.data(), x, &mut y);
    Ok(y)
}

/// Accumulates `dW += dy xᵀ`, `db += dy` and returns `dx = Wᵀ dy`.
pub fn dense_backward<T: Scalar>(x: &[T], w: &Tensor<T>, dy: &[T], dw: &mut Tensor<T>, db: &mut [T]) -> Vec<T> {
    outer_acc(dy, x, dw.data_mut());
    for (g, &d) in db.iter_mut().zip(dy) {
        *g += d;
    }
    let mut dx = vec![T::zero(); x.len()];
    vec_mat_acc(dy, w.data(), &mut dx);
    dx
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let lo = T::lit(PROB_CLAMP);
    p.max(lo).min(T::one() - lo)
}

pub fn binary_cross_entropy<T: Scalar>(p: T, y: T) -> T {
    let p = clamp_prob(p);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

pub fn categorical_cross_entropy<T: Scalar>(probs: &[T], class: usize) -> T {
    -clamp_prob(probs[class]).ln()
}

/// Gradient of BCE∘sigmoid with respect to the logit; zero where the clamp is active.
pub(crate) fn bce_logit_grad<T: Scalar>(p: T, y: T) -> T {
    if clamp_prob(p) != p {
        T::zero()
    } else {
        p - y
    }
}

/// Gradient of CCE∘softmax with respect to the logits; zero where the clamp is active.
pub(crate) fn cce_logit_grad<T: Scalar>(probs: &[T], class: usize) -> Vec<T> {
    if clamp_prob(probs[class]) != probs[class] {
        return vec![T::zero(); probs.len()];
    }
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == class { p - T::one() } else { p })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::numeric_gradient;
    use crate::text::{encode, Vocabulary, PAD_TOKEN, UNK_TOKEN};

    #[test]
    fn embedding_examples() {
        let e = Tensor::<f64>::new(vec![3, 2], vec![0.5, 0.5, 9.0, 9.0, 1.0, 0.0]).unwrap();
        let out = embedding_lookup(&[2], &e).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0]);

        let vocab = Vocabulary::from_tokens(vec![PAD_TOKEN.into(), UNK_TOKEN.into(), "a".into()], 1).unwrap();
        let seq = encode::<&str>(&[], &vocab, 3).unwrap();
        let out = embedding_forward(&seq, &e).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);

        assert!(matches!(embedding_lookup(&[3], &e), Err(Error::IndexOutOfRange { index: 3, size: 3 })));
    }

    #[test]
    fn embedding_gradient_sums_duplicates() {
        let mut rng = Rng::seed_from(3);
        let table = Tensor::<f64>::normal(&[4, 3], 1.0, &mut rng);
        let weights = Tensor::<f64>::normal(&[3, 3], 1.0, &mut rng);
        let idx = [2usize, 1, 2];
        // loss = Σ_pos Σ_k w[pos,k] · E[idx[pos],k]^2
        let loss = |flat: &[f64]| {
            let t = Tensor::new(vec![4, 3], flat.to_vec()).unwrap();
            let out = embedding_lookup(&idx, &t).unwrap();
            out.data().iter().zip(weights.data()).map(|(x, w)| w * x * x).sum::<f64>()
        };
        let out = embedding_lookup(&idx, &table).unwrap();
        let d_out_data: Vec<f64> = out.data().iter().zip(weights.data()).map(|(x, w)| 2.0 * w * x).collect();
        let d_out = Tensor::new(vec![3, 3], d_out_data).unwrap();
        let mut grad = Tensor::zeros(&[4, 3]);
        embedding_backward(&idx, &d_out, &mut grad);
        let numeric = numeric_gradient(loss, table.data(), 1e-5);
        for (a, n) in grad.data().iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-7, "{a} vs {n}");
        }
        assert!(grad.row(0).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = Rng::seed_from(0);
        let x = Tensor::<f64>::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(dropout(&x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(dropout(&x, 0.7, &mut rng, false).unwrap(), x);
        assert!(dropout(&x, 1.0, &mut rng, true).is_err());
        assert!(dropout(&x, -0.1, &mut rng, false).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = Rng::seed_from(11);
        let x = Tensor::<f64>::from_vec(vec![1.0, -2.0, 0.5]);
        let draws = 100_000;
        let mut sums = [0.0f64; 3];
        for _ in 0..draws {
            let y = dropout(&x, 0.5, &mut rng, true).unwrap();
            for (s, v) in sums.iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        for (s, x) in sums.iter().zip(x.data()) {
            let mean = s / draws as f64;
            assert!((mean - x).abs() <= 0.02 * x.abs(), "{mean} vs {x}");
        }
    }

    #[test]
    fn dense_examples() {
        let eye = Tensor::<f64>::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(dense(&[3.0, -1.0], &eye, &[0.0, 0.0]).unwrap(), vec![3.0, -1.0]);
        let zero = Tensor::<f64>::zeros(&[3, 2]);
        assert_eq!(dense(&[3.0, -1.0], &zero, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(dense(&[1.0], &zero, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        let mut rng = Rng::seed_from(5);
        let w = Tensor::<f64>::normal(&[3, 4], 1.0, &mut rng);
        let b = Tensor::<f64>::normal(&[3], 1.0, &mut rng);
        let x = Tensor::<f64>::normal(&[4], 1.0, &mut rng);
        let target = [0.3, -0.7, 1.1];
        let loss_of = |w: &Tensor<f64>, b: &[f64], x: &[f64]| {
            let y = dense(x, w, b).unwrap();
            y.iter().zip(&target).map(|(a, t)| 0.5 * (a - t) * (a - t)).sum::<f64>()
        };
        let y = dense(x.data(), &w, b.data()).unwrap();
        let dy: Vec<f64> = y.iter().zip(&target).map(|(a, t)| a - t).collect();
        let mut dw = Tensor::zeros(&[3, 4]);
        let mut db = vec![0.0; 3];
        let dx = dense_backward(x.data(), &w, &dy, &mut dw, &mut db);

        let nw = numeric_gradient(|p| loss_of(&Tensor::new(vec![3, 4], p.to_vec()).unwrap(), b.data(), x.data()), w.data(), 1e-5);
        let nb = numeric_gradient(|p| loss_of(&w, p, x.data()), b.data(), 1e-5);
        let nx = numeric_gradient(|p| loss_of(&w, b.data(), p), x.data(), 1e-5);
        assert!(crate::neural::relative_error(dw.data(), &nw) < 1e-6);
        assert!(crate::neural::relative_error(&db, &nb) < 1e-6);
        assert!(crate::neural::relative_error(&dx, &nx) < 1e-6);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[1.0f64; 4]);
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let p = softmax(&[0.0f64, 3.0f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
        let a = softmax(&[0.1f64, -2.0, 3.0]);
        let b = softmax(&[100.1f64, 98.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
        let big = softmax(&[1000.0f32, 0.0]);
        assert!(big.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn loss_examples() {
        assert!(categorical_cross_entropy(&[1.0f64, 0.0, 0.0, 0.0], 0) < 1e-6);
        assert!(binary_cross_entropy(1.0f64, 1.0) < 1e-6);
        assert!(binary_cross_entropy(0.0f64, 0.0) < 1e-6);
        assert!((categorical_cross_entropy(&[0.25f64; 4], 2) - 4.0f64.ln()).abs() < 1e-12);
        assert!((binary_cross_entropy(0.5f64, 1.0) - 2.0f64.ln()).abs() < 1e-12);
        assert!(binary_cross_entropy(0.0f64, 1.0).is_finite());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
        assert!((sigmoid(2.0f64) + sigmoid(-2.0f64) - 1.0).abs() < 1e-15);
    }
}
