//! Word-level additive attention.
//!
//! `u_i = tanh(W H_i + b)`, `score_i = u_i · u_ctx`, `α = softmax(score)` over
//! real positions, `context = Σ α_i H_i`.

use crate::error::{Error, Result};
use crate::neural::gru::prefix_length;
use crate::neural::{dot, layers::softmax, mat_vec_acc, outer_acc, vec_mat_acc, Rng, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    /// Projection `D × D`.
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    /// Context vector.
    pub u: Tensor<T>,
}

pub(crate) const ATTENTION_TENSOR_NAMES: [&str; 3] = ["W", "b", "u"];

#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    proj: Vec<Vec<T>>,
    alphas: Vec<T>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn zeros(d: usize) -> Self {
        AttentionParams {
            w: Tensor::zeros(&[d, d]),
            b: Tensor::zeros(&[d]),
            u: Tensor::zeros(&[d]),
        }
    }

    /// Glorot projection, zero bias, `N(0, std)` context vector.
    pub fn init(d: usize, context_std: f64, rng: &mut Rng) -> Self {
        AttentionParams {
            w: Tensor::glorot(d, d, rng),
            b: Tensor::zeros(&[d]),
            u: Tensor::normal(&[d], context_std, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn tensors(&self) -> [&Tensor<T>; 3] {
        [&self.w, &self.b, &self.u]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 3] {
        [&mut self.w, &mut self.b, &mut self.u]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.w.shape() != [d, d] || self.u.shape() != [d] {
            return Err(Error::Shape(format!(
                "attention W {:?}, b {:?}, u {:?}",
                self.w.shape(),
                self.b.shape(),
                self.u.shape()
            )));
        }
        Ok(())
    }

    /// Attends over all rows of `h` (every row is a real position).
    pub fn run(&self, h: &Tensor<T>) -> Result<(Vec<T>, AttentionCache<T>)> {
        let len = h.rows();
        if len == 0 {
            return Err(Error::InvalidArgument("attention over zero positions".into()));
        }
        let d = self.dim();
        if h.cols() != d {
            return Err(Error::Shape(format!("attention input width {}, expected {d}", h.cols())));
        }
        let mut proj = Vec::with_capacity(len);
        let mut scores = Vec::with_capacity(len);
        for i in 0..len {
            let mut a = self.b.data().to_vec();
            mat_vec_acc(self.w.data(), h.row(i), &mut a);
            let u: Vec<T> = a.into_iter().map(T::tanh).collect();
            scores.push(dot(&u, self.u.data()));
            proj.push(u);
        }
        let alphas = softmax(&scores);
        let mut context = vec![T::zero(); d];
        for (i, &a) in alphas.iter().enumerate() {
            for (c, &x) in context.iter_mut().zip(h.row(i)) {
                *c += a * x;
            }
        }
        Ok((context, AttentionCache { proj, alphas }))
    }

    /// Accumulates parameter gradients and returns `dL/dH`.
    pub fn backward(&self, h: &Tensor<T>, cache: &AttentionCache<T>, d_context: &[T], grads: &mut AttentionParams<T>) -> Tensor<T> {
        let len = h.rows();
        let d = self.dim();
        let mut dh = Tensor::zeros(&[len, d]);
        let d_alpha: Vec<T> = (0..len).map(|i| dot(d_context, h.row(i))).collect();
        let mean: T = cache.alphas.iter().zip(&d_alpha).map(|(&a, &g)| a * g).sum();
        for i in 0..len {
            let a = cache.alphas[i];
            for (g, &dc) in dh.row_mut(i).iter_mut().zip(d_context) {
                *g += a * dc;
            }
            let d_score = a * (d_alpha[i] - mean);
            let u = &cache.proj[i];
            for (g, &ui) in grads.u.data_mut().iter_mut().zip(u) {
                *g += d_score * ui;
            }
            let d_pre: Vec<T> = u
                .iter()
                .zip(self.u.data())
                .map(|(&ui, &ctx)| d_score * ctx * (T::one() - ui * ui))
                .collect();
            outer_acc(&d_pre, h.row(i), grads.w.data_mut());
            for (g, &v) in grads.b.data_mut().iter_mut().zip(&d_pre) {
                *g += v;
            }
            vec_mat_acc(&d_pre, self.w.data(), dh.row_mut(i));
        }
        dh
    }
}

impl<T> AttentionCache<T> {
    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }
}

/// Attention over a padded `max_len × D` matrix; masked alphas are exactly zero.
pub fn attention<T: Scalar>(h: &Tensor<T>, mask: &[u8], p: &AttentionParams<T>) -> Result<(Vec<T>, Vec<T>)> {
    if h.rows() != mask.len() {
        return Err(Error::Shape(format!("H has {} rows, mask {}", h.rows(), mask.len())));
    }
    p.validate()?;
    let len = prefix_length(mask)?;
    if len == 0 {
        return Err(Error::InvalidArgument("all positions masked".into()));
    }
    let real = Tensor::new(vec![len, h.cols()], h.data()[..len * h.cols()].to_vec())?;
    let (context, cache) = p.run(&real)?;
    let mut alphas = vec![T::zero(); mask.len()];
    alphas[..len].copy_from_slice(&cache.alphas);
    Ok((context, alphas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{numeric_gradient, relative_error};

    #[test]
    fn single_real_token_gets_all_mass() {
        let mut rng = Rng::seed_from(1);
        let p = AttentionParams::<f64>::init(4, 0.1, &mut rng);
        let h = Tensor::<f64>::normal(&[3, 4], 1.0, &mut rng);
        let (ctx, alphas) = attention(&h, &[1, 0, 0], &p).unwrap();
        assert_eq!(alphas, vec![1.0, 0.0, 0.0]);
        assert_eq!(ctx.as_slice(), h.row(0));
    }

    #[test]
    fn identical_rows_share_mass_equally() {
        let mut rng = Rng::seed_from(2);
        let p = AttentionParams::<f64>::init(3, 0.1, &mut rng);
        let row = [0.3, -0.1, 0.8];
        let mut data = Vec::new();
        for _ in 0..5 {
            data.extend(row);
        }
        let h = Tensor::new(vec![5, 3], data).unwrap();
        let (_, alphas) = attention(&h, &[1, 1, 1, 1, 0], &p).unwrap();
        for a in &alphas[..4] {
            assert!((a - 0.25).abs() < 1e-15);
        }
        assert_eq!(alphas[4], 0.0);
    }

    #[test]
    fn all_masked_is_an_error() {
        let p = AttentionParams::<f64>::zeros(2);
        let h = Tensor::<f64>::zeros(&[2, 2]);
        assert!(attention(&h, &[0, 0], &p).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::seed_from(100 + seed);
            let d = 4;
            let p = AttentionParams {
                w: Tensor::<f64>::normal(&[d, d], 0.7, &mut rng),
                b: Tensor::normal(&[d], 0.3, &mut rng),
                u: Tensor::normal(&[d], 1.0, &mut rng),
            };
            let h = Tensor::<f64>::normal(&[6, d], 1.0, &mut rng);
            let w: Vec<f64> = (0..d).map(|_| rng.normal(0.0, 1.0)).collect();
            let loss = |p: &AttentionParams<f64>, h: &Tensor<f64>| dot(&p.run(h).unwrap().0, &w);
            let (_, cache) = p.run(&h).unwrap();
            let mut g = AttentionParams::zeros(d);
            let dh = p.backward(&h, &cache, &w, &mut g);
            let nh = numeric_gradient(|f| loss(&p, &Tensor::new(vec![6, d], f.to_vec()).unwrap()), h.data(), 1e-5);
            assert!(relative_error(dh.data(), &nh) < 1e-4);
            let nw = numeric_gradient(
                |f| loss(&AttentionParams { w: Tensor::new(vec![d, d], f.to_vec()).unwrap(), ..p.clone() }, &h),
                p.w.data(),
                1e-5,
            );
            assert!(relative_error(g.w.data(), &nw) < 1e-4);
            let nb = numeric_gradient(|f| loss(&AttentionParams { b: Tensor::from_vec(f.to_vec()), ..p.clone() }, &h), p.b.data(), 1e-5);
            assert!(relative_error(g.b.data(), &nb) < 1e-4);
            let nu = numeric_gradient(|f| loss(&AttentionParams { u: Tensor::from_vec(f.to_vec()), ..p.clone() }, &h), p.u.data(), 1e-5);
            assert!(relative_error(g.u.data(), &nu) < 1e-4);
        }
    }
}
