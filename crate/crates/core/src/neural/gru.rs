//! Gated recurrent unit and its bidirectional wrapper.
//!
//! One step, with the reset gate applied to the state before the recurrent
//! matrix of the candidate:
//!
//! ```text
//! r  = σ(x U_r + h W_r + b_r)
//! z  = σ(x U_z + h W_z + b_z)
//! h~ = tanh(x U_h + (r ⊙ h) W_h + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h~
//! ```
//!
//! `U_*` are `d_in × d_h`, `W_*` are `d_h × d_h`, both applied as row-vector products.

use crate::error::{Error, Result};
use crate::neural::{layers::sigmoid, mat_vec_acc, outer_acc, vec_mat_acc, Rng, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams<T> {
    pub u_r: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_h: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_z: Tensor<T>,
    pub w_h: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_h: Tensor<T>,
}

/// Tensor names in container order.
pub(crate) const GRU_TENSOR_NAMES: [&str; 9] = ["U_r", "U_z", "U_h", "W_r", "W_z", "W_h", "b_r", "b_z", "b_h"];

impl<T: Scalar> GruParams<T> {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        GruParams {
            u_r: Tensor::zeros(&[d_in, d_h]),
            u_z: Tensor::zeros(&[d_in, d_h]),
            u_h: Tensor::zeros(&[d_in, d_h]),
            w_r: Tensor::zeros(&[d_h, d_h]),
            w_z: Tensor::zeros(&[d_h, d_h]),
            w_h: Tensor::zeros(&[d_h, d_h]),
            b_r: Tensor::zeros(&[d_h]),
            b_z: Tensor::zeros(&[d_h]),
            b_h: Tensor::zeros(&[d_h]),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(d_in: usize, d_h: usize, rng: &mut Rng) -> Self {
        GruParams {
            u_r: Tensor::glorot(d_in, d_h, rng),
            u_z: Tensor::glorot(d_in, d_h, rng),
            u_h: Tensor::glorot(d_in, d_h, rng),
            w_r: Tensor::glorot(d_h, d_h, rng),
            w_z: Tensor::glorot(d_h, d_h, rng),
            w_h: Tensor::glorot(d_h, d_h, rng),
            b_r: Tensor::zeros(&[d_h]),
            b_z: Tensor::zeros(&[d_h]),
            b_h: Tensor::zeros(&[d_h]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.u_r.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.b_r.len()
    }

    pub fn tensors(&self) -> [&Tensor<T>; 9] {
        [
            &self.u_r, &self.u_z, &self.u_h, &self.w_r, &self.w_z, &self.w_h, &self.b_r, &self.b_z, &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 9] {
        [
            &mut self.u_r,
            &mut self.u_z,
            &mut self.u_h,
            &mut self.w_r,
            &mut self.w_z,
            &mut self.w_h,
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_h,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (d_in, d_h) = (self.input_dim(), self.hidden_dim());
        let expected: [&[usize]; 9] = [
            &[d_in, d_h],
            &[d_in, d_h],
            &[d_in, d_h],
            &[d_h, d_h],
            &[d_h, d_h],
            &[d_h, d_h],
            &[d_h],
            &[d_h],
            &[d_h],
        ];
        for ((name, t), shape) in GRU_TENSOR_NAMES.iter().zip(self.tensors()).zip(expected) {
            if t.shape() != shape {
                return Err(Error::Shape(format!("GRU {name}: {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(())
    }

    pub fn step(&self, x: &[T], h: &[T]) -> (Vec<T>, GruCache<T>) {
        let d_h = self.hidden_dim();
        let gate = |u: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, hin: &[T]| {
            let mut a = b.data().to_vec();
            vec_mat_acc(x, u.data(), &mut a);
            vec_mat_acc(hin, w.data(), &mut a);
            a
        };
        let r: Vec<T> = gate(&self.u_r, &self.w_r, &self.b_r, h).into_iter().map(sigmoid).collect();
        let z: Vec<T> = gate(&self.u_z, &self.w_z, &self.b_z, h).into_iter().map(sigmoid).collect();
        let rh: Vec<T> = r.iter().zip(h).map(|(&a, &b)| a * b).collect();
        let c: Vec<T> = gate(&self.u_h, &self.w_h, &self.b_h, &rh).into_iter().map(T::tanh).collect();
        let mut h_new = Vec::with_capacity(d_h);
        for i in 0..d_h {
            h_new.push((T::one() - z[i]) * h[i] + z[i] * c[i]);
        }
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            r,
            z,
            c,
            rh,
        };
        (h_new, cache)
    }

    /// Backpropagates `dh_new` through one step. Accumulates parameter
    /// gradients into `grads`, input gradient into `dx`, returns `dL/dh_prev`.
    pub fn step_backward(&self, cache: &GruCache<T>, dh_new: &[T], grads: &mut GruParams<T>, dx: &mut [T]) -> Vec<T> {
        let d_h = self.hidden_dim();
        let one = T::one();
        let mut dh_prev = vec![T::zero(); d_h];
        let mut da_h = vec![T::zero(); d_h];
        let mut da_z = vec![T::zero(); d_h];
        for i in 0..d_h {
            let (z, c, h) = (cache.z[i], cache.c[i], cache.h_prev[i]);
            let g = dh_new[i];
            dh_prev[i] = g * (one - z);
            da_h[i] = g * z * (one - c * c);
            da_z[i] = g * (c - h) * z * (one - z);
        }

        // candidate
        outer_acc(&cache.x, &da_h, grads.u_h.data_mut());
        outer_acc(&cache.rh, &da_h, grads.w_h.data_mut());
        add_into(grads.b_h.data_mut(), &da_h);
        mat_vec_acc(self.u_h.data(), &da_h, dx);
        let mut d_rh = vec![T::zero(); d_h];
        mat_vec_acc(self.w_h.data(), &da_h, &mut d_rh);

        let mut da_r = vec![T::zero(); d_h];
        for i in 0..d_h {
            let r = cache.r[i];
            dh_prev[i] += d_rh[i] * r;
            da_r[i] = d_rh[i] * cache.h_prev[i] * r * (one - r);
        }

        // update gate
        outer_acc(&cache.x, &da_z, grads.u_z.data_mut());
        outer_acc(&cache.h_prev, &da_z, grads.w_z.data_mut());
        add_into(grads.b_z.data_mut(), &da_z);
        mat_vec_acc(self.u_z.data(), &da_z, dx);
        mat_vec_acc(self.w_z.data(), &da_z, &mut dh_prev);

        // reset gate
        outer_acc(&cache.x, &da_r, grads.u_r.data_mut());
        outer_acc(&cache.h_prev, &da_r, grads.w_r.data_mut());
        add_into(grads.b_r.data_mut(), &da_r);
        mat_vec_acc(self.u_r.data(), &da_r, dx);
        mat_vec_acc(self.w_r.data(), &da_r, &mut dh_prev);

        dh_prev
    }
}

fn add_into<T: Scalar>(acc: &mut [T], v: &[T]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Activations saved by [`GruParams::step`] for the backward pass.
#[derive(Clone, Debug)]
pub struct GruCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    c: Vec<T>,
    rh: Vec<T>,
}

/// One GRU step.
pub fn gru_cell<T: Scalar>(x: &[T], h: &[T], p: &GruParams<T>) -> Result<Vec<T>> {
    p.validate()?;
    if x.len() != p.input_dim() || h.len() != p.hidden_dim() {
        return Err(Error::Shape(format!(
            "gru_cell: x {}, h {}, params ({}, {})",
            x.len(),
            h.len(),
            p.input_dim(),
            p.hidden_dim()
        )));
    }
    Ok(p.step(x, h).0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiGruParams<T> {
    pub fwd: GruParams<T>,
    pub bwd: GruParams<T>,
}

/// Per-step caches; `bwd` is stored in processing order (last position first).
#[derive(Clone, Debug)]
pub struct BiGruCache<T> {
    fwd: Vec<GruCache<T>>,
    bwd: Vec<GruCache<T>>,
}

impl<T: Scalar> BiGruParams<T> {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        BiGruParams {
            fwd: GruParams::zeros(d_in, d_h),
            bwd: GruParams::zeros(d_in, d_h),
        }
    }

    pub fn init(d_in: usize, d_h: usize, rng: &mut Rng) -> Self {
        let fwd = GruParams::init(d_in, d_h, rng);
        let bwd = GruParams::init(d_in, d_h, rng);
        BiGruParams { fwd, bwd }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden_dim()
    }

    /// Runs both directions over the `L × d_in` real-token rows, returning `L × 2·d_h`.
    pub fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BiGruCache<T>)> {
        let len = x.rows();
        if len == 0 {
            return Err(Error::EmptySequence);
        }
        if x.cols() != self.fwd.input_dim() {
            return Err(Error::Shape(format!(
                "bigru input width {}, expected {}",
                x.cols(),
                self.fwd.input_dim()
            )));
        }
        let d_h = self.fwd.hidden_dim();
        let mut out = Tensor::zeros(&[len, 2 * d_h]);
        let mut fwd_cache = Vec::with_capacity(len);
        let mut h = vec![T::zero(); d_h];
        for t in 0..len {
            let (h_new, cache) = self.fwd.step(x.row(t), &h);
            out.row_mut(t)[..d_h].copy_from_slice(&h_new);
            fwd_cache.push(cache);
            h = h_new;
        }
        let mut bwd_cache = Vec::with_capacity(len);
        let mut h = vec![T::zero(); d_h];
        for t in (0..len).rev() {
            let (h_new, cache) = self.bwd.step(x.row(t), &h);
            out.row_mut(t)[d_h..].copy_from_slice(&h_new);
            bwd_cache.push(cache);
            h = h_new;
        }
        Ok((
            out,
            BiGruCache {
                fwd: fwd_cache,
                bwd: bwd_cache,
            },
        ))
    }

    /// Backpropagation through time. Returns `dL/dx` (`L × d_in`).
    pub fn backward(&self, cache: &BiGruCache<T>, d_out: &Tensor<T>, grads: &mut BiGruParams<T>) -> Tensor<T> {
        let len = cache.fwd.len();
        let d_h = self.fwd.hidden_dim();
        let mut dx = Tensor::zeros(&[len, self.fwd.input_dim()]);

        let mut dh = vec![T::zero(); d_h];
        for t in (0..len).rev() {
            add_into(&mut dh, &d_out.row(t)[..d_h]);
            dh = self.fwd.step_backward(&cache.fwd[t], &dh, &mut grads.fwd, dx.row_mut(t));
        }
        let mut dh = vec![T::zero(); d_h];
        for s in (0..len).rev() {
            let t = len - 1 - s;
            add_into(&mut dh, &d_out.row(t)[d_h..]);
            dh = self.bwd.step_backward(&cache.bwd[s], &dh, &mut grads.bwd, dx.row_mut(t));
        }
        dx
    }
}

/// Validates a contiguous-prefix mask and returns the number of real positions.
pub(crate) fn prefix_length(mask: &[u8]) -> Result<usize> {
    let len = mask.iter().take_while(|&&m| m == 1).count();
    if mask[len..].iter().any(|&m| m != 0) {
        return Err(Error::InvalidArgument("mask is not a contiguous prefix".into()));
    }
    Ok(len)
}

/// Bidirectional GRU over a padded `max_len × d` sequence; masked output rows are zero.
pub fn bigru_forward<T: Scalar>(seq: &Tensor<T>, mask: &[u8], p: &BiGruParams<T>) -> Result<Tensor<T>> {
    if seq.rows() != mask.len() {
        return Err(Error::Shape(format!("sequence has {} rows, mask {}", seq.rows(), mask.len())));
    }
    p.fwd.validate()?;
    p.bwd.validate()?;
    let len = prefix_length(mask)?;
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    let real = Tensor::new(vec![len, seq.cols()], seq.data()[..len * seq.cols()].to_vec())?;
    let (out, _) = p.run(&real)?;
    let mut padded = Tensor::zeros(&[mask.len(), p.output_dim()]);
    padded.data_mut()[..out.len()].copy_from_slice(out.data());
    Ok(padded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{numeric_gradient, relative_error};

    #[test]
    fn zero_params_zero_state() {
        let p = GruParams::<f64>::zeros(3, 2);
        assert_eq!(gru_cell(&[1.0, -1.0, 2.0], &[0.0, 0.0], &p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_hand_case() {
        let mut p = GruParams::<f64>::zeros(1, 1);
        p.u_h.data_mut()[0] = 1.0;
        let h = gru_cell(&[1.0], &[0.0], &p).unwrap();
        assert!((h[0] - 0.5 * 1.0f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.38079).abs() < 1e-5);
    }

    #[test]
    fn shape_errors() {
        let p = GruParams::<f64>::zeros(3, 2);
        assert!(gru_cell(&[1.0], &[0.0, 0.0], &p).is_err());
        assert!(gru_cell(&[1.0, 1.0, 1.0], &[0.0], &p).is_err());
    }

    fn unflatten(template: &GruParams<f64>, flat: &[f64]) -> GruParams<f64> {
        let mut p = template.clone();
        let mut off = 0;
        for t in p.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        p
    }

    fn flatten(p: &GruParams<f64>) -> Vec<f64> {
        p.tensors().iter().flat_map(|t| t.data().to_vec()).collect()
    }

    #[test]
    fn cell_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::seed_from(seed);
            let mut p = GruParams::<f64>::init(3, 4, &mut rng);
            for b in [&mut p.b_r, &mut p.b_z, &mut p.b_h] {
                *b = Tensor::normal(&[4], 0.5, &mut rng);
            }
            let x: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.normal(0.0, 0.5)).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.normal(0.0, 1.0)).collect();
            let loss = |p: &GruParams<f64>, x: &[f64], h: &[f64]| {
                p.step(x, h).0.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            };
            let (_, cache) = p.step(&x, &h);
            let mut grads = GruParams::zeros(3, 4);
            let mut dx = vec![0.0; 3];
            let dh = p.step_backward(&cache, &w, &mut grads, &mut dx);

            let np = numeric_gradient(|f| loss(&unflatten(&p, f), &x, &h), &flatten(&p), 1e-5);
            let nx = numeric_gradient(|f| loss(&p, f, &h), &x, 1e-5);
            let nh = numeric_gradient(|f| loss(&p, &x, f), &h, 1e-5);
            assert!(relative_error(&flatten(&grads), &np) < 1e-4, "seed {seed}");
            assert!(relative_error(&dx, &nx) < 1e-4);
            assert!(relative_error(&dh, &nh) < 1e-4);
        }
    }

    #[test]
    fn bigru_single_step_concatenates_directions() {
        let mut rng = Rng::seed_from(9);
        let p = BiGruParams::<f64>::init(2, 3, &mut rng);
        let seq = Tensor::new(vec![2, 2], vec![0.4, -0.2, 0.0, 0.0]).unwrap();
        let out = bigru_forward(&seq, &[1, 0], &p).unwrap();
        let f = gru_cell(&[0.4, -0.2], &[0.0; 3], &p.fwd).unwrap();
        let b = gru_cell(&[0.4, -0.2], &[0.0; 3], &p.bwd).unwrap();
        assert_eq!(&out.row(0)[..3], f.as_slice());
        assert_eq!(&out.row(0)[3..], b.as_slice());
        assert!(out.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bigru_zero_params_and_errors() {
        let p = BiGruParams::<f64>::zeros(2, 3);
        let seq = Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = bigru_forward(&seq, &[1, 1, 0], &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(matches!(bigru_forward(&seq, &[0, 0, 0], &p), Err(Error::EmptySequence)));
        assert!(bigru_forward(&seq, &[1, 0, 1], &p).is_err());
    }

    #[test]
    fn bigru_padding_extension_is_invariant() {
        let mut rng = Rng::seed_from(4);
        let p = BiGruParams::<f64>::init(2, 3, &mut rng);
        let rows = Tensor::<f64>::normal(&[3, 2], 1.0, &mut rng);
        let mut padded = rows.data().to_vec();
        padded.extend([7.0, 7.0, 7.0, 7.0]);
        let a = bigru_forward(&rows, &[1, 1, 1], &p).unwrap();
        let b = bigru_forward(&Tensor::new(vec![5, 2], padded).unwrap(), &[1, 1, 1, 0, 0], &p).unwrap();
        assert_eq!(a.data(), &b.data()[..a.len()]);
        assert!(b.data()[a.len()..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bigru_gradient_matches_finite_differences() {
        let mut rng = Rng::seed_from(21);
        let p = BiGruParams::<f64>::init(3, 4, &mut rng);
        let x = Tensor::<f64>::normal(&[5, 3], 1.0, &mut rng);
        let w = Tensor::<f64>::normal(&[5, 8], 1.0, &mut rng);
        let loss = |p: &BiGruParams<f64>, x: &Tensor<f64>| {
            let (out, _) = p.run(x).unwrap();
            out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = p.run(&x).unwrap();
        let mut grads = BiGruParams::zeros(3, 4);
        let dx = p.backward(&cache, &w, &mut grads);
        let nx = numeric_gradient(|f| loss(&p, &Tensor::new(vec![5, 3], f.to_vec()).unwrap()), x.data(), 1e-5);
        assert!(relative_error(dx.data(), &nx) < 1e-4);
        let flat_f = flatten(&p.fwd);
        let nf = numeric_gradient(
            |f| {
                let q = BiGruParams {
                    fwd: unflatten(&p.fwd, f),
                    bwd: p.bwd.clone(),
                };
                loss(&q, &x)
            },
            &flat_f,
            1e-5,
        );
        assert!(relative_error(&flatten(&grads.fwd), &nf) < 1e-4);
        let nb = numeric_gradient(
            |f| {
                let q = BiGruParams {
                    fwd: p.fwd.clone(),
                    bwd: unflatten(&p.bwd, f),
                };
                loss(&q, &x)
            },
            &flatten(&p.bwd),
            1e-5,
        );
        assert!(relative_error(&flatten(&grads.bwd), &nb) < 1e-4);
    }
}
