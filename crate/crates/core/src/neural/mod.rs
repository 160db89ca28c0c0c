//! Deterministic numeric core: tensors, layer forward/backward passes, losses,
//! Adam, seeded RNG and finite-difference gradient checking.
//!
//! Layers are generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for gradient checks.

mod adam;
mod attention;
mod gradcheck;
mod gru;
mod layers;
mod rng;
mod tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

pub use adam::{AdamConfig, AdamState};
pub use attention::{attention, AttentionCache, AttentionParams};
pub use gradcheck::{grad_check, numeric_gradient, relative_error, GradCheckReport};
pub use gru::{bigru_forward, gru_cell, BiGruCache, BiGruParams, GruCache, GruParams};
pub use layers::{
    binary_cross_entropy, categorical_cross_entropy, dense, dense_backward, dropout,
    embedding_backward, embedding_forward, embedding_lookup, sigmoid, softmax, DropoutMask,
    PROB_CLAMP,
};
pub use rng::Rng;

pub(crate) use attention::ATTENTION_TENSOR_NAMES;
pub(crate) use gru::GRU_TENSOR_NAMES;
pub(crate) use layers::{bce_logit_grad, cce_logit_grad};
pub use tensor::Tensor;

/// Floating-point element type of the numeric core.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    const DTYPE: &'static str;

    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    fn lit(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    fn lit(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

// Row-major dense kernels shared by the layers.

/// `out[j] += Σ_i x[i] · m[i, j]` for `m` of shape `x.len() × out.len()`.
#[inline]
pub(crate) fn vec_mat_acc<T: Scalar>(x: &[T], m: &[T], out: &mut [T]) {
    let cols = out.len();
    debug_assert_eq!(m.len(), x.len() * cols);
    for (xi, row) in x.iter().zip(m.chunks_exact(cols)) {
        if *xi == T::zero() {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(row) {
            *o += *xi * w;
        }
    }
}

/// `out[j] += Σ_k m[j, k] · x[k]` for `m` of shape `out.len() × x.len()`.
#[inline]
pub(crate) fn mat_vec_acc<T: Scalar>(m: &[T], x: &[T], out: &mut [T]) {
    let cols = x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `m[i, j] += a[i] · b[j]`.
#[inline]
pub(crate) fn outer_acc<T: Scalar>(a: &[T], b: &[T], m: &mut [T]) {
    let cols = b.len();
    debug_assert_eq!(m.len(), a.len() * cols);
    for (ai, row) in a.iter().zip(m.chunks_exact_mut(cols)) {
        if *ai == T::zero() {
            continue;
        }
        for (mij, &bj) in row.iter_mut().zip(b) {
            *mij += *ai * bj;
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
