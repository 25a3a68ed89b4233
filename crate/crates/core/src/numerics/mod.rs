//! Numeric primitives shared by every trainable layer.
//!
//! Everything here is generic over [`Real`] so the same code runs in 64-bit
//! for gradient checks and in 32-bit for training.

mod adam;
mod fft;
mod gradcheck;
mod ops;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fft::{irfft_seq, rfft_seq, ComplexSpectrum, SeqFft};
pub use gradcheck::{check_gradients, GradCheckReport, ParamBlock};
pub use ops::{
    dropout, dropout_mask, gelu, gelu_grad, layer_norm, layer_norm_backward, layer_norm_rows,
    log_softmax, sigmoid, softmax, softmax_rows, softmax_rows_backward, LayerNormCache,
    LAYER_NORM_EPS,
};

/// Floating-point element type used by models and numeric kernels.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + FftNum
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Name written into checkpoint manifests.
    const DTYPE: &'static str;

    fn from_f64_lossy(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";

    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Shorthand for lifting an `f64` literal into `T`.
#[inline]
pub fn c<T: Real>(v: f64) -> T {
    T::from_f64_lossy(v)
}
