use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::{c, Real};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-8;

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Normalise a single row, then apply the elementwise affine.
pub fn layer_norm<T: Real>(x: &[T], gain: &[T], bias: &[T], eps: T) -> Vec<T> {
    let n = T::from_usize(x.len()).unwrap();
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
    let inv = T::one() / (var + eps).sqrt();
    x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(v, (g, b))| (*v - mean) * inv * *g + *b)
        .collect()
}

/// Saved activations for [`layer_norm_backward`].
#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    xhat: Array2<T>,
    inv_std: Vec<T>,
}

/// Row-wise layer norm of an `L x d` matrix; `gain` and `bias` are `1 x d`.
pub fn layer_norm_rows<T: Real>(
    x: &Array2<T>,
    gain: &Array2<T>,
    bias: &Array2<T>,
    eps: T,
) -> (Array2<T>, LayerNormCache<T>) {
    let d = T::from_usize(x.ncols()).unwrap();
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| *v * *v).sum::<T>() / d;
        let inv = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| v * inv);
        inv_std.push(inv);
    }
    let y = &xhat * gain + bias;
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns `dx` and accumulates into `dgain`/`dbias`.
pub fn layer_norm_backward<T: Real>(
    cache: &LayerNormCache<T>,
    gain: &Array2<T>,
    dy: &Array2<T>,
    dgain: &mut Array2<T>,
    dbias: &mut Array2<T>,
) -> Array2<T> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d = T::from_usize(dy.ncols()).unwrap();
    let mut dx = dy * gain;
    for ((mut row, xh), inv) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(&cache.inv_std)
    {
        let mean_g = row.sum() / d;
        let mean_gx = row.iter().zip(xh).map(|(g, x)| *g * *x).sum::<T>() / d;
        Zip::from(&mut row)
            .and(&xh)
            .for_each(|g, x| *g = *inv * (*g - mean_g - *x * mean_gx));
    }
    dx
}

pub fn softmax<T: Real>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|v| (*v - max).exp()).collect();
    let sum = exps.iter().copied().sum::<T>();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax<T: Real>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = x.iter().map(|v| (*v - max).exp()).sum::<T>().ln() + max;
    x.iter().map(|v| *v - lse).collect()
}

/// Row-wise softmax. `-inf` entries act as a mask and map to exactly 0.
pub fn softmax_rows<T: Real>(m: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let mut out = m.to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Err(Error::Numeric(format!(
                "softmax row {i} is entirely masked"
            )));
        }
        if !max.is_finite() {
            return Err(Error::Numeric(format!(
                "softmax row {i} has non-finite entries"
            )));
        }
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(out)
}

/// Gradient of row-wise softmax: `z * (dz - rowsum(dz * z))`.
pub fn softmax_rows_backward<T: Real>(z: &Array2<T>, dz: &Array2<T>) -> Array2<T> {
    let mut out = dz * z;
    for (mut row, zr) in out.rows_mut().into_iter().zip(z.rows()) {
        let dot = row.sum();
        Zip::from(&mut row).and(&zr).for_each(|o, z| *o -= *z * dot);
    }
    out
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let inner = c::<T>(GELU_K) * (x + c::<T>(GELU_A) * x * x * x);
    c::<T>(0.5) * x * (T::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let k = c::<T>(GELU_K);
    let a = c::<T>(GELU_A);
    let inner = k * (x + a * x * x * x);
    let t = inner.tanh();
    let half = c::<T>(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + c::<T>(3.0) * a * x * x)
}

/// Inverted-dropout multiplier: entries are 0 or `1/(1-p)`. `None` means
/// the identity (inference mode or `p == 0`).
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(
    shape: (usize, usize),
    p: f64,
    rng: &mut R,
    training: bool,
) -> Option<Array2<T>> {
    if !training || p <= 0.0 {
        return None;
    }
    let keep = c::<T>(1.0 / (1.0 - p));
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    }))
}

pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Array2<T>,
    p: f64,
    rng: &mut R,
    training: bool,
) -> Array2<T> {
    match dropout_mask(x.dim(), p, rng, training) {
        Some(mask) => x * &mask,
        None => x.clone(),
    }
}
