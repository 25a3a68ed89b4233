//! Frequency-domain low-pass layer: `LN(Dropout(IFFT(M * FFT(F))) + F)`.
//!
//! Inputs are stacks of `B` sequences, each `L` rows, so a batch is a
//! `(B*L) x d` matrix and the FFT runs over each `L`-row block.

use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::params::FilterParams;
use crate::error::{Error, Result};
use crate::numerics::{
    c, dropout_mask, layer_norm_backward, layer_norm_rows, ComplexSpectrum, LayerNormCache, Real,
    SeqFft, LAYER_NORM_EPS,
};

/// Number of lowest-frequency bins kept for quantile `q`.
pub fn keep_count(bins: usize, q: f64) -> usize {
    if q >= 1.0 {
        return bins;
    }
    ((q * bins as f64).round() as usize).clamp(1, bins)
}

/// Boolean keep-mask over an ascending frequency vector.
pub fn cutoff_mask(freq: &[f64], q: f64) -> Result<Vec<bool>> {
    if freq.is_empty() {
        return Err(Error::Numeric("empty frequency vector".into()));
    }
    if q.is_nan() || q <= 0.0 {
        return Err(Error::config("filter.q", "must be positive"));
    }
    let k = keep_count(freq.len(), q);
    Ok((0..freq.len()).map(|i| i < k).collect())
}

/// Multiplicity of a one-sided bin in the full spectrum (1 for DC and for
/// the Nyquist bin of even lengths, 2 otherwise).
fn bin_weight(k: usize, len: usize) -> f64 {
    if k == 0 || 2 * k == len {
        1.0
    } else {
        2.0
    }
}

#[derive(Debug, Clone)]
pub struct FilterCache<T> {
    /// Input spectra per block, kept only for learnable weights.
    spectra: Vec<ComplexSpectrum<T>>,
    drop: Option<Array2<T>>,
    ln: LayerNormCache<T>,
}

fn map_blocks<T: Real>(
    x: &Array2<T>,
    len: usize,
    mut f: impl FnMut(usize, ndarray::ArrayView2<'_, T>) -> Result<Array2<T>>,
) -> Result<Array2<T>> {
    let blocks = x.nrows() / len;
    let mut out = Array2::zeros(x.dim());
    for b in 0..blocks {
        let rows = s![b * len..(b + 1) * len, ..];
        let y = f(b, x.slice(rows))?;
        out.slice_mut(rows).assign(&y);
    }
    Ok(out)
}

/// Spectral part only, `IFFT(M * FFT(x))` per block with the boolean mask.
pub fn lowpass<T: Real>(x: &Array2<T>, keep: &[bool], fft: &SeqFft<T>) -> Result<Array2<T>> {
    if keep.iter().all(|k| *k) {
        return Ok(x.clone());
    }
    map_blocks(x, fft.len(), |_, blk| {
        let mut spec = fft.rfft(blk)?;
        for (k, kept) in keep.iter().enumerate() {
            if !kept {
                spec.re.row_mut(k).fill(T::zero());
                spec.im.row_mut(k).fill(T::zero());
            }
        }
        fft.irfft(&spec)
    })
}

fn complex_mul<T: Real>(
    spec: &ComplexSpectrum<T>,
    wr: &Array2<T>,
    wi: &Array2<T>,
) -> ComplexSpectrum<T> {
    let mut out = spec.clone();
    out.re = &spec.re * wr - &spec.im * wi;
    out.im = &spec.im * wr + &spec.re * wi;
    out
}

pub fn filter_forward<T: Real, R: Rng + ?Sized>(
    x: &Array2<T>,
    p: &FilterParams<T>,
    keep: &[bool],
    fft: &SeqFft<T>,
    dropout: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Array2<T>, FilterCache<T>)> {
    let mut spectra = Vec::new();
    let filtered = match (&p.weight_re, &p.weight_im) {
        (Some(wr), Some(wi)) => map_blocks(x, fft.len(), |_, blk| {
            let spec = fft.rfft(blk)?;
            let y = fft.irfft(&complex_mul(&spec, wr, wi))?;
            spectra.push(spec);
            Ok(y)
        })?,
        _ => lowpass(x, keep, fft)?,
    };
    let drop = dropout_mask::<T, R>(x.dim(), dropout, rng, training);
    let mut z = match &drop {
        Some(m) => filtered * m,
        None => filtered,
    };
    z += x;
    let (y, ln) = layer_norm_rows(&z, &p.ln_gain, &p.ln_bias, c(LAYER_NORM_EPS));
    Ok((y, FilterCache { spectra, drop, ln }))
}

/// Accumulates parameter gradients into `g` and returns the input gradient.
pub fn filter_backward<T: Real>(
    cache: &FilterCache<T>,
    dout: &Array2<T>,
    p: &FilterParams<T>,
    keep: &[bool],
    fft: &SeqFft<T>,
    g: &mut FilterParams<T>,
) -> Result<Array2<T>> {
    let dz = layer_norm_backward(&cache.ln, &p.ln_gain, dout, &mut g.ln_gain, &mut g.ln_bias);
    let dfilt = match &cache.drop {
        Some(m) => &dz * m,
        None => dz.clone(),
    };
    let len = fft.len();
    let dx_spectral = match (&p.weight_re, &p.weight_im) {
        (Some(wr), Some(wi)) => {
            let lf = c::<T>(len as f64);
            let (gwr, gwi) = (g.weight_re.as_mut().unwrap(), g.weight_im.as_mut().unwrap());
            map_blocks(&dfilt, len, |b, blk| {
                // Gradient wrt the filtered spectrum: (w_k / L) * FFT(dy).
                let mut dy_hat = fft.rfft(blk)?;
                for k in 0..dy_hat.bins() {
                    let w = c::<T>(bin_weight(k, len)) / lf;
                    dy_hat.re.row_mut(k).mapv_inplace(|v| v * w);
                    dy_hat.im.row_mut(k).mapv_inplace(|v| v * w);
                }
                let xs = &cache.spectra[b];
                *gwr += &(&dy_hat.re * &xs.re + &dy_hat.im * &xs.im);
                *gwi += &(&dy_hat.im * &xs.re - &dy_hat.re * &xs.im);
                let mut dx_hat = dy_hat.clone();
                dx_hat.re = &dy_hat.re * wr + &dy_hat.im * wi;
                dx_hat.im = &dy_hat.im * wr - &dy_hat.re * wi;
                // Adjoint of the forward transform: L * IFFT(G / w_k).
                for k in 0..dx_hat.bins() {
                    let s = lf / c::<T>(bin_weight(k, len));
                    dx_hat.re.row_mut(k).mapv_inplace(|v| v * s);
                    dx_hat.im.row_mut(k).mapv_inplace(|v| v * s);
                }
                fft.irfft(&dx_hat)
            })?
        }
        // The masked transform is self-adjoint.
        _ => lowpass(&dfilt, keep, fft)?,
    };
    Ok(dz + dx_spectral)
}

/// Sum over rows, shaped `1 x d`.
pub(crate) fn col_sum<T: Real>(a: &Array2<T>) -> Array2<T> {
    a.sum_axis(Axis(0)).insert_axis(Axis(0))
}
