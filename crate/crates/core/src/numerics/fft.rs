//! Real FFT along the sequence (row) axis of an `L x d` matrix.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Real;
use crate::error::{Error, Result};

/// One-sided spectrum of a real `L x d` matrix: `c = L/2 + 1` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum<T> {
    pub re: Array2<T>,
    pub im: Array2<T>,
    /// Normalised frequencies `k / L`, cycles per step.
    pub freq: Vec<f64>,
    len: usize,
}

impl<T: Real> ComplexSpectrum<T> {
    pub fn zeros(len: usize, cols: usize) -> Self {
        let bins = len / 2 + 1;
        ComplexSpectrum {
            re: Array2::zeros((bins, cols)),
            im: Array2::zeros((bins, cols)),
            freq: frequencies(len),
            len,
        }
    }

    /// Sequence length the spectrum was computed from.
    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn bins(&self) -> usize {
        self.re.nrows()
    }

    pub fn cols(&self) -> usize {
        self.re.ncols()
    }
}

fn frequencies(len: usize) -> Vec<f64> {
    (0..=len / 2).map(|k| k as f64 / len as f64).collect()
}

/// Forward/inverse plans for one sequence length.
///
/// Building a plan is the expensive part of an FFT, so layers hold one of
/// these and reuse it for every example.
#[derive(Clone)]
pub struct SeqFft<T: Real> {
    len: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for SeqFft<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeqFft").field("len", &self.len).finish()
    }
}

impl<T: Real> SeqFft<T> {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Numeric("sequence length must be at least 1".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(SeqFft {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn rfft(&self, x: ArrayView2<'_, T>) -> Result<ComplexSpectrum<T>> {
        if x.nrows() != self.len {
            return Err(Error::Shape(format!(
                "rfft planned for length {}, got {} rows",
                self.len,
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in rfft input".into()));
        }
        let cols = x.ncols();
        let mut out = ComplexSpectrum::zeros(self.len, cols);
        let bins = out.bins();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.len];
        for j in 0..cols {
            for (b, v) in buf.iter_mut().zip(x.column(j)) {
                *b = Complex::new(*v, T::zero());
            }
            self.forward.process(&mut buf);
            for (k, c) in buf.iter().take(bins).enumerate() {
                out.re[[k, j]] = c.re;
                out.im[[k, j]] = c.im;
            }
        }
        Ok(out)
    }

    /// Inverse of [`SeqFft::rfft`]. Imaginary parts of the DC bin (and of
    /// the Nyquist bin for even lengths) are ignored, as they must be zero
    /// for any spectrum of a real signal.
    pub fn irfft(&self, spec: &ComplexSpectrum<T>) -> Result<Array2<T>> {
        let bins = self.len / 2 + 1;
        if spec.bins() != bins || spec.im.dim() != spec.re.dim() {
            return Err(Error::Shape(format!(
                "spectrum has {} bins, length {} needs {}",
                spec.bins(),
                self.len,
                bins
            )));
        }
        let cols = spec.cols();
        let scale = T::one() / T::from_usize(self.len).unwrap();
        let mut out = Array2::zeros((self.len, cols));
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.len];
        for j in 0..cols {
            buf[0] = Complex::new(spec.re[[0, j]], T::zero());
            for k in 1..bins {
                let mut v = Complex::new(spec.re[[k, j]], spec.im[[k, j]]);
                if 2 * k == self.len {
                    v.im = T::zero();
                }
                buf[k] = v;
                if k != self.len - k {
                    buf[self.len - k] = v.conj();
                }
            }
            self.inverse.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                out[[i, j]] = b.re * scale;
            }
        }
        Ok(out)
    }
}

/// Column-wise real DFT along the sequence axis.
pub fn rfft_seq<T: Real>(x: ArrayView2<'_, T>) -> Result<ComplexSpectrum<T>> {
    SeqFft::new(x.nrows())?.rfft(x)
}

/// Inverse of [`rfft_seq`] for a sequence of length `len`.
pub fn irfft_seq<T: Real>(spec: &ComplexSpectrum<T>, len: usize) -> Result<Array2<T>> {
    if spec.len != len {
        return Err(Error::Shape(format!(
            "spectrum was computed for length {}, asked to invert to {len}",
            spec.len
        )));
    }
    SeqFft::new(len)?.irfft(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(L^2) reference DFT, kept independent of rustfft.
    fn naive_rfft(x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (len, cols) = x.dim();
        let bins = len / 2 + 1;
        let mut re = Array2::zeros((bins, cols));
        let mut im = Array2::zeros((bins, cols));
        for k in 0..bins {
            for j in 0..cols {
                for n in 0..len {
                    let theta = -2.0 * std::f64::consts::PI * (k * n) as f64 / len as f64;
                    re[[k, j]] += x[[n, j]] * theta.cos();
                    im[[k, j]] += x[[n, j]] * theta.sin();
                }
            }
        }
        (re, im)
    }

    fn random(len: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((len, cols), |_| rng.random_range(-3.0..3.0))
    }

    #[test]
    fn constant_column_is_pure_dc() {
        let x: Array2<f64> = array![[1.0], [1.0], [1.0], [1.0]];
        let s = rfft_seq(x.view()).unwrap();
        assert_eq!(s.freq, vec![0.0, 0.25, 0.5]);
        let expect = [(4.0, 0.0), (0.0, 0.0), (0.0, 0.0)];
        for (k, (r, i)) in expect.iter().enumerate() {
            assert!((s.re[[k, 0]] - r).abs() < 1e-12);
            assert!((s.im[[k, 0]] - i).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let x: Array2<f64> = array![[1.0], [0.0], [0.0], [0.0]];
        let s = rfft_seq(x.view()).unwrap();
        for k in 0..3 {
            assert!((s.re[[k, 0]] - 1.0).abs() < 1e-12);
            assert!(s.im[[k, 0]].abs() < 1e-12);
        }
    }

    #[test]
    fn zeros_map_to_zeros() {
        let x = Array2::<f64>::zeros((6, 3));
        let s = rfft_seq(x.view()).unwrap();
        assert!(s.re.iter().chain(s.im.iter()).all(|v| *v == 0.0));
        let back = irfft_seq(&s, 6).unwrap();
        assert!(back.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let mut s = ComplexSpectrum::<f64>::zeros(4, 1);
        s.re[[0, 0]] = 4.0;
        let x = irfft_seq(&s, 4).unwrap();
        for v in x.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft_and_round_trips() {
        for (i, len) in [1usize, 2, 3, 7, 8, 50, 64, 127, 128]
            .into_iter()
            .enumerate()
        {
            let x = random(len, 5, 17 + i as u64);
            let s = rfft_seq(x.view()).unwrap();
            let (re, im) = naive_rfft(&x);
            let dft_err = (&s.re - &re)
                .iter()
                .chain((&s.im - &im).iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(dft_err <= 1e-9, "len {len}: naive DFT mismatch {dft_err}");
            let back = irfft_seq(&s, len).unwrap();
            let rt = (&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(rt <= 1e-9, "len {len}: round trip error {rt}");
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let mut x = Array2::<f64>::zeros((4, 2));
        x[[1, 1]] = f64::NAN;
        assert!(matches!(rfft_seq(x.view()), Err(Error::Numeric(_))));
        let s = ComplexSpectrum::<f64>::zeros(4, 2);
        assert!(matches!(irfft_seq(&s, 6), Err(Error::Shape(_))));
    }
}
