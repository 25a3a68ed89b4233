//! Single-head causal self-attention block with a GELU feed-forward,
//! applied independently to each `L`-row block of a stacked batch.

use ndarray::{s, Array2};
use rand::Rng;

use super::filter::col_sum;
use super::params::AttnParams;
use crate::config::MaskMode;
use crate::error::Result;
use crate::numerics::{
    c, dropout_mask, gelu, gelu_grad, layer_norm_backward, layer_norm_rows, softmax_rows,
    softmax_rows_backward, LayerNormCache, Real, LAYER_NORM_EPS,
};

#[derive(Debug, Clone)]
pub struct AttnCache<T> {
    s: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Row-normalised attention per block, before literal-mode zeroing.
    probs: Vec<Array2<T>>,
    a: Array2<T>,
    drop1: Option<Array2<T>>,
    ln1: LayerNormCache<T>,
    o: Array2<T>,
    h1: Array2<T>,
    h2: Array2<T>,
    drop2: Option<Array2<T>>,
    ln2: LayerNormCache<T>,
}

impl<T: Real> AttnCache<T> {
    /// Attention matrix actually applied to the values of block `b`.
    pub fn attention(&self, b: usize, mode: MaskMode) -> Array2<T> {
        let mut z = self.probs[b].clone();
        if mode == MaskMode::Literal {
            zero_upper(&mut z);
        }
        z
    }
}

fn zero_upper<T: Real>(z: &mut Array2<T>) {
    let n = z.nrows();
    for i in 0..n {
        for j in i + 1..n {
            z[[i, j]] = T::zero();
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn attn_forward<T: Real, R: Rng + ?Sized>(
    s_in: &Array2<T>,
    len: usize,
    p: &AttnParams<T>,
    mode: MaskMode,
    dropout: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Array2<T>, AttnCache<T>)> {
    let d = s_in.ncols();
    let scale = T::one() / c::<T>((d as f64).sqrt());
    let q = s_in.dot(&p.wq);
    let k = s_in.dot(&p.wk);
    let v = s_in.dot(&p.wv);
    let blocks = s_in.nrows() / len;
    let mut a = Array2::zeros(s_in.dim());
    let mut probs = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let rows = s![b * len..(b + 1) * len, ..];
        let mut logits = q.slice(rows).dot(&k.slice(rows).t());
        logits.mapv_inplace(|x| x * scale);
        if mode == MaskMode::Additive {
            for i in 0..len {
                for j in i + 1..len {
                    logits[[i, j]] = T::neg_infinity();
                }
            }
        }
        let pz = softmax_rows(logits.view())?;
        let zb = if mode == MaskMode::Literal {
            let mut z = pz.clone();
            zero_upper(&mut z);
            z
        } else {
            pz.clone()
        };
        a.slice_mut(rows).assign(&zb.dot(&v.slice(rows)));
        probs.push(pz);
    }
    let u = a.dot(&p.w1) + &p.b1;
    let drop1 = dropout_mask::<T, R>(u.dim(), dropout, rng, training);
    let mut z1 = match &drop1 {
        Some(m) => u * m,
        None => u,
    };
    z1 += s_in;
    let eps = c::<T>(LAYER_NORM_EPS);
    let (o, ln1) = layer_norm_rows(&z1, &p.ln1_gain, &p.ln1_bias, eps);
    let h1 = o.dot(&p.w2) + &p.b2;
    let h2 = h1.mapv(gelu);
    let h = h2.dot(&p.w3) + &p.b3;
    let drop2 = dropout_mask::<T, R>(h.dim(), dropout, rng, training);
    let mut z2 = match &drop2 {
        Some(m) => h * m,
        None => h,
    };
    z2 += &o;
    let (out, ln2) = layer_norm_rows(&z2, &p.ln2_gain, &p.ln2_bias, eps);
    Ok((
        out,
        AttnCache {
            s: s_in.clone(),
            q,
            k,
            v,
            probs,
            a,
            drop1,
            ln1,
            o,
            h1,
            h2,
            drop2,
            ln2,
        },
    ))
}

pub fn attn_backward<T: Real>(
    cache: &AttnCache<T>,
    dout: &Array2<T>,
    len: usize,
    p: &AttnParams<T>,
    mode: MaskMode,
    g: &mut AttnParams<T>,
) -> Array2<T> {
    let d = dout.ncols();
    let scale = T::one() / c::<T>((d as f64).sqrt());
    let dz2 = layer_norm_backward(
        &cache.ln2,
        &p.ln2_gain,
        dout,
        &mut g.ln2_gain,
        &mut g.ln2_bias,
    );
    let dh = match &cache.drop2 {
        Some(m) => &dz2 * m,
        None => dz2.clone(),
    };
    g.w3 += &cache.h2.t().dot(&dh);
    g.b3 += &col_sum(&dh);
    let mut dh1 = dh.dot(&p.w3.t());
    ndarray::Zip::from(&mut dh1)
        .and(&cache.h1)
        .for_each(|g, x| *g *= gelu_grad(*x));
    g.w2 += &cache.o.t().dot(&dh1);
    g.b2 += &col_sum(&dh1);
    let d_o = dz2 + dh1.dot(&p.w2.t());

    let dz1 = layer_norm_backward(
        &cache.ln1,
        &p.ln1_gain,
        &d_o,
        &mut g.ln1_gain,
        &mut g.ln1_bias,
    );
    let du = match &cache.drop1 {
        Some(m) => &dz1 * m,
        None => dz1.clone(),
    };
    g.w1 += &cache.a.t().dot(&du);
    g.b1 += &col_sum(&du);
    let da = du.dot(&p.w1.t());

    let mut dq = Array2::zeros(dout.dim());
    let mut dk = Array2::zeros(dout.dim());
    let mut dv = Array2::zeros(dout.dim());
    for (b, pz) in cache.probs.iter().enumerate() {
        let rows = s![b * len..(b + 1) * len, ..];
        let da_b = da.slice(rows);
        let vb = cache.v.slice(rows);
        let mut dzb = da_b.dot(&vb.t());
        let zb = if mode == MaskMode::Literal {
            zero_upper(&mut dzb);
            let mut z = pz.clone();
            zero_upper(&mut z);
            z
        } else {
            pz.clone()
        };
        dv.slice_mut(rows).assign(&zb.t().dot(&da_b));
        let mut dlogits = softmax_rows_backward(pz, &dzb);
        dlogits.mapv_inplace(|x| x * scale);
        dq.slice_mut(rows)
            .assign(&dlogits.dot(&cache.k.slice(rows)));
        dk.slice_mut(rows)
            .assign(&dlogits.t().dot(&cache.q.slice(rows)));
    }
    g.wq += &cache.s.t().dot(&dq);
    g.wk += &cache.s.t().dot(&dk);
    g.wv += &cache.s.t().dot(&dv);
    dz1 + dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t())
}
