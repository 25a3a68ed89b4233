//! Single-layer GRU over each `L`-row block, left to right, followed by a
//! per-position linear projection.

use ndarray::{s, Array2, Axis};

use super::filter::col_sum;
use super::params::GruParams;
use crate::numerics::{sigmoid, Real};

#[derive(Debug, Clone)]
pub struct GruCache<T> {
    x: Array2<T>,
    /// Hidden states in step-major order: row `j*B + b` is step `j` of block `b`.
    h: Array2<T>,
    r: Array2<T>,
    z: Array2<T>,
    n: Array2<T>,
    /// `h_prev W_hn + b_hn`, needed for the reset-gate gradient.
    ghn: Array2<T>,
    blocks: usize,
}

fn step_rows(blocks: usize, len: usize, j: usize) -> Vec<usize> {
    (0..blocks).map(|b| b * len + j).collect()
}

pub fn gru_forward<T: Real>(
    x: &Array2<T>,
    len: usize,
    p: &GruParams<T>,
) -> (Array2<T>, GruCache<T>) {
    let d = x.ncols();
    let blocks = x.nrows() / len;
    let xi = x.dot(&p.w_ih) + &p.b_ih;
    let mut h = Array2::zeros((blocks * len, d));
    let mut r = Array2::zeros((blocks * len, d));
    let mut z = Array2::zeros((blocks * len, d));
    let mut n = Array2::zeros((blocks * len, d));
    let mut ghn = Array2::zeros((blocks * len, d));
    let mut prev = Array2::<T>::zeros((blocks, d));
    for j in 0..len {
        let xs = xi.select(Axis(0), &step_rows(blocks, len, j));
        let gh = prev.dot(&p.w_hh) + &p.b_hh;
        let st = s![j * blocks..(j + 1) * blocks, ..];
        let rj = (&xs.slice(s![.., 0..d]) + &gh.slice(s![.., 0..d])).mapv(sigmoid);
        let zj = (&xs.slice(s![.., d..2 * d]) + &gh.slice(s![.., d..2 * d])).mapv(sigmoid);
        let ghn_j = gh.slice(s![.., 2 * d..]).to_owned();
        let nj = (&xs.slice(s![.., 2 * d..]) + &(&rj * &ghn_j)).mapv(|v| v.tanh());
        let hj = &nj + &(&zj * &(&prev - &nj));
        r.slice_mut(st).assign(&rj);
        z.slice_mut(st).assign(&zj);
        n.slice_mut(st).assign(&nj);
        ghn.slice_mut(st).assign(&ghn_j);
        h.slice_mut(st).assign(&hj);
        prev = hj;
    }
    // back to block-major order for the projection
    let order: Vec<usize> = (0..blocks * len)
        .map(|i| (i % len) * blocks + i / len)
        .collect();
    let hb = h.select(Axis(0), &order);
    let out = hb.dot(&p.w_out) + &p.b_out;
    (
        out,
        GruCache {
            x: x.clone(),
            h,
            r,
            z,
            n,
            ghn,
            blocks,
        },
    )
}

pub fn gru_backward<T: Real>(
    cache: &GruCache<T>,
    dout: &Array2<T>,
    len: usize,
    p: &GruParams<T>,
    g: &mut GruParams<T>,
) -> Array2<T> {
    let d = dout.ncols();
    let blocks = cache.blocks;
    let order: Vec<usize> = (0..blocks * len)
        .map(|i| (i % len) * blocks + i / len)
        .collect();
    let hb = cache.h.select(Axis(0), &order);
    g.w_out += &hb.t().dot(dout);
    g.b_out += &col_sum(dout);
    let dh_all = dout.dot(&p.w_out.t());

    let mut dxi = Array2::<T>::zeros((blocks * len, 3 * d));
    let mut carry = Array2::<T>::zeros((blocks, d));
    for j in (0..len).rev() {
        let st = s![j * blocks..(j + 1) * blocks, ..];
        let rows = step_rows(blocks, len, j);
        let dh = dh_all.select(Axis(0), &rows) + &carry;
        let (rj, zj, nj, ghn) = (
            cache.r.slice(st),
            cache.z.slice(st),
            cache.n.slice(st),
            cache.ghn.slice(st),
        );
        let prev = if j == 0 {
            Array2::zeros((blocks, d))
        } else {
            cache
                .h
                .slice(s![(j - 1) * blocks..j * blocks, ..])
                .to_owned()
        };
        let one = T::one();
        let dn = &dh * &zj.mapv(|v| one - v);
        let dz = &dh * &(&prev - &nj);
        let dan = &dn * &nj.mapv(|v| one - v * v);
        let dr = &dan * &ghn;
        let daz = &dz * &zj.mapv(|v| v * (one - v));
        let dar = &dr * &rj.mapv(|v| v * (one - v));
        let mut dgh = Array2::<T>::zeros((blocks, 3 * d));
        dgh.slice_mut(s![.., 0..d]).assign(&dar);
        dgh.slice_mut(s![.., d..2 * d]).assign(&daz);
        dgh.slice_mut(s![.., 2 * d..]).assign(&(&dan * &rj));
        for (k, &row) in rows.iter().enumerate() {
            let mut dst = dxi.row_mut(row);
            dst.slice_mut(s![0..d]).assign(&dar.row(k));
            dst.slice_mut(s![d..2 * d]).assign(&daz.row(k));
            dst.slice_mut(s![2 * d..]).assign(&dan.row(k));
        }
        g.w_hh += &prev.t().dot(&dgh);
        g.b_hh += &col_sum(&dgh);
        carry = &dh * &zj + &dgh.dot(&p.w_hh.t());
    }
    g.w_ih += &cache.x.t().dot(&dxi);
    g.b_ih += &col_sum(&dxi);
    dxi.dot(&p.w_ih.t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Config, EncoderKind};
    use crate::encoder::params::EncoderWeights;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_scalar_recurrence() {
        let mut cfg = Config::default().model;
        cfg.d = 3;
        cfg.encoder = EncoderKind::Recurrent;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = EncoderWeights::<f64>::new(&cfg, &mut rng).gru.unwrap();
        p.w_ih.mapv_inplace(|v| v * 30.0);
        p.w_hh.mapv_inplace(|v| v * 30.0);
        let x = Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0..1.0));
        let (out, _) = gru_forward(&x, 4, &p);
        // independent per-block loop with explicit gate formulas
        for b in 0..2 {
            let mut h = [0.0f64; 3];
            for j in 0..4 {
                let xr = x.row(b * 4 + j);
                let gate = |w: &Array2<f64>, v: &[f64], col: usize| {
                    (0..3).map(|i| v[i] * w[[i, col]]).sum::<f64>()
                };
                let xv: Vec<f64> = xr.to_vec();
                let mut hn = [0.0; 3];
                for u in 0..3 {
                    let r = sigmoid(gate(&p.w_ih, &xv, u) + gate(&p.w_hh, &h, u));
                    let z = sigmoid(gate(&p.w_ih, &xv, 3 + u) + gate(&p.w_hh, &h, 3 + u));
                    let n = (gate(&p.w_ih, &xv, 6 + u) + r * gate(&p.w_hh, &h, 6 + u)).tanh();
                    hn[u] = (1.0 - z) * n + z * h[u];
                }
                h = hn;
                for u in 0..3 {
                    let y: f64 = (0..3).map(|i| h[i] * p.w_out[[i, u]]).sum();
                    assert!((y - out[[b * 4 + j, u]]).abs() < 1e-12);
                }
            }
        }
    }
}
