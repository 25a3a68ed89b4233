use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};

use super::attention::{attn_backward, attn_forward, AttnCache};
use super::filter::{cutoff_mask, filter_backward, filter_forward, FilterCache};
use super::params::{ModelParams, Side};
use super::recurrent::{gru_backward, gru_forward, GruCache};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Real, SeqFft};

/// `T[seq] + E_P` for every block of a batch, stacked to `(B*L) x d`.
pub fn embed_lookup<T: Real>(seqs: &[Vec<usize>], params: &ModelParams<T>) -> Result<Array2<T>> {
    let len = params.pos_emb.nrows();
    let n = params.num_items();
    let mut out = Array2::zeros((seqs.len() * len, params.d()));
    for (b, seq) in seqs.iter().enumerate() {
        if seq.len() != len {
            return Err(Error::Shape(format!(
                "sequence has {} positions, expected {len}",
                seq.len()
            )));
        }
        for (j, &item) in seq.iter().enumerate() {
            if item > n {
                return Err(Error::Index(format!("item {item} outside [0, {n}]")));
            }
            let mut row = out.row_mut(b * len + j);
            row.assign(&params.item_emb.row(item));
            row += &params.pos_emb.row(j);
        }
    }
    Ok(out)
}

fn embed_backward<T: Real>(seqs: &[Vec<usize>], dx: &Array2<T>, grads: &mut ModelParams<T>) {
    let len = grads.pos_emb.nrows();
    for (b, seq) in seqs.iter().enumerate() {
        for (j, &item) in seq.iter().enumerate() {
            let r = dx.row(b * len + j);
            let mut ti = grads.item_emb.row_mut(item);
            ti += &r;
            let mut pj = grads.pos_emb.row_mut(j);
            pj += &r;
        }
    }
}

/// Saved activations of one batched encoder pass.
#[derive(Debug, Clone)]
pub struct EncodeCache<T> {
    side: Side,
    seqs: Vec<Vec<usize>>,
    filters: Vec<FilterCache<T>>,
    attns: Vec<AttnCache<T>>,
    gru: Option<GruCache<T>>,
}

impl<T: Real> EncodeCache<T> {
    pub fn attention(&self) -> &[AttnCache<T>] {
        &self.attns
    }
}

/// Static pieces of the architecture shared by every forward pass.
#[derive(Debug, Clone)]
pub struct Arch<T: Real> {
    pub cfg: ModelConfig,
    fft: SeqFft<T>,
    keep: Vec<bool>,
}

impl<T: Real> Arch<T> {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let fft = SeqFft::new(cfg.max_len)?;
        let freq: Vec<f64> = (0..=cfg.max_len / 2)
            .map(|k| k as f64 / cfg.max_len as f64)
            .collect();
        Ok(Arch {
            cfg: cfg.clone(),
            keep: cutoff_mask(&freq, cfg.q)?,
            fft,
        })
    }

    pub fn len(&self) -> usize {
        self.cfg.max_len
    }

    pub fn is_empty(&self) -> bool {
        self.cfg.max_len == 0
    }

    pub fn keep_mask(&self) -> &[bool] {
        &self.keep
    }

    /// Encodes a batch of length-`L` windows, returning the stacked
    /// `(B*L) x d` output and the cache for [`Arch::backward`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        params: &ModelParams<T>,
        side: Side,
        seqs: &[Vec<usize>],
        rng: &mut R,
        training: bool,
    ) -> Result<(Array2<T>, EncodeCache<T>)> {
        let w = params.encoder(side);
        let len = self.len();
        let p = self.cfg.dropout;
        let mut x = embed_lookup(seqs, params)?;
        let mut cache = EncodeCache {
            side,
            seqs: seqs.to_vec(),
            filters: Vec::with_capacity(w.filters.len()),
            attns: Vec::with_capacity(w.attns.len()),
            gru: None,
        };
        if let Some(g) = &w.gru {
            let (y, c) = gru_forward(&x, len, g);
            cache.gru = Some(c);
            return Ok((y, cache));
        }
        for f in &w.filters {
            let (y, c) = filter_forward(&x, f, &self.keep, &self.fft, p, rng, training)?;
            cache.filters.push(c);
            x = y;
        }
        for a in &w.attns {
            let (y, c) = attn_forward(&x, len, a, self.cfg.mask_mode, p, rng, training)?;
            cache.attns.push(c);
            x = y;
        }
        Ok((x, cache))
    }

    /// Accumulates gradients of the encoder's parameters (and of the shared
    /// embeddings) into `grads`.
    pub fn backward(
        &self,
        params: &ModelParams<T>,
        cache: &EncodeCache<T>,
        dout: &Array2<T>,
        grads: &mut ModelParams<T>,
    ) -> Result<()> {
        let side = cache.side;
        let len = self.len();
        let w = params.encoder(side);
        let mut dx = dout.clone();
        {
            let gw = grads.encoder_mut(side);
            if let (Some(g), Some(c)) = (&w.gru, &cache.gru) {
                dx = gru_backward(c, &dx, len, g, gw.gru.as_mut().unwrap());
            } else {
                for (k, c) in cache.attns.iter().enumerate().rev() {
                    dx = attn_backward(
                        c,
                        &dx,
                        len,
                        &w.attns[k],
                        self.cfg.mask_mode,
                        &mut gw.attns[k],
                    );
                }
                for (k, c) in cache.filters.iter().enumerate().rev() {
                    dx = filter_backward(
                        c,
                        &dx,
                        &w.filters[k],
                        &self.keep,
                        &self.fft,
                        &mut gw.filters[k],
                    )?;
                }
            }
        }
        embed_backward(&cache.seqs, &dx, grads);
        Ok(())
    }

    /// Single-window convenience wrapper; returns `L x d`.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        params: &ModelParams<T>,
        side: Side,
        seq: &[usize],
        rng: &mut R,
        training: bool,
    ) -> Result<Array2<T>> {
        Ok(self
            .forward(params, side, &[seq.to_vec()], rng, training)?
            .0)
    }

    /// Last row of every block, as a `B x d` matrix. Inference only.
    pub fn last_rows(
        &self,
        params: &ModelParams<T>,
        side: Side,
        seqs: &[Vec<usize>],
    ) -> Result<Array2<T>> {
        // dropout is off, so the generator is never drawn from
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let (out, _) = self.forward(params, side, seqs, &mut rng, false)?;
        let len = self.len();
        let idx: Vec<usize> = (0..seqs.len()).map(|b| b * len + len - 1).collect();
        Ok(out.select(Axis(0), &idx))
    }
}
