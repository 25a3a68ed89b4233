//! Loss values and parameter gradients of one chunk of prepared examples,
//! for each training objective. Every loss is a sum over the chunk.

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::examples::Prepared;
use crate::config::GuidingConfig;
use crate::encoder::{pair_loss_grad, Arch, ModelParams, Side};
use crate::error::Result;
use crate::guiding::guiding_grad_at;
use crate::numerics::{c, Real};

/// Summed losses of a chunk, as `f64` for logging.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSums {
    pub lp: f64,
    pub lf: f64,
    pub lg: f64,
    pub examples: usize,
}

impl LossSums {
    pub fn add(&mut self, o: &LossSums) {
        self.lp += o.lp;
        self.lf += o.lf;
        self.lg += o.lg;
        self.examples += o.examples;
    }

    pub fn is_finite(&self) -> bool {
        self.lp.is_finite() && self.lf.is_finite() && self.lg.is_finite()
    }
}

/// Weights of the objective `L_p + w_f L_f + beta L_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub future_weight: f64,
    pub beta: f64,
    pub guiding: GuidingConfig,
    pub horizon: usize,
}

fn future_terms(batch: &[Prepared], len: usize) -> Vec<(usize, usize, usize)> {
    let mut terms = Vec::new();
    for (b, p) in batch.iter().enumerate() {
        for l in 0..len {
            terms.push((b * len + l, p.future_targets[l], p.future_negatives[l]));
        }
    }
    terms
}

fn past_terms(batch: &[Prepared], len: usize) -> Vec<(usize, usize, usize)> {
    batch
        .iter()
        .enumerate()
        .map(|(b, p)| (b * len + len - 1, p.target, p.negative))
        .collect()
}

/// Future encoder on its own loss (phase 1). Gradients reach the future
/// encoder and the shared embeddings only.
pub fn future_grad<T: Real>(
    arch: &Arch<T>,
    params: &ModelParams<T>,
    batch: &[Prepared],
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<(LossSums, ModelParams<T>)> {
    let len = arch.len();
    let mut grads = params.zeros_like();
    let inputs: Vec<Vec<usize>> = batch.iter().map(|p| p.future_input.clone()).collect();
    let (out, cache) = arch.forward(params, Side::Future, &inputs, rng, training)?;
    let (lf, dout) = pair_loss_grad(
        &out,
        &future_terms(batch, len),
        params,
        T::one(),
        &mut grads.item_emb,
    )?;
    arch.backward(params, &cache, &dout, &mut grads)?;
    let sums = LossSums {
        lf: lf.as_f64(),
        examples: batch.len(),
        ..Default::default()
    };
    Ok((sums, grads))
}

/// Inference-mode future outputs used as constant guiding targets.
pub fn frozen_future<T: Real>(
    arch: &Arch<T>,
    frozen: &ModelParams<T>,
    batch: &[Prepared],
) -> Result<Array2<T>> {
    let inputs: Vec<Vec<usize>> = batch.iter().map(|p| p.future_input.clone()).collect();
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    Ok(arch
        .forward(frozen, Side::Future, &inputs, &mut unused, false)?
        .0)
}

/// Past encoder on `L_p + beta L_g` with the future outputs `r` held
/// constant (phase 2). `r` is `None` when `beta` is zero.
pub fn past_grad<T: Real>(
    arch: &Arch<T>,
    params: &ModelParams<T>,
    r: Option<&Array2<T>>,
    batch: &[Prepared],
    obj: &Objective,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<(LossSums, ModelParams<T>)> {
    let len = arch.len();
    let mut grads = params.zeros_like();
    let histories: Vec<Vec<usize>> = batch.iter().map(|p| p.history.clone()).collect();
    let (out, cache) = arch.forward(params, Side::Past, &histories, rng, training)?;
    let (lp, mut dout) = pair_loss_grad(
        &out,
        &past_terms(batch, len),
        params,
        T::one(),
        &mut grads.item_emb,
    )?;
    let mut lg = 0.0;
    if let Some(r) = r {
        let beta = c::<T>(obj.beta);
        for (b, p) in batch.iter().enumerate() {
            let last = b * len + len - 1;
            let block = r.slice(s![b * len..(b + 1) * len, ..]);
            let g = guiding_grad_at(out.row(last), block, &p.guided, obj.horizon, &obj.guiding)?;
            lg += g.value.as_f64();
            dout.row_mut(last).scaled_add(beta, &g.dq);
        }
    }
    arch.backward(params, &cache, &dout, &mut grads)?;
    let sums = LossSums {
        lp: lp.as_f64(),
        lg,
        examples: batch.len(),
        ..Default::default()
    };
    Ok((sums, grads))
}

/// All three losses at once with gradients into both encoders; the
/// guiding term also flows back through the future encoder.
pub fn joint_grad<T: Real>(
    arch: &Arch<T>,
    params: &ModelParams<T>,
    batch: &[Prepared],
    obj: &Objective,
    rng_past: &mut ChaCha8Rng,
    rng_future: &mut ChaCha8Rng,
    training: bool,
) -> Result<(LossSums, ModelParams<T>)> {
    let len = arch.len();
    let mut grads = params.zeros_like();
    let inputs: Vec<Vec<usize>> = batch.iter().map(|p| p.future_input.clone()).collect();
    let (r, fcache) = arch.forward(params, Side::Future, &inputs, rng_future, training)?;
    let histories: Vec<Vec<usize>> = batch.iter().map(|p| p.history.clone()).collect();
    let (q, pcache) = arch.forward(params, Side::Past, &histories, rng_past, training)?;

    let wf = c::<T>(obj.future_weight);
    let (lf, mut dr) = pair_loss_grad(
        &r,
        &future_terms(batch, len),
        params,
        wf,
        &mut grads.item_emb,
    )?;
    let (lp, mut dq) = pair_loss_grad(
        &q,
        &past_terms(batch, len),
        params,
        T::one(),
        &mut grads.item_emb,
    )?;
    let beta = c::<T>(obj.beta);
    let mut lg = 0.0;
    for (b, p) in batch.iter().enumerate() {
        let last = b * len + len - 1;
        let rows = s![b * len..(b + 1) * len, ..];
        let g = guiding_grad_at(
            q.row(last),
            r.slice(rows),
            &p.guided,
            obj.horizon,
            &obj.guiding,
        )?;
        lg += g.value.as_f64();
        dq.row_mut(last).scaled_add(beta, &g.dq);
        dr.slice_mut(rows).scaled_add(beta, &g.dr);
    }
    arch.backward(params, &fcache, &dr, &mut grads)?;
    arch.backward(params, &pcache, &dq, &mut grads)?;
    let sums = LossSums {
        lp: lp.as_f64(),
        lf: lf.as_f64(),
        lg,
        examples: batch.len(),
    };
    Ok((sums, grads))
}
