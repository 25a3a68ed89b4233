//! Prediction head and the binary cross-entropy losses of both encoders.

use ndarray::{Array2, ArrayView1};

use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::{c, sigmoid, Real};
use crate::seqdata::PADDING;

pub const PROB_CLAMP: f64 = 1e-7;

fn clamp_prob<T: Real>(p: T) -> (T, bool) {
    let lo = c::<T>(PROB_CLAMP);
    let hi = T::one() - lo;
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

fn check_item<T: Real>(item: usize, params: &ModelParams<T>) -> Result<()> {
    if item == PADDING || item > params.num_items() {
        return Err(Error::Index(format!(
            "item {item} outside [1, {}]",
            params.num_items()
        )));
    }
    Ok(())
}

/// `sigmoid(row . T[item])`, clamped away from 0 and 1.
pub fn predict_prob<T: Real>(
    row: ArrayView1<'_, T>,
    item: usize,
    params: &ModelParams<T>,
) -> Result<T> {
    check_item(item, params)?;
    Ok(clamp_prob(sigmoid(row.dot(&params.item_emb.row(item)))).0)
}

/// One positive/negative pair, gradients accumulated into `drow` and the
/// item-embedding gradient. Returns the loss.
fn bce_pair<T: Real>(
    row: ArrayView1<'_, T>,
    pos: usize,
    neg: usize,
    params: &ModelParams<T>,
    weight: T,
    mut drow: ndarray::ArrayViewMut1<'_, T>,
    gitem: &mut Array2<T>,
) -> T {
    let mut loss = T::zero();
    for (item, positive) in [(pos, true), (neg, false)] {
        let e = params.item_emb.row(item);
        let s = sigmoid(row.dot(&e));
        let (p, clamped) = clamp_prob(s);
        // d/ds of -ln p is p - 1; of -ln(1 - p) is p. Zero where clamped.
        let (l, ds) = if positive {
            (-p.ln(), s - T::one())
        } else {
            (-(T::one() - p).ln(), s)
        };
        loss += l;
        if !clamped {
            let g = ds * weight;
            drow.scaled_add(g, &e);
            let mut ge = gitem.row_mut(item);
            ge.scaled_add(g, &row);
        }
    }
    loss
}

/// `-[ln P(pos) + ln(1 - P(neg))]`; a padding positive contributes 0.
pub fn past_loss<T: Real>(
    row: ArrayView1<'_, T>,
    pos: usize,
    neg: usize,
    params: &ModelParams<T>,
) -> Result<T> {
    if pos == PADDING {
        return Ok(T::zero());
    }
    let pp = predict_prob(row, pos, params)?;
    let pn = predict_prob(row, neg, params)?;
    Ok(-(pp.ln() + (T::one() - pn).ln()))
}

/// Sum over positions of the pairwise loss, skipping padding targets.
pub fn future_loss<T: Real>(
    r: &Array2<T>,
    targets: &[usize],
    negatives: &[usize],
    params: &ModelParams<T>,
) -> Result<T> {
    if targets.len() != r.nrows() || negatives.len() != r.nrows() {
        return Err(Error::Shape(
            "targets and negatives must have one entry per row".into(),
        ));
    }
    if targets.iter().all(|t| *t == PADDING) {
        return Err(Error::Numeric("every future target is padding".into()));
    }
    let mut total = T::zero();
    for (l, (&t, &n)) in targets.iter().zip(negatives).enumerate() {
        total += past_loss(r.row(l), t, n, params)?;
    }
    Ok(total)
}

/// Batched pairwise loss over selected rows of a stacked encoder output.
///
/// `terms` lists `(row, positive, negative)`; padding positives are
/// skipped. Every term is multiplied by `weight` in the gradient. Returns
/// the unweighted loss sum and `dL/d out`.
pub fn pair_loss_grad<T: Real>(
    out: &Array2<T>,
    terms: &[(usize, usize, usize)],
    params: &ModelParams<T>,
    weight: T,
    gitem: &mut Array2<T>,
) -> Result<(T, Array2<T>)> {
    let mut dout = Array2::zeros(out.dim());
    let mut total = T::zero();
    for &(row, pos, neg) in terms {
        if pos == PADDING {
            continue;
        }
        check_item(pos, params)?;
        check_item(neg, params)?;
        total += bce_pair(
            out.row(row),
            pos,
            neg,
            params,
            weight,
            dout.row_mut(row),
            gitem,
        );
    }
    Ok((total, dout))
}
