use std::collections::HashSet;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{rank_of_truth, score_all, MetricsReport};
use crate::config::{Protocol, TrainConfig};
use crate::encoder::{Arch, ModelParams, Side};
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::seqdata::{sample_distinct_negatives, window_ending_at, SplitDataset};

pub const SAMPLED_NEGATIVES: usize = 99;
/// Users encoded per forward pass.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    Valid,
    Test,
}

/// Encoder used at inference: the past encoder, unless the run trained
/// only the future one.
pub fn inference_side(train: &TrainConfig) -> Side {
    if train.future_only {
        Side::Future
    } else {
        Side::Past
    }
}

/// History and truth for one user, or `None` when there is no history.
pub fn eval_case(
    split: &SplitDataset,
    user: usize,
    target: EvalTarget,
) -> Option<(&[usize], usize)> {
    let (hist, truth) = match target {
        EvalTarget::Valid => (split.valid_history(user), split.valid_target[user]),
        EvalTarget::Test => (split.test_history(user), split.test_target[user]),
    };
    (!hist.is_empty()).then_some((hist, truth))
}

/// Candidate set of one user. Sampled negatives come from a generator keyed
/// on `(seed, user, target)` so results do not depend on worker count.
pub fn candidates(
    split: &SplitDataset,
    user: usize,
    truth: usize,
    target: EvalTarget,
    protocol: Protocol,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = split.num_items();
    match protocol {
        Protocol::Full => Ok((1..=n).collect()),
        Protocol::Sampled99 => {
            let seen: HashSet<usize> = split.full[user].iter().copied().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 * user as u64 + (target == EvalTarget::Test) as u64);
            let mut c = sample_distinct_negatives(&seen, n, SAMPLED_NEGATIVES, &mut rng)?;
            c.push(truth);
            Ok(c)
        }
    }
}

/// Inference rows for a set of histories (last `L` items of each).
pub fn encode_histories<T: Real>(
    arch: &Arch<T>,
    params: &ModelParams<T>,
    side: Side,
    histories: &[&[usize]],
) -> Result<Array2<T>> {
    let len = arch.len();
    let windows: Vec<Vec<usize>> = histories
        .iter()
        .map(|h| window_ending_at(h, h.len(), len))
        .collect();
    arch.last_rows(params, side, &windows)
}

/// Rank of the truth for every user with a non-empty history, in user order.
pub fn rank_users<T: Real>(
    arch: &Arch<T>,
    params: &ModelParams<T>,
    side: Side,
    split: &SplitDataset,
    target: EvalTarget,
    protocol: Protocol,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let mut users = Vec::with_capacity(split.num_users());
    for u in 0..split.num_users() {
        if eval_case(split, u, target).is_some() {
            users.push(u);
        } else {
            log::warn!("user {} has no history, skipped", split.train.user_ids[u]);
        }
    }
    let chunks: Vec<Result<Vec<(usize, usize)>>> = users
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let cases: Vec<(&[usize], usize)> = chunk
                .iter()
                .map(|&u| eval_case(split, u, target).unwrap())
                .collect();
            let hist: Vec<&[usize]> = cases.iter().map(|c| c.0).collect();
            let rows = encode_histories(arch, params, side, &hist)?;
            let mut out = Vec::with_capacity(chunk.len());
            for (k, &u) in chunk.iter().enumerate() {
                let truth = cases[k].1;
                let scores = score_all(rows.row(k), params);
                let cand = candidates(split, u, truth, target, protocol, seed)?;
                out.push((u, rank_of_truth(&scores, truth, &cand)?));
            }
            Ok(out)
        })
        .collect();
    let mut ranks = Vec::with_capacity(users.len());
    for c in chunks {
        ranks.extend(c?);
    }
    Ok(ranks)
}

pub fn evaluate<T: Real>(
    arch: &Arch<T>,
    params: &ModelParams<T>,
    side: Side,
    split: &SplitDataset,
    target: EvalTarget,
    protocol: Protocol,
    seed: u64,
) -> Result<MetricsReport> {
    let ranks = rank_users(arch, params, side, split, target, protocol, seed)?;
    if ranks.is_empty() {
        return Err(Error::Protocol("no user has an evaluation history".into()));
    }
    let r: Vec<usize> = ranks.iter().map(|x| x.1).collect();
    Ok(MetricsReport::from_ranks(protocol, seed, &r))
}
