//! Per-epoch `(user, target)` examples and their fully materialised windows.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::error::Result;
use crate::guiding::guided_rows;
use crate::seqdata::{build_pair, item_at, next_targets, sample_negative, Dataset, PADDING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Example {
    pub user: usize,
    /// 1-based target position, at least 2.
    pub t: usize,
}

/// Generator for one independent stream, keyed on the run seed and a tuple
/// of tags such as `(epoch, phase, batch, chunk)`.
pub fn stream_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in tags {
        h = (h ^ t).wrapping_mul(0x0100_0000_01b3);
        h ^= h >> 29;
    }
    rng.set_stream(h);
    rng
}

pub(crate) const TAG_ORDER: u64 = 1;
pub(crate) const TAG_PREPARE: u64 = 2;
pub(crate) const TAG_PAST: u64 = 3;
pub(crate) const TAG_FUTURE: u64 = 4;

/// Shuffled examples for one epoch, a deterministic function of
/// `(seed, epoch)`. Users contribute every target in `[2, |seq|]`, or a
/// sample of `targets_per_user` of them without replacement.
pub fn epoch_examples(train: &Dataset, cfg: &TrainConfig, epoch: usize) -> Vec<Example> {
    let mut rng = stream_rng(cfg.seed, &[TAG_ORDER, epoch as u64]);
    let mut out = Vec::new();
    for (user, seq) in train.sequences.iter().enumerate() {
        if seq.len() < 2 {
            continue;
        }
        let mut ts: Vec<usize> = (2..=seq.len()).collect();
        if let Some(k) = cfg.targets_per_user {
            if k < ts.len() {
                let (chosen, _) = ts.partial_shuffle(&mut rng, k);
                let mut chosen = chosen.to_vec();
                chosen.sort_unstable();
                ts = chosen;
            }
        }
        out.extend(ts.into_iter().map(|t| Example { user, t }));
    }
    out.shuffle(&mut rng);
    out
}

/// Everything both encoders need for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prepared {
    pub user: usize,
    pub t: usize,
    pub history: Vec<usize>,
    pub target: usize,
    pub negative: usize,
    /// Global window as fed to the future encoder (reversed for R2L).
    pub future_input: Vec<usize>,
    /// Next-item target of every input row; padding rows are skipped.
    pub future_targets: Vec<usize>,
    pub future_negatives: Vec<usize>,
    /// `(alpha index, row of future_input)` pairs for the guiding loss.
    pub guided: Vec<(usize, usize)>,
}

/// Window geometry needed by [`prepare`].
#[derive(Debug, Clone, Copy)]
pub struct WindowSpec {
    pub len: usize,
    pub horizon: usize,
    pub r2l: bool,
}

pub fn prepare<R: Rng + ?Sized>(
    seq: &[usize],
    ex: Example,
    spec: WindowSpec,
    exclude: &HashSet<usize>,
    num_items: usize,
    rng: &mut R,
) -> Result<Prepared> {
    let len = spec.len;
    let pair = build_pair(seq, ex.t, len, spec.horizon)?;
    let end = pair.global_end;
    let rows = guided_rows(len, spec.horizon, pair.available_future);
    let (future_input, future_targets, guided) = if spec.r2l {
        let mut input = pair.global.clone();
        input.reverse();
        // reversed row l holds position end - l and predicts the one before it
        let targets = (0..len)
            .map(|l| item_at(seq, end as isize - l as isize - 1))
            .collect();
        let guided = rows.iter().map(|&(i, r)| (i, len - 1 - r)).collect();
        (input, targets, guided)
    } else {
        (pair.global.clone(), next_targets(seq, end, len), rows)
    };
    let mut future_negatives = Vec::with_capacity(len);
    for &tg in &future_targets {
        future_negatives.push(if tg == PADDING {
            PADDING
        } else {
            sample_negative(exclude, num_items, rng)?
        });
    }
    Ok(Prepared {
        user: ex.user,
        t: ex.t,
        target: seq[ex.t - 1],
        negative: sample_negative(exclude, num_items, rng)?,
        history: pair.history,
        future_input,
        future_targets,
        future_negatives,
        guided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn ds() -> Dataset {
        Dataset::from_sequences(vec![(1..=9).collect(), vec![3, 4, 5], vec![7]], 12).unwrap()
    }

    #[test]
    fn epochs_are_deterministic_and_cover_targets() {
        let cfg = Config::default().train;
        let a = epoch_examples(&ds(), &cfg, 3);
        assert_eq!(a, epoch_examples(&ds(), &cfg, 3));
        assert_ne!(a, epoch_examples(&ds(), &cfg, 4));
        assert_eq!(a.len(), 8 + 2);
        let mut seen: Vec<_> = a.iter().map(|e| (e.user, e.t)).collect();
        seen.sort();
        let want: Vec<_> = (2..=9)
            .map(|t| (0, t))
            .chain((2..=3).map(|t| (1, t)))
            .collect();
        assert_eq!(seen, want);
    }

    #[test]
    fn subsampling_caps_targets() {
        let mut cfg = Config::default().train;
        cfg.targets_per_user = Some(2);
        let a = epoch_examples(&ds(), &cfg, 0);
        assert_eq!(a.iter().filter(|e| e.user == 0).count(), 2);
        assert_eq!(a.iter().filter(|e| e.user == 1).count(), 2);
        let distinct: HashSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), a.len());
    }

    #[test]
    fn prepared_windows_line_up() {
        let seq: Vec<usize> = (1..=9).collect();
        let ex: HashSet<usize> = seq.iter().copied().collect();
        let mut rng = stream_rng(0, &[]);
        let spec = WindowSpec {
            len: 5,
            horizon: 2,
            r2l: false,
        };
        let p = prepare(&seq, Example { user: 0, t: 4 }, spec, &ex, 12, &mut rng).unwrap();
        assert_eq!(p.history, vec![0, 0, 1, 2, 3]);
        assert_eq!(p.target, 4);
        assert_eq!(p.future_input, vec![2, 3, 4, 5, 6]);
        assert_eq!(p.future_targets, vec![3, 4, 5, 6, 7]);
        // alpha_1 sits on the row predicting v_t
        assert_eq!(p.guided[0], (0, 1));
        assert_eq!(p.future_targets[p.guided[0].1], 4);
        assert_eq!(p.guided.len(), 4);
        assert!(p.future_negatives.iter().all(|n| (10..=12).contains(n)));
        assert!((10..=12).contains(&p.negative));
    }

    #[test]
    fn r2l_reverses_and_remaps() {
        let seq: Vec<usize> = (1..=9).collect();
        let ex: HashSet<usize> = seq.iter().copied().collect();
        let spec = WindowSpec {
            len: 5,
            horizon: 2,
            r2l: true,
        };
        let p = prepare(
            &seq,
            Example { user: 0, t: 4 },
            spec,
            &ex,
            12,
            &mut stream_rng(0, &[]),
        )
        .unwrap();
        assert_eq!(p.future_input, vec![6, 5, 4, 3, 2]);
        assert_eq!(p.future_targets, vec![5, 4, 3, 2, 1]);
        // chronological row 1 (item 3) is reversed row 3
        assert_eq!(p.guided[0], (0, 3));
        assert_eq!(p.future_input[3], 3);
        let short = prepare(
            &seq,
            Example { user: 0, t: 2 },
            spec,
            &ex,
            12,
            &mut stream_rng(0, &[]),
        )
        .unwrap();
        assert_eq!(short.future_input, vec![4, 3, 2, 1, 0]);
        assert_eq!(short.future_targets, vec![3, 2, 1, 0, 0]);
    }
}
