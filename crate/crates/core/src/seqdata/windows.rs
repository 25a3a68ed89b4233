//! Fixed-length history and global windows. Positions are 1-based, so
//! `seq[0]` is `v_1`.

use super::dataset::PADDING;
use crate::error::{Error, Result};

/// A global window plus where it sits in the source sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalWindow {
    pub items: Vec<usize>,
    /// Real items at positions `t..=t+P`.
    pub available_future: usize,
    /// Position of the last realized element, `min(t+P, |seq|)`.
    pub end: usize,
}

/// Training example for target position `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePair {
    pub history: Vec<usize>,
    pub global: Vec<usize>,
    pub target_index: usize,
    pub available_future: usize,
    pub global_end: usize,
}

/// Item at 1-based position `p`, or padding when outside the sequence.
#[inline]
pub fn item_at(seq: &[usize], p: isize) -> usize {
    if p < 1 || p as usize > seq.len() {
        PADDING
    } else {
        seq[p as usize - 1]
    }
}

/// Left-padded window of length `len` whose last element is position `end`.
pub fn window_ending_at(seq: &[usize], end: usize, len: usize) -> Vec<usize> {
    let first = end as isize - len as isize + 1;
    (0..len).map(|k| item_at(seq, first + k as isize)).collect()
}

pub fn build_history(seq: &[usize], t: usize, len: usize) -> Result<Vec<usize>> {
    if t < 2 || t > seq.len() + 1 {
        return Err(Error::Index(format!(
            "history target {t} outside [2, {}]",
            seq.len() + 1
        )));
    }
    Ok(window_ending_at(seq, t - 1, len))
}

pub fn build_global(seq: &[usize], t: usize, len: usize, horizon: usize) -> Result<GlobalWindow> {
    if t < 2 || t > seq.len() {
        return Err(Error::Index(format!(
            "global target {t} outside [2, {}]",
            seq.len()
        )));
    }
    let end = (t + horizon).min(seq.len());
    Ok(GlobalWindow {
        items: window_ending_at(seq, end, len),
        available_future: (horizon + 1).min(seq.len() - t + 1),
        end,
    })
}

/// Next-item targets for a window ending at `end`: element `l` of the
/// window is followed by position `end - len + l + 1`. Missing items are
/// padding.
pub fn next_targets(seq: &[usize], end: usize, len: usize) -> Vec<usize> {
    window_ending_at(seq, end + 1, len)
}

pub fn build_pair(seq: &[usize], t: usize, len: usize, horizon: usize) -> Result<SequencePair> {
    let g = build_global(seq, t, len, horizon)?;
    Ok(SequencePair {
        history: build_history(seq, t, len)?,
        global: g.items,
        target_index: t,
        available_future: g.available_future,
        global_end: g.end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_examples() {
        assert_eq!(
            build_history(&[1, 2, 3], 4, 5).unwrap(),
            vec![0, 0, 1, 2, 3]
        );
        let s: Vec<usize> = (1..=7).collect();
        assert_eq!(build_history(&s, 8, 5).unwrap(), vec![3, 4, 5, 6, 7]);
        assert_eq!(build_history(&[1, 2], 2, 3).unwrap(), vec![0, 0, 1]);
        assert!(matches!(build_history(&[1, 2], 1, 3), Err(Error::Index(_))));
        assert!(matches!(build_history(&[1, 2], 4, 3), Err(Error::Index(_))));
    }

    #[test]
    fn global_examples() {
        let s: Vec<usize> = (1..=10).collect();
        let g = build_global(&s, 5, 5, 2).unwrap();
        assert_eq!((g.items, g.available_future), (vec![3, 4, 5, 6, 7], 3));

        let s: Vec<usize> = (1..=6).collect();
        let g = build_global(&s, 5, 5, 3).unwrap();
        assert_eq!(
            (g.items, g.available_future, g.end),
            (vec![2, 3, 4, 5, 6], 2, 6)
        );

        let g = build_global(&[1, 2, 3], 2, 5, 0).unwrap();
        assert_eq!((g.items, g.available_future), (vec![0, 0, 0, 1, 2], 1));

        assert!(matches!(
            build_global(&[1, 2, 3], 4, 5, 0),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn targets_shift_by_one() {
        let s: Vec<usize> = (1..=6).collect();
        assert_eq!(next_targets(&s, 4, 4), vec![2, 3, 4, 5]);
        assert_eq!(next_targets(&s, 6, 4), vec![4, 5, 6, 0]);
        assert_eq!(next_targets(&s, 2, 4), vec![0, 1, 2, 3]);
    }
}
