//! Synthetic users whose category preference drifts over time.
//!
//! Items are split into contiguous category blocks. Each user has a current
//! favourite category; at every step it moves to the next category (mod C)
//! with probability `drift_rate`. The consumed item's category is the
//! favourite with probability `focus`, otherwise uniform over the other
//! categories. Within a category, items follow a Zipf-like popularity and
//! a user never consumes the same item twice.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_categories: usize,
    pub drift_rate: f64,
    /// Inclusive range of sequence lengths.
    pub seq_len_range: (usize, usize),
    pub seed: u64,
    pub focus: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 50,
            num_items: 20,
            num_categories: 4,
            drift_rate: 0.1,
            seq_len_range: (8, 15),
            seed: 7,
            focus: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// Favourite category at every step of every user.
    pub trajectories: Vec<Vec<usize>>,
    pub config: SyntheticConfig,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.seq_len_range;
        if self.num_categories < 2 {
            return Err(Error::config("num_categories", "need at least 2"));
        }
        if self.num_items < self.num_categories {
            return Err(Error::config(
                "num_items",
                format!(
                    "{} items cannot cover {} categories",
                    self.num_items, self.num_categories
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.drift_rate) {
            return Err(Error::config("drift_rate", "must lie in [0, 1]"));
        }
        if !(self.focus > 0.0 && self.focus <= 1.0) {
            return Err(Error::config("focus", "must lie in (0, 1]"));
        }
        if self.num_users == 0 {
            return Err(Error::config("num_users", "must be positive"));
        }
        if lo < 3 || lo > hi {
            return Err(Error::config(
                "seq_len_range",
                format!("bad range [{lo}, {hi}], need 3 <= lo <= hi"),
            ));
        }
        if hi >= self.num_items {
            return Err(Error::config(
                "seq_len_range",
                format!(
                    "length {hi} leaves no negative items among {}",
                    self.num_items
                ),
            ));
        }
        Ok(())
    }

    /// Category of each item, indexed by item (entry 0 is padding).
    pub fn item_category(&self, item: usize) -> usize {
        // contiguous blocks, sizes differ by at most one
        (item - 1) * self.num_categories / self.num_items
    }
}

pub fn generate_synthetic_drift(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.num_categories;
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); c];
    for i in 1..=cfg.num_items {
        blocks[cfg.item_category(i)].push(i);
    }

    let mut sequences = Vec::with_capacity(cfg.num_users);
    let mut trajectories = Vec::with_capacity(cfg.num_users);
    for _ in 0..cfg.num_users {
        let len = rng.random_range(cfg.seq_len_range.0..=cfg.seq_len_range.1);
        let mut fav = rng.random_range(0..c);
        let mut used = vec![false; cfg.num_items + 1];
        let mut seq = Vec::with_capacity(len);
        let mut traj = Vec::with_capacity(len);
        for step in 0..len {
            if step > 0 && rng.random::<f64>() < cfg.drift_rate {
                fav = (fav + 1) % c;
            }
            traj.push(fav);
            let mut cat = if rng.random::<f64>() < cfg.focus {
                fav
            } else {
                (fav + 1 + rng.random_range(0..c - 1)) % c
            };
            // fall back to the nearest following category with unused items
            while blocks[cat].iter().all(|&i| used[i]) {
                cat = (cat + 1) % c;
            }
            let free: Vec<usize> = blocks[cat].iter().copied().filter(|&i| !used[i]).collect();
            let weights: Vec<f64> = free
                .iter()
                .map(|&i| {
                    let rank = blocks[cat].iter().position(|&j| j == i).unwrap();
                    1.0 / (rank as f64 + 1.0)
                })
                .collect();
            let pick = free[WeightedIndex::new(&weights)
                .map_err(|e| Error::Sampling(e.to_string()))?
                .sample(&mut rng)];
            used[pick] = true;
            seq.push(pick);
        }
        sequences.push(seq);
        trajectories.push(traj);
    }

    let names = (0..c).map(|k| format!("c{k}")).collect();
    let mut item_categories = vec![Vec::new(); cfg.num_items + 1];
    for (i, cats) in item_categories.iter_mut().enumerate().skip(1) {
        cats.push(cfg.item_category(i));
    }
    let dataset = Dataset::from_sequences(sequences, cfg.num_items)?
        .with_categories(names, item_categories)?;
    Ok(SyntheticDataset {
        dataset,
        trajectories,
        config: cfg.clone(),
    })
}
