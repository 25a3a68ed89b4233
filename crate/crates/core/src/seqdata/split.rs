use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Leave-one-out split: last item for test, the one before for validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    /// Same vocabularies as the source, sequences shortened by two.
    pub train: Dataset,
    pub valid_target: Vec<usize>,
    pub test_target: Vec<usize>,
    pub full: Vec<Vec<usize>>,
}

impl SplitDataset {
    pub fn num_users(&self) -> usize {
        self.full.len()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items
    }

    /// History visible when scoring the validation target.
    pub fn valid_history(&self, user: usize) -> &[usize] {
        &self.train.sequences[user]
    }

    /// History visible when scoring the test target (includes the
    /// validation item).
    pub fn test_history(&self, user: usize) -> &[usize] {
        let s = &self.full[user];
        &s[..s.len() - 1]
    }
}

pub fn split_leave_one_out(dataset: &Dataset) -> Result<SplitDataset> {
    let mut train = dataset.clone();
    let mut valid_target = Vec::with_capacity(dataset.num_users());
    let mut test_target = Vec::with_capacity(dataset.num_users());
    for (u, seq) in train.sequences.iter_mut().enumerate() {
        let n = seq.len();
        if n < 3 {
            return Err(Error::Split {
                user: dataset.user_ids[u].clone(),
                len: n,
                need: 3,
            });
        }
        test_target.push(seq[n - 1]);
        valid_target.push(seq[n - 2]);
        seq.truncate(n - 2);
    }
    Ok(SplitDataset {
        train,
        valid_target,
        test_target,
        full: dataset.sequences.clone(),
    })
}
