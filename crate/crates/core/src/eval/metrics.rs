use std::cmp::Ordering;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::config::Protocol;
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::Real;

/// `pred_row . T[v]` for `v = 1..=n`; element `v - 1` belongs to item `v`.
pub fn score_all<T: Real>(pred_row: ArrayView1<'_, T>, params: &ModelParams<T>) -> Vec<T> {
    let n = params.num_items();
    params
        .item_emb
        .slice(ndarray::s![1..=n, ..])
        .dot(&pred_row)
        .to_vec()
}

/// 1-based rank of `truth` among `candidates`: one plus the candidates that
/// score strictly higher or score the same with a smaller item id.
pub fn rank_of_truth<T: Real>(scores: &[T], truth: usize, candidates: &[usize]) -> Result<usize> {
    if !candidates.contains(&truth) {
        return Err(Error::Protocol(format!(
            "truth item {truth} is not a candidate"
        )));
    }
    let score = |i: usize| -> Result<T> {
        if i == 0 || i > scores.len() {
            return Err(Error::Index(format!(
                "candidate {i} outside [1, {}]",
                scores.len()
            )));
        }
        Ok(scores[i - 1])
    };
    let s = score(truth)?;
    if s.is_nan() {
        return Err(Error::Numeric(format!("score of item {truth} is NaN")));
    }
    let mut rank = 1;
    for &c in candidates {
        if c == truth {
            continue;
        }
        match score(c)?.partial_cmp(&s) {
            Some(Ordering::Greater) => rank += 1,
            Some(Ordering::Equal) if c < truth => rank += 1,
            _ => {}
        }
    }
    Ok(rank)
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn mrr(rank: usize) -> f64 {
    1.0 / rank as f64
}

/// Averages over evaluated users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub users: usize,
    #[serde(rename = "HR@1")]
    pub hr1: f64,
    #[serde(rename = "HR@5")]
    pub hr5: f64,
    #[serde(rename = "HR@10")]
    pub hr10: f64,
    #[serde(rename = "NDCG@1")]
    pub ndcg1: f64,
    #[serde(rename = "NDCG@5")]
    pub ndcg5: f64,
    #[serde(rename = "NDCG@10")]
    pub ndcg10: f64,
    #[serde(rename = "MRR")]
    pub mrr: f64,
}

impl MetricsReport {
    pub fn from_ranks(protocol: Protocol, seed: u64, ranks: &[usize]) -> Self {
        let n = ranks.len().max(1) as f64;
        let mean = |f: &dyn Fn(usize) -> f64| ranks.iter().map(|&r| f(r)).sum::<f64>() / n;
        MetricsReport {
            protocol,
            seed,
            users: ranks.len(),
            hr1: mean(&|r| hr_at_k(r, 1)),
            hr5: mean(&|r| hr_at_k(r, 5)),
            hr10: mean(&|r| hr_at_k(r, 10)),
            ndcg1: mean(&|r| ndcg_at_k(r, 1)),
            ndcg5: mean(&|r| ndcg_at_k(r, 5)),
            ndcg10: mean(&|r| ndcg_at_k(r, 10)),
            mrr: mean(&|r| mrr(r)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn score_examples() {
        let mut cfg = Config::default().model;
        cfg.d = 2;
        cfg.d_ff = 2;
        let mut p = ModelParams::<f64>::init(&cfg, 2, &mut ChaCha8Rng::seed_from_u64(0));
        p.item_emb = array![[9.0, 9.0], [1.0, 0.0], [0.0, 1.0]];
        let row = array![2.0, 1.0];
        let s = score_all(row.view(), &p);
        assert_eq!(s, vec![2.0, 1.0]);
        assert_eq!(rank_of_truth(&s, 1, &[1, 2]).unwrap(), 1);
        let zero = score_all(array![0.0, 0.0].view(), &p);
        assert_eq!(rank_of_truth(&zero, 1, &[1, 2]).unwrap(), 1);
        assert_eq!(rank_of_truth(&zero, 2, &[1, 2]).unwrap(), 2);
    }

    #[test]
    fn rank_rules() {
        let scores = vec![0.5; 100];
        assert_eq!(
            rank_of_truth(&scores, 1, &(1..=100).collect::<Vec<_>>()).unwrap(),
            1
        );
        assert_eq!(
            rank_of_truth(&scores, 100, &(1..=100).collect::<Vec<_>>()).unwrap(),
            100
        );
        assert!(matches!(
            rank_of_truth(&scores, 7, &[1, 2]),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn metric_examples() {
        for k in [1, 5, 10] {
            assert_eq!((hr_at_k(1, k), ndcg_at_k(1, k), mrr(1)), (1.0, 1.0, 1.0));
        }
        assert_eq!(hr_at_k(3, 5), 1.0);
        assert!((ndcg_at_k(3, 5) - 0.5).abs() < 1e-15);
        assert!((mrr(3) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((hr_at_k(11, 10), ndcg_at_k(11, 10)), (0.0, 0.0));
    }

    #[test]
    fn report_json_keys() {
        let r = MetricsReport::from_ranks(Protocol::Sampled99, 1, &[1, 3, 20]);
        assert_eq!(r.hr1, r.ndcg1);
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "HR@1", "HR@5", "HR@10", "NDCG@5", "NDCG@10", "MRR", "users", "protocol", "seed",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["protocol"], "sampled99");
    }
}
