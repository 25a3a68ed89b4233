//! Category preference distributions and their KL divergence, comparing the
//! categories a user actually consumes with those of a model's top-K list.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::score_all;
use super::protocol::{encode_histories, eval_case, EvalTarget};
use crate::encoder::{Arch, ModelParams, Side};
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::seqdata::{window_ending_at, SplitDataset};

pub const PREFERENCE_EPS: f64 = 1e-12;

/// `p(c) = A_c / sum_c' A_c'`, counting every category of every item.
pub fn preference_distribution(
    items: &[usize],
    item_categories: &[Vec<usize>],
    num_categories: usize,
) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; num_categories];
    for &i in items {
        let cats = item_categories
            .get(i)
            .ok_or_else(|| Error::Index(format!("item {i} has no category entry")))?;
        for &c in cats {
            if c >= num_categories {
                return Err(Error::Index(format!(
                    "category {c} outside [0, {num_categories})"
                )));
            }
            counts[c] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Err(Error::Analysis(
            "none of the items carries a category".into(),
        ));
    }
    Ok(counts.into_iter().map(|a| a / total).collect())
}

/// Mean over users of `sum_c p(c) ln(p(c) / max(q(c), eps))`.
pub fn preference_kl(real: &[Vec<f64>], predicted: &[Vec<f64>], eps: f64) -> Result<f64> {
    if real.len() != predicted.len() || real.is_empty() {
        return Err(Error::Shape(format!(
            "{} real and {} predicted distributions",
            real.len(),
            predicted.len()
        )));
    }
    let mut total = 0.0;
    for (p, q) in real.iter().zip(predicted) {
        if p.len() != q.len() {
            return Err(Error::Shape(
                "distributions over different category counts".into(),
            ));
        }
        total += p
            .iter()
            .zip(q)
            .filter(|(pc, _)| **pc > 0.0)
            .map(|(pc, qc)| pc * (pc / qc.max(eps)).ln())
            .sum::<f64>();
    }
    Ok(total / real.len() as f64)
}

/// The `k` highest-scoring items, ties to the smaller id.
pub fn top_k<T: Real>(scores: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..=scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b - 1]
            .partial_cmp(&scores[a - 1])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Items whose categories define a user's real preference at test time:
/// the inference window plus the test item.
pub fn real_items(split: &SplitDataset, user: usize, len: usize) -> Vec<usize> {
    let hist = split.test_history(user);
    let mut items: Vec<usize> = window_ending_at(hist, hist.len(), len)
        .into_iter()
        .filter(|&i| i != 0)
        .collect();
    items.push(split.test_target[user]);
    items
}

/// One user's predicted distribution under one model.
pub fn predicted_distributions<T: Real>(
    arch: &Arch<T>,
    params: &ModelParams<T>,
    side: Side,
    split: &SplitDataset,
    users: &[usize],
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    let ds = &split.train;
    let hist: Vec<&[usize]> = users
        .iter()
        .map(|&u| {
            eval_case(split, u, EvalTarget::Test)
                .map(|c| c.0)
                .unwrap_or(&[])
        })
        .collect();
    let rows = encode_histories(arch, params, side, &hist)?;
    (0..users.len())
        .map(|b| {
            let scores = score_all(rows.row(b), params);
            preference_distribution(&top_k(&scores, k), &ds.item_categories, ds.num_categories())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceReport {
    pub users: usize,
    pub top_k: usize,
    /// KL of the reference model (for example the unguided one).
    pub kl_a: f64,
    pub kl_b: f64,
    /// `(kl_a - kl_b) / kl_a`; positive when model b is closer to the truth.
    pub relative_improvement: f64,
    pub relative_improvement_pct: String,
}

pub fn relative_improvement(kl_a: f64, kl_b: f64) -> f64 {
    if kl_a == 0.0 {
        0.0
    } else {
        (kl_a - kl_b) / kl_a
    }
}

pub fn format_pct(v: f64) -> String {
    format!("{:+.1}%", v * 100.0)
}

/// Per-user distributions behind a [`PreferenceReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTable {
    pub users: Vec<usize>,
    pub real: Vec<Vec<f64>>,
    pub model_a: Vec<Vec<f64>>,
    pub model_b: Vec<Vec<f64>>,
}

impl PreferenceTable {
    /// `user,category,real_p,model_a_p,model_b_p` rows with external ids.
    pub fn to_csv(&self, split: &SplitDataset) -> String {
        let ds = &split.train;
        let mut out = String::from("user,category,real_p,model_a_p,model_b_p\n");
        for (k, &u) in self.users.iter().enumerate() {
            for c in 0..ds.num_categories() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    ds.user_ids[u],
                    ds.category_names[c],
                    self.real[k][c],
                    self.model_a[k][c],
                    self.model_b[k][c]
                );
            }
        }
        out
    }
}

/// Compares two models by the KL between real and top-K category
/// distributions. Users whose real items carry no category are skipped.
#[allow(clippy::too_many_arguments)]
pub fn analyze_preferences<T: Real>(
    arch_a: &Arch<T>,
    params_a: &ModelParams<T>,
    side_a: Side,
    arch_b: &Arch<T>,
    params_b: &ModelParams<T>,
    side_b: Side,
    split: &SplitDataset,
    k: usize,
) -> Result<(PreferenceReport, PreferenceTable)> {
    let ds = &split.train;
    if !ds.has_categories() {
        return Err(Error::Analysis("the dataset has no category data".into()));
    }
    let len = arch_a.len();
    let mut users = Vec::new();
    let mut real = Vec::new();
    for u in 0..split.num_users() {
        if eval_case(split, u, EvalTarget::Test).is_none() {
            continue;
        }
        match preference_distribution(
            &real_items(split, u, len),
            &ds.item_categories,
            ds.num_categories(),
        ) {
            Ok(p) => {
                users.push(u);
                real.push(p);
            }
            Err(Error::Analysis(_)) => {
                log::warn!("user {} has no categorised items, skipped", ds.user_ids[u])
            }
            Err(e) => return Err(e),
        }
    }
    if users.is_empty() {
        return Err(Error::Analysis("no user has categorised items".into()));
    }
    let model_a = predicted_distributions(arch_a, params_a, side_a, split, &users, k)?;
    let model_b = predicted_distributions(arch_b, params_b, side_b, split, &users, k)?;
    let kl_a = preference_kl(&real, &model_a, PREFERENCE_EPS)?;
    let kl_b = preference_kl(&real, &model_b, PREFERENCE_EPS)?;
    let rel = relative_improvement(kl_a, kl_b);
    Ok((
        PreferenceReport {
            users: users.len(),
            top_k: k,
            kl_a,
            kl_b,
            relative_improvement: rel,
            relative_improvement_pct: format_pct(rel),
        },
        PreferenceTable {
            users,
            real,
            model_a,
            model_b,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_examples() {
        // item 1 -> A, item 2 -> B, item 3 -> {A, B}
        let cats = vec![vec![], vec![0], vec![1], vec![0, 1]];
        let p = preference_distribution(&[1, 1, 2], &cats, 2).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            preference_distribution(&[3], &cats, 2).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(matches!(
            preference_distribution(&[0], &cats, 2),
            Err(Error::Analysis(_))
        ));
    }

    #[test]
    // the frozen hand-evaluated value, not ln 2 itself
    #[allow(clippy::approx_constant)]
    fn kl_examples() {
        let p = vec![vec![1.0, 0.0]];
        let q = vec![vec![0.5, 0.5]];
        assert_eq!(preference_kl(&p, &p, PREFERENCE_EPS).unwrap(), 0.0);
        let v = preference_kl(&p, &q, PREFERENCE_EPS).unwrap();
        assert!((v - 0.693_147).abs() < 1e-6);
        let two = preference_kl(
            &[p[0].clone(), p[0].clone()],
            &[p[0].clone(), q[0].clone()],
            PREFERENCE_EPS,
        )
        .unwrap();
        assert!((two - 0.346_574).abs() < 1e-6);
        // zero support in the prediction is guarded by eps
        let hard = preference_kl(&[vec![0.5, 0.5]], &[vec![1.0, 0.0]], PREFERENCE_EPS).unwrap();
        assert!(hard.is_finite() && hard > 0.0);
    }

    #[test]
    fn improvement_formatting() {
        let r = relative_improvement(0.0085, 0.0070);
        assert_eq!(format_pct(r), "+17.6%");
        assert_eq!(format_pct(relative_improvement(0.01, 0.012)), "-20.0%");
    }

    #[test]
    fn top_k_breaks_ties_by_id() {
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 0.5], 2), vec![2, 3]);
        assert_eq!(top_k(&[0.0f64; 4], 3), vec![1, 2, 3]);
    }
}
