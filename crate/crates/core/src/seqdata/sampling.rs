use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};

/// Above this excluded fraction, rejection sampling is replaced by drawing
/// from the explicit list of eligible items.
const REJECTION_LIMIT: f64 = 0.9;

/// Uniform item in `[1, n]` outside `exclude`.
pub fn sample_negative<R: Rng + ?Sized>(
    exclude: &HashSet<usize>,
    n: usize,
    rng: &mut R,
) -> Result<usize> {
    let excluded = exclude.iter().filter(|&&i| (1..=n).contains(&i)).count();
    if excluded >= n {
        return Err(Error::Sampling(format!("all {n} items are excluded")));
    }
    if (excluded as f64) < REJECTION_LIMIT * n as f64 {
        loop {
            let i = rng.random_range(1..=n);
            if !exclude.contains(&i) {
                return Ok(i);
            }
        }
    }
    let eligible: Vec<usize> = (1..=n).filter(|i| !exclude.contains(i)).collect();
    Ok(eligible[rng.random_range(0..eligible.len())])
}

/// `count` distinct items in `[1, n]` outside `exclude`.
pub fn sample_distinct_negatives<R: Rng + ?Sized>(
    exclude: &HashSet<usize>,
    n: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let eligible = n - exclude.iter().filter(|&&i| (1..=n).contains(&i)).count();
    if eligible < count {
        return Err(Error::Sampling(format!(
            "need {count} negatives, only {eligible} eligible items"
        )));
    }
    let mut taken: HashSet<usize> = exclude.clone();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let i = sample_negative(&taken, n, rng)?;
        taken.insert(i);
        out.push(i);
    }
    Ok(out)
}
