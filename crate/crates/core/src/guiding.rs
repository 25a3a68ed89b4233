//! Oracle-guiding loss: attenuated discrepancies between the past encoder's
//! last row and the future encoder's rows around the target.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub use crate::config::{DiscrepancyKind, GuidingConfig};
use crate::error::{Error, Result};
use crate::numerics::{c, log_softmax, Real};

/// `alpha_i = exp(-gamma (i-1))` for `i = 1..=P+2`.
pub fn attenuation_weights(horizon: usize, gamma: f64) -> Vec<f64> {
    (0..horizon + 2)
        .map(|i| (-gamma * i as f64).exp())
        .collect()
}

/// Value and gradients of a discrepancy with respect to both arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyGrad<T> {
    pub value: T,
    pub da: Array1<T>,
    pub db: Array1<T>,
}

pub fn discrepancy<T: Real>(
    kind: DiscrepancyKind,
    a: ArrayView1<'_, T>,
    b: ArrayView1<'_, T>,
) -> Result<T> {
    Ok(discrepancy_grad(kind, a, b)?.value)
}

/// `sum_i p_i (ln p_i - ln q_i)` together with the gradient of the
/// first argument's logits and of the second's.
fn kl_logits<T: Real>(la: &[T], lb: &[T]) -> (T, Array1<T>, Array1<T>) {
    let p: Vec<T> = la.iter().map(|v| v.exp()).collect();
    let q: Vec<T> = lb.iter().map(|v| v.exp()).collect();
    let kl = p
        .iter()
        .zip(la.iter().zip(lb))
        .map(|(pi, (x, y))| *pi * (*x - *y))
        .sum::<T>();
    let da = Array1::from_shape_fn(la.len(), |i| p[i] * (la[i] - lb[i] - kl));
    let db = Array1::from_shape_fn(la.len(), |i| q[i] - p[i]);
    (kl, da, db)
}

fn js<T: Real>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> (T, Array1<T>, Array1<T>) {
    let la = log_softmax(a.as_slice().unwrap_or(&a.to_vec()));
    let lb = log_softmax(b.as_slice().unwrap_or(&b.to_vec()));
    let half = c::<T>(0.5);
    let ln2 = c::<T>(std::f64::consts::LN_2);
    // ln m_i = logsumexp(ln p_i, ln q_i) - ln 2
    let lm: Vec<T> = la
        .iter()
        .zip(&lb)
        .map(|(x, y)| {
            if x == y {
                return *x;
            }
            let hi = x.max(*y);
            let lo = x.min(*y);
            hi + (lo - hi).exp().ln_1p() - ln2
        })
        .collect();
    let mut value = T::zero();
    // dJS/dp_i = 0.5 ln(p_i / m_i), then back through the softmax
    let mut gp = vec![T::zero(); la.len()];
    let mut gq = vec![T::zero(); la.len()];
    for i in 0..la.len() {
        let (p, q) = (la[i].exp(), lb[i].exp());
        gp[i] = half * (la[i] - lm[i]);
        gq[i] = half * (lb[i] - lm[i]);
        if p > T::zero() {
            value += p * gp[i];
        }
        if q > T::zero() {
            value += q * gq[i];
        }
    }
    let back = |l: &[T], g: &[T]| {
        let p: Vec<T> = l.iter().map(|v| v.exp()).collect();
        let dot = p.iter().zip(g).map(|(p, g)| *p * *g).sum::<T>();
        Array1::from_shape_fn(l.len(), |i| p[i] * (g[i] - dot))
    };
    (value.max(T::zero()), back(&la, &gp), back(&lb, &gq))
}

pub fn discrepancy_grad<T: Real>(
    kind: DiscrepancyKind,
    a: ArrayView1<'_, T>,
    b: ArrayView1<'_, T>,
) -> Result<DiscrepancyGrad<T>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "discrepancy of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (value, da, db) = match kind {
        DiscrepancyKind::Kl => {
            let la = log_softmax(&a.to_vec());
            let lb = log_softmax(&b.to_vec());
            let (v, da, db) = kl_logits(&la, &lb);
            (v.max(T::zero()), da, db)
        }
        DiscrepancyKind::Js => js(a, b),
        DiscrepancyKind::Euclidean => {
            let diff = &a - &b;
            let norm = diff.dot(&diff).sqrt();
            if norm == T::zero() {
                (T::zero(), Array1::zeros(a.len()), Array1::zeros(a.len()))
            } else {
                let da = diff.mapv(|v| v / norm);
                let db = da.mapv(|v| -v);
                (norm, da, db)
            }
        }
        DiscrepancyKind::Cosine => {
            let na = a.dot(&a).sqrt();
            let nb = b.dot(&b).sqrt();
            if na == T::zero() || nb == T::zero() {
                return Err(Error::Numeric("cosine discrepancy of a zero vector".into()));
            }
            let cos = a.dot(&b) / (na * nb);
            // d cos / d a = b / (|a||b|) - cos a / |a|^2
            let da = a.mapv(|v| cos * v / (na * na)) - b.mapv(|v| v / (na * nb));
            let db = b.mapv(|v| cos * v / (nb * nb)) - a.mapv(|v| v / (na * nb));
            ((T::one() - cos).max(T::zero()), da, db)
        }
    };
    Ok(DiscrepancyGrad { value, da, db })
}

/// 0-based rows of `R` paired with `alpha_1, alpha_2, ...`. The first row is
/// the one whose next-item target is `v_t`.
pub fn guided_rows(len: usize, horizon: usize, available_future: usize) -> Vec<(usize, usize)> {
    let a = available_future.min(horizon + 1);
    let count = (horizon + 2).min(a + 1);
    if a == 0 {
        return Vec::new();
    }
    (0..count)
        .filter_map(|i| {
            // 1-based row L - a - 1 + (i + 1)
            let row = len as isize - a as isize - 1 + i as isize;
            (row >= 0 && (row as usize) < len).then_some((i, row as usize))
        })
        .collect()
}

/// Result of [`guiding_loss_grad`].
#[derive(Debug, Clone)]
pub struct GuidingGrad<T> {
    pub value: T,
    /// Gradient with respect to the past encoder's last row.
    pub dq: Array1<T>,
    /// Gradient with respect to the future encoder's `L x d` output.
    pub dr: Array2<T>,
}

pub fn guiding_loss<T: Real>(
    q_last: ArrayView1<'_, T>,
    r: ArrayView2<'_, T>,
    horizon: usize,
    cfg: &GuidingConfig,
    available_future: usize,
) -> Result<T> {
    Ok(guiding_loss_grad(q_last, r, horizon, cfg, available_future)?.value)
}

pub fn guiding_loss_grad<T: Real>(
    q_last: ArrayView1<'_, T>,
    r: ArrayView2<'_, T>,
    horizon: usize,
    cfg: &GuidingConfig,
    available_future: usize,
) -> Result<GuidingGrad<T>> {
    let rows = guided_rows(r.nrows(), horizon, available_future);
    if rows.is_empty() {
        log::warn!("no future rows to guide against (available_future = {available_future})");
    }
    guiding_grad_at(q_last, r, &rows, horizon, cfg)
}

/// Guiding loss over explicit `(alpha index, row)` pairs, for callers that
/// store the future encoder's output in a different row order.
pub fn guiding_grad_at<T: Real>(
    q_last: ArrayView1<'_, T>,
    r: ArrayView2<'_, T>,
    rows: &[(usize, usize)],
    horizon: usize,
    cfg: &GuidingConfig,
) -> Result<GuidingGrad<T>> {
    let mut out = GuidingGrad {
        value: T::zero(),
        dq: Array1::zeros(q_last.len()),
        dr: Array2::zeros(r.dim()),
    };
    let alpha = attenuation_weights(horizon, cfg.gamma);
    for &(i, row) in rows {
        if i >= alpha.len() || row >= r.nrows() {
            return Err(Error::Shape(format!(
                "guided pair ({i}, {row}) out of range"
            )));
        }
        let w = c::<T>(alpha[i]);
        let g = discrepancy_grad(cfg.kind, q_last, r.row(row))?;
        out.value += w * g.value;
        out.dq.scaled_add(w, &g.da);
        let mut dst = out.dr.row_mut(row);
        dst.scaled_add(w, &g.db);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg(kind: DiscrepancyKind, gamma: f64) -> GuidingConfig {
        GuidingConfig {
            kind,
            gamma,
            beta: 0.01,
        }
    }

    #[test]
    fn weights_examples() {
        let w = attenuation_weights(1, 0.5);
        let expect = [1.0, 0.606_531, 0.367_879];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(attenuation_weights(4, 0.0).iter().all(|v| *v == 1.0));
        assert_eq!(attenuation_weights(3, 7.0)[0], 1.0);
        assert_eq!(attenuation_weights(3, 0.1).len(), 5);
    }

    #[test]
    fn kl_hand_value() {
        let a = array![0.0, 0.0];
        let b = array![3f64.ln(), 0.0];
        let v = discrepancy(DiscrepancyKind::Kl, a.view(), b.view()).unwrap();
        let expect = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.143_841).abs() < 1e-6);
    }

    #[test]
    fn equality_and_orthogonality() {
        let a = array![0.3, -1.0, 2.0];
        for kind in [
            DiscrepancyKind::Kl,
            DiscrepancyKind::Js,
            DiscrepancyKind::Euclidean,
            DiscrepancyKind::Cosine,
        ] {
            assert_eq!(
                discrepancy(kind, a.view(), a.view()).unwrap(),
                0.0,
                "{kind}"
            );
        }
        let x: Array1<f64> = array![1.0, 0.0];
        let y = array![0.0, 2.0];
        assert!(
            (discrepancy(DiscrepancyKind::Cosine, x.view(), y.view()).unwrap() - 1.0).abs() < 1e-15
        );
        let z = array![0.0, 0.0];
        assert!(discrepancy(DiscrepancyKind::Cosine, x.view(), z.view()).is_err());
    }

    #[test]
    fn euclidean_guiding_example() {
        // P = 0, gamma = 0, d = 1, L = 3: rows L-1 and L carry 3 and 4.
        let q: Array1<f64> = array![0.0];
        let r = array![[100.0], [3.0], [4.0]];
        let v = guiding_loss(
            q.view(),
            r.view(),
            0,
            &cfg(DiscrepancyKind::Euclidean, 0.0),
            1,
        )
        .unwrap();
        assert!((v - 7.0).abs() < 1e-12);
    }

    #[test]
    fn guided_row_alignment() {
        // Full future: rows L-P-1 ..= L (1-based).
        assert_eq!(guided_rows(10, 2, 3), vec![(0, 6), (1, 7), (2, 8), (3, 9)]);
        // Truncated: the target row moves right with the shorter window.
        assert_eq!(guided_rows(10, 2, 1), vec![(0, 8), (1, 9)]);
        assert!(guided_rows(10, 2, 0).is_empty());
    }

    #[test]
    fn no_future_gives_zero() {
        let q = array![1.0, 2.0];
        let r = Array2::<f64>::ones((4, 2));
        let g =
            guiding_loss_grad(q.view(), r.view(), 1, &cfg(DiscrepancyKind::Kl, 0.1), 0).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.dq.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_discrepancy_decreases_with_gamma() {
        let q: Array1<f64> = array![0.0];
        let r = Array2::from_elem((6, 1), 2.0);
        let mut prev = f64::INFINITY;
        for gamma in [0.0, 0.1, 0.5, 2.0] {
            let v = guiding_loss(
                q.view(),
                r.view(),
                2,
                &cfg(DiscrepancyKind::Euclidean, gamma),
                3,
            )
            .unwrap();
            let sum: f64 = attenuation_weights(2, gamma).iter().sum();
            assert!((v - 2.0 * sum).abs() < 1e-12);
            assert!(v < prev);
            prev = v;
        }
    }
}
