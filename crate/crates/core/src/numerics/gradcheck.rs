//! Central finite-difference check of analytic gradients (64-bit).

use std::ops::Range;

use crate::error::{Error, Result};

/// Finite-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub range: Range<usize>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, range: Range<usize>) -> Self {
        ParamBlock {
            name: name.into(),
            range,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the gradient returned by `loss_and_grad` at `point` against
/// central differences, coordinate by coordinate over `blocks` (all of
/// `point` when `blocks` is empty).
pub fn check_gradients<F>(
    mut loss_and_grad: F,
    point: &[f64],
    blocks: &[ParamBlock],
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (loss, grad) = loss_and_grad(point)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss} at the check point")));
    }
    if grad.len() != point.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} parameters",
            grad.len(),
            point.len()
        )));
    }
    let whole = [ParamBlock::new("all", 0..point.len())];
    let blocks = if blocks.is_empty() {
        &whole[..]
    } else {
        blocks
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_block: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut x = point.to_vec();
    for block in blocks {
        for i in block.range.clone() {
            let orig = x[i];
            x[i] = orig + GRADCHECK_STEP;
            let (up, _) = loss_and_grad(&x)?;
            x[i] = orig - GRADCHECK_STEP;
            let (down, _) = loss_and_grad(&x)?;
            x[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss not finite when perturbing {}[{}]",
                    block.name,
                    i - block.range.start
                )));
            }
            let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
            let analytic = grad[i];
            let denom = analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_block.is_empty() {
                report.max_rel_error = rel;
                report.worst_block = block.name.clone();
                report.worst_index = i - block.range.start;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sigmoid;

    #[test]
    fn linear_loss_is_exact() {
        let w = [0.5, -2.0, 3.25];
        let f = |x: &[f64]| Ok((x.iter().zip(&w).map(|(a, b)| a * b).sum(), w.to_vec()));
        let r = check_gradients(f, &[1.0, 2.0, -1.0], &[]).unwrap();
        assert!(r.max_rel_error <= 1e-10, "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn sigmoid_at_zero() {
        let f = |x: &[f64]| {
            let s = sigmoid(x[0]);
            Ok((s, vec![s * (1.0 - s)]))
        };
        let r = check_gradients(f, &[0.0], &[]).unwrap();
        assert_eq!(r.analytic, 0.25);
        assert!((r.numeric - 0.25).abs() < 1e-8);
    }

    #[test]
    fn reports_worst_block() {
        let f = |x: &[f64]| Ok((x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 3.0 * x[1]]));
        let blocks = [ParamBlock::new("good", 0..1), ParamBlock::new("bad", 1..2)];
        let r = check_gradients(f, &[1.0, 1.0], &blocks).unwrap();
        assert_eq!(r.worst_block, "bad");
        assert!(r.max_rel_error > 0.3);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let f = |x: &[f64]| Ok((x[0].ln(), vec![1.0 / x[0]]));
        assert!(matches!(
            check_gradients(f, &[-1.0], &[]),
            Err(Error::Numeric(_))
        ));
    }
}
