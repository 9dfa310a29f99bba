//! Central finite-difference gradient checking.

use super::Matrix;
use crate::error::{dim, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares the analytic gradient returned by `f` against central
/// differences of its value, returning
/// `max |analytic - numeric| / max(1, |numeric|)` over every parameter entry.
///
/// `f` maps a parameter list to `(value, gradients)`, with one gradient
/// matrix per parameter.
pub fn finite_diff_check<F>(mut f: F, params: &[Matrix], step: f64) -> Result<f64>
where
    F: FnMut(&[Matrix]) -> Result<(f64, Vec<Matrix>)>,
{
    let (_, analytic) = f(params)?;
    if analytic.len() != params.len() {
        return Err(dim("finite_diff_check", (params.len(), 0), (analytic.len(), 0)));
    }
    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst = 0.0f64;
    for p in 0..params.len() {
        if analytic[p].shape() != params[p].shape() {
            return Err(dim("finite_diff_check", params[p].shape(), analytic[p].shape()));
        }
        for k in 0..params[p].as_slice().len() {
            let orig = params[p].as_slice()[k];
            work[p].as_mut_slice()[k] = orig + step;
            let (plus, _) = f(&work)?;
            work[p].as_mut_slice()[k] = orig - step;
            let (minus, _) = f(&work)?;
            work[p].as_mut_slice()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = (analytic[p].as_slice()[k] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
