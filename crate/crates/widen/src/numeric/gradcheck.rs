//! Central finite-difference verification of tape gradients.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Perturbs every coordinate of every matrix by `+-step`, compares the
/// central difference against the supplied analytic gradient, and returns
/// the worst relative error, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// `f` must be a deterministic function of the matrices.
pub fn finite_diff_check<F>(f: F, mats: &[Matrix], grads: &[Matrix], step: f64) -> Result<f64>
where
    F: Fn(&[Matrix]) -> Result<f64>,
{
    if mats.len() != grads.len() {
        return Err(Error::contract(format!(
            "finite_diff_check: {} matrices but {} gradients",
            mats.len(),
            grads.len()
        )));
    }
    let mut work: Vec<Matrix> = mats.to_vec();
    let mut worst: f64 = 0.0;
    for t in 0..mats.len() {
        if mats[t].shape() != grads[t].shape() {
            return Err(Error::dim(
                "finite_diff_check",
                mats[t].shape(),
                grads[t].shape(),
            ));
        }
        for i in 0..mats[t].data().len() {
            let orig = mats[t].data()[i];

            work[t].data_mut()[i] = orig + step;
            let plus = f(&work)?;
            work[t].data_mut()[i] = orig - step;
            let minus = f(&work)?;
            work[t].data_mut()[i] = orig;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "finite_diff_check evaluation at tensor {t}, coordinate {i}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grads[t].data()[i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
