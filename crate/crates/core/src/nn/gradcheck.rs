//! Central finite-difference verification of analytic gradients.

use super::NnError;
use crate::tensor::Tensor;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic[i]` against the central-difference gradient of the
/// scalar function `f` at `point[i]` for every element of every tensor, and
/// returns the worst relative error.
///
/// `f` receives the full perturbed point, so multi-input operations (input
/// plus weights) are checked in one call.
pub fn grad_check<F>(
    point: &[Tensor],
    analytic: &[Tensor],
    epsilon: f64,
    mut f: F,
) -> Result<f64, NnError>
where
    F: FnMut(&[Tensor]) -> Result<f64, NnError>,
{
    if point.len() != analytic.len() {
        return Err(super::shape_err(
            "grad_check",
            format!("{} inputs but {} gradients", point.len(), analytic.len()),
        ));
    }
    for (p, a) in point.iter().zip(analytic) {
        if p.shape() != a.shape() {
            return Err(super::shape_err(
                "grad_check",
                format!("gradient shape {:?} vs input {:?}", a.shape(), p.shape()),
            ));
        }
        if !a.is_finite() {
            return Err(NnError::NonFinite("analytic gradient"));
        }
    }

    let mut work: Vec<Tensor> = point.to_vec();
    let mut worst = 0.0f64;
    for t in 0..work.len() {
        for i in 0..work[t].len() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + epsilon;
            let plus = f(&work)?;
            work[t].data_mut()[i] = orig - epsilon;
            let minus = f(&work)?;
            work[t].data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NnError::NonFinite("finite-difference evaluation"));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic[t].data()[i], numeric));
        }
    }
    Ok(worst)
}
