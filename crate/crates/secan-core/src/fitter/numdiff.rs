//! Central finite-difference derivatives of black-box objectives.
//!
//! The profile log-likelihoods are smooth in the outer parameters but their
//! inner root-finds make analytic derivatives unwieldy, so the optimizer
//! and the covariance step both differentiate numerically. Steps are
//! relative to the coordinate's magnitude and snapped to exactly
//! representable values so the difference quotient divides by the step that
//! was actually taken.

use thiserror::Error;

/// Relative step for first derivatives.
pub const GRADIENT_REL_STEP: f64 = 1e-6;
/// Relative step for second derivatives.
pub const HESSIAN_REL_STEP: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum NumDiffError {
    #[error("objective returned a non-finite value while probing component {component}")]
    NonFinite { component: usize },
}

fn effective_step(x: f64, rel: f64) -> f64 {
    let h = rel * x.abs().max(1.0);
    let probe = x + h;
    probe - x
}

/// Central-difference gradient: component `j` uses step
/// `1e-6 * max(1, |x_j|)`.
pub fn gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Result<Vec<f64>, NumDiffError> {
    let n = x.len();
    let mut point = x.to_vec();
    let mut grad = vec![0.0; n];
    for j in 0..n {
        let h = effective_step(x[j], GRADIENT_REL_STEP);
        point[j] = x[j] + h;
        let up = f(&point);
        point[j] = x[j] - h;
        let down = f(&point);
        point[j] = x[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(NumDiffError::NonFinite { component: j });
        }
        grad[j] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Central-difference Hessian (row-major, symmetric by construction):
/// diagonal entries from the three-point second difference, off-diagonals
/// from the four-point cross difference, all with steps
/// `1e-4 * max(1, |x_j|)`.
pub fn hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Result<Vec<f64>, NumDiffError> {
    let n = x.len();
    let center = f(x);
    if !center.is_finite() {
        return Err(NumDiffError::NonFinite { component: 0 });
    }
    let steps: Vec<f64> = x.iter().map(|&v| effective_step(v, HESSIAN_REL_STEP)).collect();
    let mut point = x.to_vec();
    let mut hess = vec![0.0; n * n];
    for j in 0..n {
        point[j] = x[j] + steps[j];
        let up = f(&point);
        point[j] = x[j] - steps[j];
        let down = f(&point);
        point[j] = x[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(NumDiffError::NonFinite { component: j });
        }
        hess[j * n + j] = (up - 2.0 * center + down) / (steps[j] * steps[j]);
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let mut corners = [0.0; 4];
            for (idx, (sa, sb)) in
                [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().enumerate()
            {
                point[a] = x[a] + sa * steps[a];
                point[b] = x[b] + sb * steps[b];
                corners[idx] = f(&point);
                point[a] = x[a];
                point[b] = x[b];
            }
            if corners.iter().any(|c| !c.is_finite()) {
                return Err(NumDiffError::NonFinite { component: b });
            }
            let value =
                (corners[0] - corners[1] - corners[2] + corners[3]) / (4.0 * steps[a] * steps[b]);
            hess[a * n + b] = value;
            hess[b * n + a] = value;
        }
    }
    Ok(hess)
}
