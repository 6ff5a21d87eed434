//! Unconditional logistic regression via iteratively reweighted least
//! squares (Newton-Raphson on the Bernoulli log-likelihood).

use thiserror::Error;

use crate::linalg::{cholesky, cholesky_inverse, cholesky_solve, design_rank};
use crate::terms::{expit, log1pexp};

/// Gradient infinity-norm below which the fit is declared converged.
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: u32 = 100;
/// Relative tolerance for the rank check of the design matrix.
const RANK_TOL: f64 = 1e-10;
/// A coefficient this large combined with a saturated fitted probability is
/// treated as (quasi-)separation.
const SEPARATION_COEF: f64 = 10.0;
/// Fitted probabilities within this distance of 0 or 1 count as saturated.
const SEPARATION_PROB: f64 = 1e-10;

/// A fitted unconditional logistic regression.
#[derive(Debug, Clone)]
pub struct GlmFit {
    /// Coefficients in design-column order.
    pub coefficients: Vec<f64>,
    /// Inverse observed information (row-major p x p); `None` when the
    /// information matrix is numerically singular at the final iterate.
    pub covariance: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: u32,
    /// Quasi-separation detected: some fitted probability is numerically 0
    /// or 1 while a coefficient diverges. The fit is flagged rather than
    /// penalized away.
    pub separation: bool,
    /// Bernoulli log-likelihood at the final coefficients.
    pub loglik: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },
    #[error("design has {rows} rows for {len} responses")]
    ResponseLen { rows: usize, len: usize },
    #[error("design needs at least as many rows ({rows}) as columns ({cols})")]
    TooFewRows { rows: usize, cols: usize },
    #[error("response value {value} at row {row} is not 0 or 1")]
    NonBinaryResponse { row: usize, value: u8 },
}

fn fill_eta(design: &[f64], n: usize, p: usize, beta: &[f64], eta: &mut [f64]) {
    for i in 0..n {
        let row = &design[i * p..(i + 1) * p];
        eta[i] = row.iter().zip(beta).map(|(a, b)| a * b).sum();
    }
}

fn bernoulli_loglik(y: &[u8], eta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (yi, &e) in y.iter().zip(eta) {
        ll += f64::from(*yi) * e - log1pexp(e);
    }
    ll
}

/// Fits a logistic regression of `y` on the `n x p` row-major `design`.
///
/// The design must have full column rank; dependent columns are reported by
/// index. Convergence means the score's infinity norm fell below `1e-8`
/// within 100 Newton steps (each step halved until the log-likelihood does
/// not decrease). Quasi-separated fits stop early with `separation` set and
/// `converged` false.
pub fn logistic_fit(y: &[u8], design: &[f64], n: usize, p: usize) -> Result<GlmFit, GlmError> {
    if y.len() != n {
        return Err(GlmError::ResponseLen { rows: n, len: y.len() });
    }
    if n < p || p == 0 {
        return Err(GlmError::TooFewRows { rows: n, cols: p });
    }
    debug_assert_eq!(design.len(), n * p);
    if let Some((row, &value)) = y.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(GlmError::NonBinaryResponse { row, value });
    }
    let (rank, dependent) = design_rank(design, n, p, RANK_TOL);
    if rank < p {
        return Err(GlmError::RankDeficient { columns: dependent });
    }

    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let mut mu = vec![0.0; n];
    fill_eta(design, n, p, &beta, &mut eta);
    let mut loglik = bernoulli_loglik(y, &eta);

    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;
    let mut info = vec![0.0; p * p];
    while iterations < MAX_ITER {
        iterations += 1;
        for (m, &e) in mu.iter_mut().zip(&eta) {
            *m = expit(e);
        }

        let mut grad = vec![0.0; p];
        info.fill(0.0);
        for i in 0..n {
            let row = &design[i * p..(i + 1) * p];
            let r = f64::from(y[i]) - mu[i];
            let w = mu[i] * (1.0 - mu[i]);
            for a in 0..p {
                grad[a] += row[a] * r;
                for b in a..p {
                    info[a * p + b] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[a * p + b] = info[b * p + a];
            }
        }

        if grad.iter().all(|g| g.abs() < GRAD_TOL) {
            converged = true;
            break;
        }

        let Some(chol) = cholesky(&info, p) else {
            // Weights collapsed; check below whether separation explains it.
            break;
        };
        let delta = cholesky_solve(&chol, p, &grad);

        // Step-halve until the log-likelihood does not decrease.
        let mut step = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; p];
        for _ in 0..40 {
            for j in 0..p {
                trial[j] = beta[j] + step * delta[j];
            }
            fill_eta(design, n, p, &trial, &mut eta);
            let cand = bernoulli_loglik(y, &eta);
            if cand >= loglik - 1e-12 * loglik.abs().max(1.0) {
                beta.copy_from_slice(&trial);
                loglik = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            fill_eta(design, n, p, &beta, &mut eta);
            break;
        }

        if beta.iter().any(|b| b.abs() > SEPARATION_COEF) {
            let saturated = eta.iter().any(|&e| {
                let m = expit(e);
                !(SEPARATION_PROB..=1.0 - SEPARATION_PROB).contains(&m)
            });
            if saturated {
                separation = true;
                break;
            }
        }
    }

    // Observed information and covariance at the final iterate.
    for (m, &e) in mu.iter_mut().zip(&eta) {
        *m = expit(e);
    }
    info.fill(0.0);
    for i in 0..n {
        let row = &design[i * p..(i + 1) * p];
        let w = mu[i] * (1.0 - mu[i]);
        for a in 0..p {
            for b in a..p {
                info[a * p + b] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[a * p + b] = info[b * p + a];
        }
    }
    let covariance = cholesky(&info, p).map(|chol| cholesky_inverse(&chol, p));

    Ok(GlmFit { coefficients: beta, covariance, converged, iterations, separation, loglik })
}
