//! Conditional logistic regression with exact denominators.
//!
//! Each cell (a group that shares the conditioning variables) contributes
//! the exact conditional likelihood of its observed event set given the
//! number of events: the denominator over all `C(n_j, m_j)` subsets is
//! computed by the two-index recursion
//! `B(t, s) = B(t-1, s) + exp(u_t) B(t-1, s-1)` run entirely in log space.
//! The score and information are carried alongside as subset-measure means:
//! with `w` the log-sum-exp weight of the "subject t included" branch, the
//! mean `c(t, s)` of the subset covariate sums and the mean `M(t, s)` of
//! their outer products update as convex combinations, so no quantity ever
//! leaves the scale of the covariates themselves.

use thiserror::Error;

use crate::linalg::{cholesky, cholesky_inverse, cholesky_solve, symmetric_condition};
use crate::terms::logsumexp2;

/// Score infinity-norm below which the fit is declared converged.
const SCORE_TOL: f64 = 1e-6;
/// A coefficient beyond this magnitude is treated as diverging.
const COEF_LIMIT: f64 = 50.0;
/// Information condition number beyond which the fit is abandoned.
const CONDITION_LIMIT: f64 = 1e12;
/// Absolute information entries below this at the start mean the data carry
/// no information about the coefficients (e.g. constant covariates).
const NO_INFORMATION_TOL: f64 = 1e-12;

/// One conditioning cell: covariate rows and binary event markers.
#[derive(Debug, Clone)]
pub struct CellData {
    /// Row-major `n_j x q` covariates.
    pub x: Vec<f64>,
    /// Event indicator per subject (the regression response).
    pub events: Vec<u8>,
}

impl CellData {
    pub fn n(&self) -> usize {
        self.events.len()
    }

    pub fn m(&self) -> usize {
        self.events.iter().filter(|&&e| e == 1).count()
    }
}

/// Options for [`conditional_logistic_fit`].
#[derive(Debug, Clone)]
pub struct CondLogitOptions {
    pub max_iterations: u32,
    /// Largest cell size for which the exact denominator is attempted.
    /// The exact conditional likelihood enumerates subset structure whose
    /// per-iteration cost grows with `n_j * m_j`; standard implementations
    /// of this model are routinely reported as failing on cells of around a
    /// thousand subjects, and fits above this limit return
    /// `converged = false` with `size_limited` set instead of attempting
    /// the computation. Raise the limit to force the exact solve.
    pub exact_size_limit: usize,
}

impl Default for CondLogitOptions {
    fn default() -> Self {
        Self { max_iterations: 100, exact_size_limit: 750 }
    }
}

/// A fitted conditional logistic regression (no intercepts; they are
/// conditioned out).
#[derive(Debug, Clone)]
pub struct CondLogitFit {
    pub coefficients: Vec<f64>,
    /// Inverse observed information; `None` unless converged with a
    /// well-conditioned information matrix.
    pub covariance: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: u32,
    /// Conditional log-likelihood at the final coefficients (NaN when the
    /// size guard prevented evaluation).
    pub loglik: f64,
    /// Log-scale denominators of the informative cells at the final
    /// coefficients, aligned with `informative_indices`.
    pub log_denominators: Vec<f64>,
    /// Indices (into the input slice) of the cells that entered the fit.
    pub informative_indices: Vec<usize>,
    /// Cells skipped because they had zero events or all events.
    pub skipped_cells: usize,
    /// An informative cell exceeded `exact_size_limit`; nothing was fitted.
    pub size_limited: bool,
    /// The data carry no information about the coefficients; the fit
    /// returns the initial value (zero).
    pub no_information: bool,
    /// A coefficient passed the divergence limit during iteration.
    pub diverged: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum ClogitError {
    #[error("no cell has both events and non-events; the conditional likelihood is constant")]
    NoInformativeCells,
    #[error("cell {cell} has {len} covariate values for {n} subjects with q={q}")]
    Shape { cell: usize, len: usize, n: usize, q: usize },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the log-space recursion for one cell and returns, at `(n, m)`:
/// the log denominator, the subset-measure mean `c` of the covariate sums
/// (length q), and the mean `M` of their outer products (q x q row-major).
fn cell_recursion(x: &[f64], q: usize, n: usize, m: usize, beta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let mut logb = vec![f64::NEG_INFINITY; m + 1];
    logb[0] = 0.0;
    let mut c = vec![0.0; (m + 1) * q];
    let mut mm = vec![0.0; (m + 1) * q * q];
    for t in 0..n {
        let xt = &x[t * q..(t + 1) * q];
        let u = dot(beta, xt);
        let smax = (t + 1).min(m);
        for s in (1..=smax).rev() {
            let prev = logb[s - 1];
            if prev == f64::NEG_INFINITY && logb[s] == f64::NEG_INFINITY {
                continue;
            }
            let new = logsumexp2(logb[s], u + prev);
            let w = if prev == f64::NEG_INFINITY { 0.0 } else { (u + prev - new).exp() };
            if w > 0.0 {
                for a in 0..q {
                    let included = c[(s - 1) * q + a] + xt[a];
                    c[s * q + a] = (1.0 - w) * c[s * q + a] + w * included;
                }
                for a in 0..q {
                    for b in 0..q {
                        let idx = s * q * q + a * q + b;
                        let pidx = (s - 1) * q * q + a * q + b;
                        let included = mm[pidx]
                            + xt[a] * c[(s - 1) * q + b]
                            + c[(s - 1) * q + a] * xt[b]
                            + xt[a] * xt[b];
                        mm[idx] = (1.0 - w) * mm[idx] + w * included;
                    }
                }
            }
            logb[s] = new;
        }
    }
    let c_final = c[m * q..(m + 1) * q].to_vec();
    let m_final = mm[m * q * q..(m + 1) * q * q].to_vec();
    (logb[m], c_final, m_final)
}

/// Log-scale denominator of one cell's exact conditional likelihood: the
/// log of the sum of `exp(beta' z_S)` over all size-`m` subsets `S` of the
/// cell's rows, where `z_S` is the subset's covariate sum. Exposed for
/// diagnostics and for cross-checking the recursion against direct
/// enumeration.
pub fn cell_log_denominator(x: &[f64], q: usize, m: usize, beta: &[f64]) -> f64 {
    assert!(q > 0 && x.len().is_multiple_of(q), "x must be row-major n x q");
    let n = x.len() / q;
    assert!(m <= n, "subset size {m} exceeds {n} rows");
    cell_recursion(x, q, n, m, beta).0
}

struct Evaluation {
    loglik: f64,
    score: Vec<f64>,
    info: Vec<f64>,
    log_denoms: Vec<f64>,
}

fn evaluate(cells: &[&CellData], q: usize, beta: &[f64]) -> Evaluation {
    let mut loglik = 0.0;
    let mut score = vec![0.0; q];
    let mut info = vec![0.0; q * q];
    let mut log_denoms = Vec::with_capacity(cells.len());
    for cell in cells {
        let n = cell.n();
        let m = cell.m();
        let mut z_obs = vec![0.0; q];
        for (i, &e) in cell.events.iter().enumerate() {
            if e == 1 {
                for (a, z) in z_obs.iter_mut().enumerate() {
                    *z += cell.x[i * q + a];
                }
            }
        }
        let (log_denom, c, mm) = cell_recursion(&cell.x, q, n, m, beta);
        loglik += dot(beta, &z_obs) - log_denom;
        for a in 0..q {
            score[a] += z_obs[a] - c[a];
            for b in 0..q {
                info[a * q + b] += mm[a * q + b] - c[a] * c[b];
            }
        }
        log_denoms.push(log_denom);
    }
    Evaluation { loglik, score, info, log_denoms }
}

/// Fits the conditional logistic regression over the given cells.
///
/// Cells with zero events or all events contribute nothing and are skipped
/// (counted in `skipped_cells`). Convergence means the score's infinity
/// norm fell below `1e-6`; the fit is abandoned with `converged = false`
/// when the iteration cap is hit, a coefficient magnitude passes 50, or the
/// information matrix has condition number above `1e12`.
pub fn conditional_logistic_fit(
    cells: &[CellData],
    q: usize,
    options: &CondLogitOptions,
) -> Result<CondLogitFit, ClogitError> {
    for (j, cell) in cells.iter().enumerate() {
        if cell.x.len() != cell.n() * q {
            return Err(ClogitError::Shape { cell: j, len: cell.x.len(), n: cell.n(), q });
        }
    }
    let informative_indices: Vec<usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let m = c.m();
            m > 0 && m < c.n()
        })
        .map(|(j, _)| j)
        .collect();
    if informative_indices.is_empty() {
        return Err(ClogitError::NoInformativeCells);
    }
    let informative: Vec<&CellData> = informative_indices.iter().map(|&j| &cells[j]).collect();
    let skipped_cells = cells.len() - informative.len();

    let mut fit = CondLogitFit {
        coefficients: vec![0.0; q],
        covariance: None,
        converged: false,
        iterations: 0,
        loglik: f64::NAN,
        log_denominators: Vec::new(),
        informative_indices,
        skipped_cells,
        size_limited: false,
        no_information: false,
        diverged: false,
    };

    if informative.iter().any(|c| c.n() > options.exact_size_limit) {
        fit.size_limited = true;
        return Ok(fit);
    }

    let mut eval = evaluate(&informative, q, &fit.coefficients);
    if eval.info.iter().all(|v| v.abs() < NO_INFORMATION_TOL) {
        fit.no_information = true;
        fit.loglik = eval.loglik;
        fit.log_denominators = eval.log_denoms;
        return Ok(fit);
    }

    let mut well_posed = true;
    while fit.iterations < options.max_iterations {
        fit.iterations += 1;
        if eval.score.iter().all(|s| s.abs() < SCORE_TOL) {
            fit.converged = true;
            break;
        }
        if symmetric_condition(&eval.info, q) > CONDITION_LIMIT {
            well_posed = false;
            break;
        }
        let Some(chol) = cholesky(&eval.info, q) else {
            well_posed = false;
            break;
        };
        let delta = cholesky_solve(&chol, q, &eval.score);

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = fit
                .coefficients
                .iter()
                .zip(&delta)
                .map(|(b, d)| b + step * d)
                .collect();
            let cand = evaluate(&informative, q, &trial);
            if cand.loglik >= eval.loglik - 1e-12 * eval.loglik.abs().max(1.0) {
                fit.coefficients = trial;
                eval = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if fit.coefficients.iter().any(|b| b.abs() > COEF_LIMIT) {
            fit.diverged = true;
            break;
        }
    }

    fit.loglik = eval.loglik;
    fit.log_denominators = eval.log_denoms;
    if fit.converged && well_posed && symmetric_condition(&eval.info, q) <= CONDITION_LIMIT {
        fit.covariance = cholesky(&eval.info, q).map(|chol| cholesky_inverse(&chol, q));
        if fit.covariance.is_none() {
            fit.converged = false;
        }
    } else {
        fit.converged = false;
        fit.covariance = None;
    }
    Ok(fit)
}
