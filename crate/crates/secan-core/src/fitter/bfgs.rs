//! Quasi-Newton maximization with BFGS inverse-Hessian updates and an
//! Armijo backtracking line search, driven entirely by function values and
//! finite-difference gradients.

use super::numdiff::{self, NumDiffError};

/// Armijo sufficient-decrease constant.
const ARMIJO_C1: f64 = 1e-4;
/// Line-search backtracking factor.
const BACKTRACK: f64 = 0.5;
/// Most halvings attempted before the line search gives up.
const MAX_HALVINGS: u32 = 60;
/// Curvature threshold, relative to `|s||y|`, below which the BFGS update
/// is skipped.
const CURVATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct BfgsOptions {
    pub(crate) max_iterations: u32,
    /// Convergence: gradient infinity norm below this.
    pub(crate) gradient_tolerance: f64,
    /// Convergence: relative objective change below this (stall at the
    /// numerical floor counts as success; the gradient norm is reported).
    pub(crate) value_tolerance: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct BfgsOutcome {
    pub(crate) x: Vec<f64>,
    /// Objective value (maximization scale).
    pub(crate) value: f64,
    /// Gradient infinity norm at the final iterate.
    pub(crate) gradient_norm: f64,
    pub(crate) iterations: u32,
    pub(crate) converged: bool,
    /// Objective value after each accepted step, starting with the value at
    /// the initial point.
    pub(crate) trajectory: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum BfgsError {
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error(transparent)]
    NumDiff(#[from] NumDiffError),
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes `f` from `x0`. Gradients are central finite differences of
/// `f`; the quasi-Newton recursion runs on the negated objective.
pub(crate) fn maximize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    options: &BfgsOptions,
) -> Result<BfgsOutcome, BfgsError> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut value = f(&x);
    if !value.is_finite() {
        return Err(BfgsError::NonFiniteStart);
    }
    let mut trajectory = vec![value];

    // Inverse Hessian approximation of the minimized objective -f.
    let mut h_inv = identity(n);
    let mut scaled = false;
    // Gradient of -f.
    let mut grad: Vec<f64> = numdiff::gradient(&mut f, &x)?.iter().map(|g| -g).collect();
    let mut converged = inf_norm(&grad) < options.gradient_tolerance;
    let mut iterations = 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;

        let mut direction = neg_mat_vec(&h_inv, &grad, n);
        let mut slope: f64 = direction.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            // Not a descent direction for -f; restart from steepest descent.
            h_inv = identity(n);
            scaled = true;
            direction = grad.iter().map(|g| -g).collect();
            slope = -grad.iter().map(|g| g * g).sum::<f64>();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> =
                x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let trial_value = f(&trial);
            // Armijo condition on -f: require enough decrease.
            if trial_value.is_finite()
                && -trial_value <= -value + ARMIJO_C1 * step * slope
            {
                accepted = Some((trial, trial_value));
                break;
            }
            step *= BACKTRACK;
        }
        let Some((new_x, new_value)) = accepted else {
            // Try once more from a fresh steepest-descent state before
            // giving up.
            if scaled {
                break;
            }
            h_inv = identity(n);
            scaled = true;
            continue;
        };

        let new_grad: Vec<f64> = numdiff::gradient(&mut f, &new_x)?.iter().map(|g| -g).collect();
        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm = inf_norm(&s);
        let y_norm = inf_norm(&y);
        if sy > CURVATURE_TOL * s_norm * y_norm {
            if !scaled {
                // First well-curved pair: scale the identity so the update
                // starts near the right magnitude.
                let yy: f64 = y.iter().map(|v| v * v).sum();
                if yy > 0.0 {
                    let factor = sy / yy;
                    for d in 0..n {
                        h_inv[d * n + d] = factor;
                    }
                }
                scaled = true;
            }
            bfgs_update(&mut h_inv, &s, &y, sy, n);
        }

        let improvement = (new_value - value).abs();
        let stalled = improvement <= options.value_tolerance * value.abs().max(1.0);
        x = new_x;
        value = new_value;
        grad = new_grad;
        trajectory.push(value);
        converged = inf_norm(&grad) < options.gradient_tolerance || stalled;
    }

    Ok(BfgsOutcome {
        x,
        value,
        gradient_norm: inf_norm(&grad),
        iterations,
        converged,
        trajectory,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for d in 0..n {
        m[d * n + d] = 1.0;
    }
    m
}

fn neg_mat_vec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        out[i] = -row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
    out
}

/// In-place BFGS inverse-Hessian update:
/// `H <- (I - rho s y')(H)(I - rho y s') + rho s s'` with `rho = 1/(s'y)`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    // hy = H y, yhy = y' H y.
    let mut hy = vec![0.0; n];
    for i in 0..n {
        hy[i] = h[i * n..(i + 1) * n].iter().zip(y).map(|(a, b)| a * b).sum();
    }
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + rho * rho * yhy * s[i] * s[j]
                + rho * s[i] * s[j];
        }
    }
}
