//! Scalar root-finders that profile the stratum mass distributions out of
//! the likelihood.
//!
//! Each stratum contributes one nonlinear scalar equation:
//!
//! * Rare-disease variant: the scale factor `xi_k > 0` solves
//!   `sum_i xi a_ki / (n0_k + n1_k xi a_ki) = 1`, whose left side is
//!   strictly increasing in `xi`, so the root is unique. The solve runs on
//!   `t = log xi` with the summands rewritten as `1 / (n0 exp(-(t + log
//!   a_ki)) + n1)`, which cannot overflow for any finite inputs.
//!
//! * Rate-constrained variants: the multiplier `lambda_k` of the constraint
//!   `sum_i p_ki b1_ki = rate` solves the dual equation
//!   `sum_i c_i / (n_k + lambda c_i) = 0` with `c_i = b1_ki - rate`. On the
//!   interval where all denominators are positive this function is strictly
//!   decreasing, so the root is unique; a root exists iff the rate lies
//!   strictly inside `(min b1, max b1)`. (The primal form `sum_i 1/(n_k +
//!   lambda c_i) = 1` is also satisfied at the solution but has a spurious
//!   root at `lambda = 0`, so it is not solved directly.)
//!
//! Both solvers use Newton steps safeguarded by bisection inside a
//! maintained bracket.

use thiserror::Error;

use crate::terms::logsumexp2;

/// Residual target for the inner equations.
const RESIDUAL_TOL: f64 = 1e-12;
/// Residual still accepted if the iteration cap is reached.
const RESIDUAL_ACCEPT: f64 = 1e-10;
const MAX_ITER: u32 = 200;
/// Search range for `log xi` in the rare-disease solve: `xi` in
/// `[1e-12, 1e12]`.
const LOG_XI_RANGE: f64 = 27.631021115928547;

/// Converged inner solve for one stratum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolution {
    /// The root: `xi_k` (rare-disease scale) or `lambda_k` (rate multiplier).
    pub value: f64,
    /// Final absolute residual of the defining equation.
    pub residual: f64,
    /// Newton/bisection iterations consumed.
    pub iterations: u32,
}

/// Inner-solver failures. The profile objective maps these to a finite
/// penalty; `recover_p` surfaces them as errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum InnerError {
    #[error("mass-scale root lies outside [1e-12, 1e12] (equation sign {g_lo:+.3e} .. {g_hi:+.3e})")]
    Unbracketed { g_lo: f64, g_hi: f64 },
    #[error("stratum rate {rate} is outside the attainable open interval ({min_b1}, {max_b1})")]
    RateOutsideSupport { rate: f64, min_b1: f64, max_b1: f64 },
    #[error("inner solve stalled at residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: u32 },
}

/// Solves the rare-disease scale equation for one stratum, given the case
/// weights on the log scale. Returns `xi_k` (natural scale).
pub(crate) fn solve_rare_scale(
    log_a: &[f64],
    n_cases: usize,
    n_controls: usize,
) -> Result<InnerSolution, InnerError> {
    let n1 = n_cases as f64;
    let n0 = n_controls as f64;
    debug_assert!(n1 >= 1.0 && n0 >= 1.0);
    // g(t) = sum_i 1 / (n0 exp(-(t + la_i)) + n1) - 1, strictly increasing,
    // with limits -1 (t -> -inf) and n/n1 - 1 > 0 (t -> +inf).
    let g = |t: f64| -> (f64, f64) {
        let mut val = 0.0;
        let mut slope = 0.0;
        for &la in log_a {
            let e = (-(t + la)).exp(); // may be +inf for extreme arguments
            let denom = n0 * e + n1;
            if denom.is_finite() {
                let inv = 1.0 / denom;
                val += inv;
                slope += n0 * e * inv * inv;
            }
            // denom overflow means this summand is 0 with 0 slope.
        }
        (val - 1.0, slope)
    };

    // Establish a sign-changing bracket on t by doubling steps from 0.
    let (mut lo, mut hi);
    let (g0, _) = g(0.0);
    if g0 == 0.0 {
        return Ok(InnerSolution { value: 1.0, residual: 0.0, iterations: 0 });
    } else if g0 < 0.0 {
        lo = 0.0;
        hi = 1.0;
        while g(hi).0 < 0.0 {
            hi *= 2.0;
            if hi > LOG_XI_RANGE {
                let g_hi = g(LOG_XI_RANGE).0;
                if g_hi < 0.0 {
                    return Err(InnerError::Unbracketed { g_lo: g0, g_hi });
                }
                hi = LOG_XI_RANGE;
                break;
            }
        }
    } else {
        hi = 0.0;
        lo = -1.0;
        while g(lo).0 > 0.0 {
            lo *= 2.0;
            if lo < -LOG_XI_RANGE {
                let g_lo = g(-LOG_XI_RANGE).0;
                if g_lo > 0.0 {
                    return Err(InnerError::Unbracketed { g_lo, g_hi: g0 });
                }
                lo = -LOG_XI_RANGE;
                break;
            }
        }
    }

    let mut t = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for iterations in 1..=MAX_ITER {
        let (val, slope) = g(t);
        residual = val.abs();
        if residual < RESIDUAL_TOL {
            return Ok(InnerSolution { value: t.exp(), residual, iterations });
        }
        if val < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - val / slope;
        t = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    if residual < RESIDUAL_ACCEPT {
        return Ok(InnerSolution { value: t.exp(), residual, iterations: MAX_ITER });
    }
    Err(InnerError::NoConvergence { residual, iterations: MAX_ITER })
}

/// Solves the rate-constraint dual equation for one stratum. `b1` holds the
/// outcome-mixed disease probabilities, `rate` the imposed stratum disease
/// rate. Returns the multiplier `lambda_k`.
pub(crate) fn solve_rate_multiplier(b1: &[f64], rate: f64) -> Result<InnerSolution, InnerError> {
    let n = b1.len() as f64;
    let c: Vec<f64> = b1.iter().map(|&b| b - rate).collect();
    let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    if cmax.max(-cmin) < 1e-13 {
        // Constraint already satisfied by uniform masses, any multiplier
        // works; 0 is the canonical choice.
        let residual = (c.iter().sum::<f64>() / n).abs();
        return Ok(InnerSolution { value: 0.0, residual, iterations: 0 });
    }
    if cmin >= 0.0 || cmax <= 0.0 {
        let min_b1 = b1.iter().copied().fold(f64::INFINITY, f64::min);
        let max_b1 = b1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(InnerError::RateOutsideSupport { rate, min_b1, max_b1 });
    }
    // All denominators positive exactly on (-n/cmax, -n/cmin).
    let mut lo = -n / cmax;
    let mut hi = -n / cmin;
    // r is decreasing: r(lo+) = +inf, r(hi-) = -inf.
    let r = |lambda: f64| -> (f64, f64) {
        let mut val = 0.0;
        let mut slope = 0.0;
        for &ci in &c {
            let d = n + lambda * ci;
            let t = ci / d;
            val += t;
            slope -= t * t;
        }
        (val, slope)
    };
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for iterations in 1..=MAX_ITER {
        let (val, slope) = r(lambda);
        residual = val.abs();
        if residual < RESIDUAL_TOL {
            return Ok(InnerSolution { value: lambda, residual, iterations });
        }
        if val > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - val / slope;
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if residual < RESIDUAL_ACCEPT {
        return Ok(InnerSolution { value: lambda, residual, iterations: MAX_ITER });
    }
    Err(InnerError::NoConvergence { residual, iterations: MAX_ITER })
}

/// `log(n0 + n1 * xi * a_i)` for one subject, entered on the log scale so
/// arbitrarily large case weights stay finite. `t = log xi`.
#[inline]
pub(crate) fn log_mass_denominator_rare(t: f64, log_a: f64, n_cases: f64, n_controls: f64) -> f64 {
    logsumexp2(n_controls.ln(), n_cases.ln() + t + log_a)
}
