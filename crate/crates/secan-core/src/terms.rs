//! Scalar building blocks of the stratified likelihoods.
//!
//! Two regression models share these terms. The secondary-outcome model is a
//! per-stratum logistic law for `Y` given covariates `x`,
//!
//! ```text
//! P(Y=1 | x, stratum k) = expit(beta0_k + beta1' x)
//! ```
//!
//! and the disease model is a logistic law for `D` given `x` and `Y`,
//!
//! ```text
//! P(D=1 | x, y, stratum k) = expit(gamma0_k + gamma1' x + gamma2 y)
//! ```
//!
//! Everything downstream is assembled from stable evaluations of these two
//! laws: the rare-disease case weight `a = sum_y P(y|x) exp(gamma1'x +
//! gamma2 y)`, the outcome-mixed disease probability `b1 = sum_y P(y|x)
//! P(D=1|x,y)`, and the pseudo-logarithm used to keep profile objectives
//! finite when an outer optimizer wanders through infeasible territory.

/// Largest double strictly below 1. Probabilities are clamped into
/// `[MIN_POSITIVE, ONE_BELOW]` so that downstream logs stay finite.
const ONE_BELOW: f64 = 1.0 - 1e-16;

/// Logistic function, numerically stable over the whole double range and
/// guaranteed to return a value strictly inside (0, 1) for any finite input
/// (linear predictors beyond +-700 would otherwise round to exactly 0 or 1).
#[inline]
pub fn expit(lp: f64) -> f64 {
    let p = if lp >= 0.0 {
        1.0 / (1.0 + (-lp).exp())
    } else {
        let e = lp.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

/// `log(1 + exp(x))` without overflow or catastrophic rounding.
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 33.0 {
        // exp(-x) < 5e-15: x + exp(-x) rounds to the exact result.
        x + (-x).exp()
    } else if x > -37.0 {
        x.exp().ln_1p()
    } else {
        x.exp()
    }
}

/// `log(expit(lp))`, exact for extreme linear predictors.
#[inline]
pub fn log_expit(lp: f64) -> f64 {
    -log1pexp(-lp)
}

/// `log(exp(a) + exp(b))` guarded against overflow and `-inf` inputs.
#[inline]
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[inline]
fn dot(a: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), x.len());
    let mut s = 0.0;
    for (ai, xi) in a.iter().zip(x) {
        s += ai * xi;
    }
    s
}

/// `P(Y=y | x, stratum k)` under the secondary-outcome model.
#[inline]
pub fn secondary_prob(beta0_k: f64, beta1: &[f64], x: &[f64], y: u8) -> f64 {
    let lp = beta0_k + dot(beta1, x);
    if y == 1 {
        expit(lp)
    } else {
        expit(-lp)
    }
}

/// `log P(Y=y | x, stratum k)`; stable for extreme linear predictors.
#[inline]
pub fn log_secondary_prob(beta0_k: f64, beta1: &[f64], x: &[f64], y: u8) -> f64 {
    let lp = beta0_k + dot(beta1, x);
    if y == 1 {
        log_expit(lp)
    } else {
        log_expit(-lp)
    }
}

/// `P(D=1 | x, y, stratum k)` under the disease model.
#[inline]
pub fn disease_prob(gamma0_k: f64, gamma1: &[f64], gamma2: f64, x: &[f64], y: u8) -> f64 {
    expit(gamma0_k + dot(gamma1, x) + gamma2 * f64::from(y))
}

/// Rare-disease case weight
/// `a = sum_{y in {0,1}} P(y|x) * exp(gamma1' x + gamma2 y)`
/// returned on the log scale. The two summands are combined with
/// log-sum-exp, so linear predictors of either sign up to ~700 are safe.
#[inline]
pub fn log_rare_disease_weight(
    beta0_k: f64,
    beta1: &[f64],
    gamma1: &[f64],
    gamma2: f64,
    x: &[f64],
) -> f64 {
    let g = dot(gamma1, x);
    let t0 = log_secondary_prob(beta0_k, beta1, x, 0) + g;
    let t1 = log_secondary_prob(beta0_k, beta1, x, 1) + g + gamma2;
    logsumexp2(t0, t1)
}

/// Rare-disease case weight `a` on the natural scale. Overflows for extreme
/// `gamma1' x`; prefer [`log_rare_disease_weight`] inside likelihoods.
#[inline]
pub fn rare_disease_weight(
    beta0_k: f64,
    beta1: &[f64],
    gamma1: &[f64],
    gamma2: f64,
    x: &[f64],
) -> f64 {
    log_rare_disease_weight(beta0_k, beta1, gamma1, gamma2, x).exp()
}

/// Outcome-mixed disease probabilities for one subject:
/// `b1 = sum_y P(y|x) P(D=1|x,y,k)` and `b0 = sum_y P(y|x) P(D=0|x,y,k)`.
/// Both sums are evaluated directly (not via `1 - b1`) so that
/// `b1 + b0 = 1` is a genuine floating-point invariant of the two routes.
#[inline]
pub fn mixed_disease_probs(
    beta0_k: f64,
    beta1: &[f64],
    gamma0_k: f64,
    gamma1: &[f64],
    gamma2: f64,
    x: &[f64],
) -> (f64, f64) {
    let py1 = secondary_prob(beta0_k, beta1, x, 1);
    let py0 = secondary_prob(beta0_k, beta1, x, 0);
    let lp = gamma0_k + dot(gamma1, x);
    let d_y0 = expit(lp);
    let d_y1 = expit(lp + gamma2);
    let b1 = py0 * d_y0 + py1 * d_y1;
    let b0 = py0 * (1.0 - d_y0) + py1 * (1.0 - d_y1);
    (b1, b0)
}

/// Pseudo-logarithm: `log z` for `z >= 1/n`, and the quadratic extension
/// `log(1/n) - 1.5 + 2nz - (nz)^2/2` below the knot. Value, first and
/// second derivative are continuous at `z = 1/n`, so gradient-based outer
/// optimization sees a twice continuously differentiable objective even when
/// a trial point drives a mass denominator through zero.
#[inline]
pub fn log_star(z: f64, n: usize) -> f64 {
    let nf = n as f64;
    if z >= 1.0 / nf {
        z.ln()
    } else {
        let nz = nf * z;
        -nf.ln() - 1.5 + 2.0 * nz - 0.5 * nz * nz
    }
}

/// [`log_star`] entered through the log scale: `log_star(exp(log_z), n)`
/// without materializing `exp(log_z)` when it is large. The log branch
/// applies whenever `log_z >= -log n`, which covers every overflow-prone
/// argument; the quadratic branch only ever sees small `z`.
#[inline]
pub fn log_star_from_log(log_z: f64, n: usize) -> f64 {
    let nf = n as f64;
    if log_z >= -nf.ln() {
        log_z
    } else {
        log_star(log_z.exp(), n)
    }
}
