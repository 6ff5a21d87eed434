//! Outer maximization of the profile log-likelihoods, with warm starts
//! from the naive fits, finite-difference covariance, and Wald intervals.

mod bfgs;
pub mod numdiff;

use thiserror::Error;

use crate::data::StratifiedDataset;
use crate::linalg::{cholesky, cholesky_inverse, symmetric_condition};
use crate::naive::{self, Adjustment, NaiveError};
use crate::params::{KnownRates, ParamError, ParamVector, Variant};
use crate::profile::{self, profile_loglik, InnerSolution, ProfileError};
use crate::terms::expit;

use bfgs::{BfgsError, BfgsOptions};
pub use numdiff::NumDiffError;

/// Two-sided 95% normal critical value used for all Wald intervals.
pub const Z_975: f64 = 1.959964;

/// Condition-number ceiling above which the curvature matrix is treated as
/// numerically singular and no covariance is reported.
const CONDITION_LIMIT: f64 = 1e12;
/// Objective values at or below this are penalty values, not likelihoods;
/// an optimizer that stops there has not converged.
const PENALTY_FLOOR: f64 = -1e9;
/// Disease-rate candidates tried when warm-starting the estimated-rates
/// variant.
const RATE_CANDIDATES: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5];

/// Options for [`fit`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: u32,
    /// Convergence: gradient infinity norm below this.
    pub gradient_tolerance: f64,
    /// Convergence: relative objective improvement below this.
    pub value_tolerance: f64,
    /// Explicit starting point; `None` uses the naive-fit warm start.
    pub initial: Option<ParamVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            value_tolerance: 1e-10,
            initial: None,
        }
    }
}

/// One reported parameter with its uncertainty. For the estimated-rates
/// variant the disease rates are optimized on the log-odds scale but
/// reported here on the natural scale, with delta-method standard errors
/// and interval endpoints mapped through the transform (hence inside
/// (0, 1) and asymmetric around the estimate).
#[derive(Debug, Clone)]
pub struct Estimate {
    pub label: String,
    pub value: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

/// Optimizer and curvature diagnostics for a fit.
#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    pub iterations: u32,
    /// Gradient infinity norm at the final iterate (packed scale).
    pub gradient_norm: f64,
    /// Condition number of the negated curvature matrix when it was
    /// computed, whether or not it was usable.
    pub hessian_condition: Option<f64>,
    /// Objective value after each accepted step (starts at the warm start).
    pub trajectory: Vec<f64>,
    /// Per-stratum inner solves at the final parameters.
    pub inner: Vec<InnerSolution>,
    /// The starting point the optimizer actually used.
    pub warm_start: ParamVector,
}

/// A fitted profile-likelihood model.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub variant: Variant,
    /// Final parameters on the natural scale.
    pub params: ParamVector,
    /// Profile log-likelihood at the final parameters.
    pub loglik: f64,
    pub converged: bool,
    /// Per-component estimates in packed order: outcome intercepts,
    /// outcome covariate effects, then (by variant) disease intercepts,
    /// disease covariate effects, the disease-outcome effect, and the
    /// stratum disease rates.
    pub estimates: Vec<Estimate>,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    /// Looks up an estimate by its label, e.g. `beta1[1]` or `xi[2]`.
    pub fn estimate(&self, label: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.label == label)
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("warm start failed: {0}")]
    WarmStart(#[from] NaiveError),
    #[error("no disease-rate candidate gives a feasible starting point")]
    NoFeasibleStart,
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error(transparent)]
    NumDiff(#[from] NumDiffError),
}

/// Maximizes the profile log-likelihood of `variant` on `data`.
///
/// `rates` follows the same contract as [`profile::profile_eval`]: required
/// for the known-rates variant, rejected otherwise. Standard errors come
/// from the inverted finite-difference curvature at the optimum; when that
/// matrix is numerically singular or too ill-conditioned the estimates are
/// returned without uncertainty and the condition number is reported in the
/// diagnostics.
pub fn fit(
    variant: Variant,
    data: &StratifiedDataset,
    rates: Option<&KnownRates>,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    profile::check_rates(variant, rates, data.k())?;
    let start = match &options.initial {
        Some(p) => {
            p.validate(variant, data.k(), data.q())?;
            p.clone()
        }
        None => warm_start(variant, data, rates)?,
    };
    let theta0 = start.pack(variant)?;

    let k = data.k();
    let q = data.q();
    let objective = |theta: &[f64]| match ParamVector::unpack(theta, variant, k, q) {
        Ok(p) => profile_loglik(variant, &p, data, rates),
        Err(_) => f64::NAN,
    };

    let outcome = bfgs::maximize(
        objective,
        &theta0,
        &BfgsOptions {
            max_iterations: options.max_iterations,
            gradient_tolerance: options.gradient_tolerance,
            value_tolerance: options.value_tolerance,
        },
    )
    .map_err(|e| match e {
        BfgsError::NonFiniteStart => FitError::NonFiniteStart,
        BfgsError::NumDiff(inner) => FitError::NumDiff(inner),
    })?;
    let converged = outcome.converged && outcome.value > PENALTY_FLOOR;

    let params = ParamVector::unpack(&outcome.x, variant, k, q)?;
    let eval = profile::profile_eval(variant, &params, data, rates);
    let inner = match &eval {
        Ok(e) => e.inner.clone(),
        Err(_) => Vec::new(),
    };

    let mut hessian_condition = None;
    let mut covariance = None;
    if converged {
        let dim = outcome.x.len();
        let hess = numdiff::hessian(objective, &outcome.x)?;
        let mut neg = vec![0.0; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                neg[a * dim + b] = -0.5 * (hess[a * dim + b] + hess[b * dim + a]);
            }
        }
        let condition = symmetric_condition(&neg, dim);
        hessian_condition = Some(condition);
        if condition.is_finite() && condition <= CONDITION_LIMIT {
            covariance = cholesky(&neg, dim).map(|chol| cholesky_inverse(&chol, dim));
        }
    }

    let estimates = build_estimates(variant, &outcome.x, covariance.as_deref(), k, q);

    Ok(FitResult {
        variant,
        params,
        loglik: outcome.value,
        converged,
        estimates,
        diagnostics: FitDiagnostics {
            iterations: outcome.iterations,
            gradient_norm: outcome.gradient_norm,
            hessian_condition,
            trajectory: outcome.trajectory,
            inner,
            warm_start: start,
        },
    })
}

/// Packed-order labels for a variant's parameter vector.
pub fn component_labels(variant: Variant, k: usize, q: usize) -> Vec<String> {
    let mut labels = Vec::with_capacity(ParamVector::dim(variant, k, q));
    labels.extend((1..=k).map(|i| format!("beta0[{i}]")));
    labels.extend((1..=q).map(|j| format!("beta1[{j}]")));
    if variant != Variant::Pm1 {
        labels.extend((1..=k).map(|i| format!("gamma0[{i}]")));
    }
    labels.extend((1..=q).map(|j| format!("gamma1[{j}]")));
    labels.push("gamma2".to_string());
    if variant == Variant::Pm3 {
        labels.extend((1..=k).map(|i| format!("xi[{i}]")));
    }
    labels
}

fn build_estimates(
    variant: Variant,
    theta: &[f64],
    covariance: Option<&[f64]>,
    k: usize,
    q: usize,
) -> Vec<Estimate> {
    let labels = component_labels(variant, k, q);
    let dim = theta.len();
    let xi_start = if variant == Variant::Pm3 { dim - k } else { dim };
    labels
        .into_iter()
        .enumerate()
        .map(|(j, label)| {
            let se_packed = covariance.and_then(|cov| {
                let v = cov[j * dim + j];
                (v > 0.0).then(|| v.sqrt())
            });
            if j >= xi_start {
                let value = expit(theta[j]);
                let slope = value * (1.0 - value);
                Estimate {
                    label,
                    value,
                    se: se_packed.map(|s| s * slope),
                    ci_lower: se_packed.map(|s| expit(theta[j] - Z_975 * s)),
                    ci_upper: se_packed.map(|s| expit(theta[j] + Z_975 * s)),
                }
            } else {
                Estimate {
                    label,
                    value: theta[j],
                    se: se_packed,
                    ci_lower: se_packed.map(|s| theta[j] - Z_975 * s),
                    ci_upper: se_packed.map(|s| theta[j] + Z_975 * s),
                }
            }
        })
        .collect()
}

/// Builds the default starting point: outcome parameters from the
/// stratum-and-disease-adjusted logistic fit, disease parameters from a
/// disease-model logistic fit with the case-control intercept offset
/// removed, and (for the estimated-rates variant) the disease rates from
/// the best candidate on a coarse grid.
fn warm_start(
    variant: Variant,
    data: &StratifiedDataset,
    rates: Option<&KnownRates>,
) -> Result<ParamVector, FitError> {
    let k = data.k();
    let q = data.q();

    let (beta0, beta1) = match naive::fit_unconditional(data, Adjustment::StratumDisease) {
        Ok(out) if out.fit.coefficients.iter().all(|c| c.is_finite()) => {
            let coefs = &out.fit.coefficients;
            let intercept = coefs[0];
            let mut beta0 = vec![intercept; k];
            // Stratum indicator coefficients sit right after the covariates.
            for (i, b0) in beta0.iter_mut().enumerate().skip(1) {
                *b0 = intercept + coefs[1 + q + (i - 1)];
            }
            (beta0, coefs[1..1 + q].to_vec())
        }
        _ => (moment_intercepts(data), vec![0.0; q]),
    };

    let design = naive::disease_design(data);
    let disease = naive::logistic_fit(&design.response, &design.matrix, data.n_total(), k + q + 1);
    let (gamma0_cc, gamma1, gamma2) = match disease {
        Ok(fit) if fit.coefficients.iter().all(|c| c.is_finite()) => {
            let c = fit.coefficients;
            (c[..k].to_vec(), c[k..k + q].to_vec(), c[k + q])
        }
        _ => (vec![0.0; k], vec![0.0; q], 0.0),
    };

    match variant {
        Variant::Pm1 => Ok(ParamVector {
            beta0,
            beta1,
            gamma0: None,
            gamma1,
            gamma2,
            xi: None,
        }),
        Variant::Pm2 => {
            let r = rates.expect("presence checked by the caller").as_slice();
            let gamma0 = corrected_intercepts(data, &gamma0_cc, r);
            Ok(ParamVector { beta0, beta1, gamma0: Some(gamma0), gamma1, gamma2, xi: None })
        }
        Variant::Pm3 => {
            let mut best: Option<(f64, ParamVector)> = None;
            for &candidate in &RATE_CANDIDATES {
                let xi = vec![candidate; k];
                let gamma0 = corrected_intercepts(data, &gamma0_cc, &xi);
                let p = ParamVector {
                    beta0: beta0.clone(),
                    beta1: beta1.clone(),
                    gamma0: Some(gamma0),
                    gamma1: gamma1.clone(),
                    gamma2,
                    xi: Some(xi),
                };
                let value = profile_loglik(Variant::Pm3, &p, data, None);
                if value.is_finite()
                    && value > PENALTY_FLOOR
                    && best.as_ref().is_none_or(|(v, _)| value > *v)
                {
                    best = Some((value, p));
                }
            }
            best.map(|(_, p)| p).ok_or(FitError::NoFeasibleStart)
        }
    }
}

/// Per-stratum logit of the outcome mean, clamped to a sane range, used
/// when the warm-start regression is unavailable.
fn moment_intercepts(data: &StratifiedDataset) -> Vec<f64> {
    data.strata()
        .iter()
        .map(|s| {
            let mean = (0..s.n()).map(|i| f64::from(s.outcome(i))).sum::<f64>() / s.n() as f64;
            let p = mean.clamp(0.02, 0.98);
            (p / (1.0 - p)).ln()
        })
        .collect()
}

/// Removes the case-control sampling offset from retrospective disease
/// intercepts: subtract `log[(n1_k/n0_k) (1-rate_k)/rate_k]` so the
/// intercept refers to the source population.
fn corrected_intercepts(data: &StratifiedDataset, gamma0_cc: &[f64], rates: &[f64]) -> Vec<f64> {
    data.strata()
        .iter()
        .zip(gamma0_cc)
        .zip(rates)
        .map(|((s, &g), &rate)| {
            let n1 = s.n_cases() as f64;
            let n0 = s.n_controls() as f64;
            g - ((n1 / n0) * (1.0 - rate) / rate).ln()
        })
        .collect()
}
