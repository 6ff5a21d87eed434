//! Rate-constrained profile objective (one stratum), shared by the
//! known-rates and estimated-rates variants.
//!
//! Given a stratum disease rate `xi` (known a priori, or a free parameter),
//! the masses maximize `sum_i log p_ki` subject to `sum p = 1` and
//! `sum p b1 = xi`, giving `p_ki = 1 / (n_k + lambda_k (b1_ki - xi))` with
//! the multiplier from [`super::inner::solve_rate_multiplier`]. The stratum
//! contribution is
//!
//! ```text
//! sum_i [ log P(Y_ki|x_ki) + D_ki eta_ki - log(1 + exp(eta_ki)) ]
//!   - sum_i [ log_star( d_ki / n_k , n_k ) + log n_k ]
//! ```
//!
//! with `eta_ki = gamma0_k + gamma1' x_ki + gamma2 Y_ki` and `d_ki = 1 /
//! p_ki`. The estimated-rates variant adds its rate terms on top (see
//! [`super::pm3`]). At any multiplier produced by the solver every `d_ki`
//! exceeds 1, so the pseudo-logarithm runs in its exact branch; the
//! quadratic branch only guards hypothetical perturbed evaluations.

use crate::data::Stratum;
use crate::kahan::KahanSum;
use crate::params::ParamVector;
use crate::terms::{log1pexp, log_secondary_prob, log_star, mixed_disease_probs};

use super::inner::{solve_rate_multiplier, InnerError};
use super::StratumEvalParts;

pub(crate) fn eval_stratum(
    params: &ParamVector,
    stratum: &Stratum,
    k: usize,
    rate: f64,
) -> Result<StratumEvalParts, InnerError> {
    let n = stratum.n();
    let nf = n as f64;
    let beta0_k = params.beta0[k];
    let gamma0 = params.gamma0.as_ref().expect("rate-constrained variants carry gamma0");
    let gamma0_k = gamma0[k];

    let mut b1 = Vec::with_capacity(n);
    for i in 0..n {
        let (b1_i, _) = mixed_disease_probs(
            beta0_k,
            &params.beta1,
            gamma0_k,
            &params.gamma1,
            params.gamma2,
            stratum.covariates(i),
        );
        b1.push(b1_i);
    }
    let inner = solve_rate_multiplier(&b1, rate)?;
    let lambda = inner.value;

    let ln_n = nf.ln();
    let mut acc = KahanSum::new();
    let mut log_inv_mass = Vec::with_capacity(n);
    for (i, &b1_i) in b1.iter().enumerate() {
        let x = stratum.covariates(i);
        let y = stratum.outcome(i);
        acc.add(log_secondary_prob(beta0_k, &params.beta1, x, y));
        let g: f64 = params.gamma1.iter().zip(x).map(|(a, b)| a * b).sum();
        let eta = gamma0_k + g + params.gamma2 * f64::from(y);
        if stratum.disease(i) == 1 {
            acc.add(eta);
        }
        acc.add(-log1pexp(eta));
        let d = nf + lambda * (b1_i - rate);
        log_inv_mass.push(d.ln());
        acc.add(-(log_star(d / nf, n) + ln_n));
    }
    Ok(StratumEvalParts { contribution: acc.value(), inner, log_inv_mass })
}

/// Outcome-mixed disease probabilities for a whole stratum (used by mass
/// recovery to audit the rate constraint).
pub(crate) fn stratum_b1(params: &ParamVector, stratum: &Stratum, k: usize) -> Vec<f64> {
    let gamma0_k = params.gamma0.as_ref().expect("rate-constrained variants carry gamma0")[k];
    (0..stratum.n())
        .map(|i| {
            mixed_disease_probs(
                params.beta0[k],
                &params.beta1,
                gamma0_k,
                &params.gamma1,
                params.gamma2,
                stratum.covariates(i),
            )
            .0
        })
        .collect()
}
