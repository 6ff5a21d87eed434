//! Rare-disease profile objective (one stratum).
//!
//! With the disease rare in every stratum, the disease intercepts cancel and
//! each case contributes a relative weight `a_ki = sum_y P(y|x_ki)
//! exp(gamma1' x_ki + gamma2 y)`. Profiling the stratum masses in closed
//! form leaves, per stratum,
//!
//! ```text
//! sum_i [ log P(Y_ki|x_ki) + D_ki (gamma1' x_ki + gamma2 Y_ki) ]
//!   + n1_k log xi_k
//!   - sum_i log_star( (n0_k + n1_k xi_k a_ki) / n_k , n_k )
//! ```
//!
//! with `xi_k` from the scale equation in [`super::inner`]. The mass terms
//! are expressed relative to uniform masses (the `1/n_k` normalization), so
//! at `gamma1 = 0, gamma2 = 0` the whole objective collapses to
//! `sum log P(Y|x)` exactly.

use crate::data::Stratum;
use crate::kahan::KahanSum;
use crate::params::ParamVector;
use crate::terms::{log_rare_disease_weight, log_secondary_prob, log_star_from_log};

use super::inner::{log_mass_denominator_rare, solve_rare_scale, InnerError};
use super::StratumEvalParts;

pub(crate) fn eval_stratum(
    params: &ParamVector,
    stratum: &Stratum,
    k: usize,
) -> Result<StratumEvalParts, InnerError> {
    let n = stratum.n();
    let n1 = stratum.n_cases();
    let n0 = stratum.n_controls();
    let beta0_k = params.beta0[k];

    let mut log_a = Vec::with_capacity(n);
    for i in 0..n {
        log_a.push(log_rare_disease_weight(
            beta0_k,
            &params.beta1,
            &params.gamma1,
            params.gamma2,
            stratum.covariates(i),
        ));
    }
    let inner = solve_rare_scale(&log_a, n1, n0)?;
    let t = inner.value.ln();

    let ln_n = (n as f64).ln();
    let mut acc = KahanSum::new();
    let mut log_inv_mass = Vec::with_capacity(n);
    for (i, &log_a_i) in log_a.iter().enumerate() {
        let x = stratum.covariates(i);
        let y = stratum.outcome(i);
        acc.add(log_secondary_prob(beta0_k, &params.beta1, x, y));
        if stratum.disease(i) == 1 {
            let g: f64 = params.gamma1.iter().zip(x).map(|(a, b)| a * b).sum();
            acc.add(g + params.gamma2 * f64::from(y));
        }
        let log_denom = log_mass_denominator_rare(t, log_a_i, n1 as f64, n0 as f64);
        log_inv_mass.push(log_denom);
        acc.add(-log_star_from_log(log_denom - ln_n, n));
    }
    acc.add(n1 as f64 * t);
    Ok(StratumEvalParts { contribution: acc.value(), inner, log_inv_mass })
}
