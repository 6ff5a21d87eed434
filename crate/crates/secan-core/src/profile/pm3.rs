//! Estimated-rates profile objective (one stratum).
//!
//! The stratum disease rates are unknown free parameters here, so the
//! retrospective sampling terms `-n1_k log xi_k - n0_k log(1 - xi_k)` stay
//! in the objective, and the masses are profiled at the trial rate exactly
//! as in the known-rates variant:
//!
//! ```text
//! [rate-constrained stratum objective at rate xi_k]
//!   - n1_k log xi_k - n0_k log(1 - xi_k)
//! ```
//!
//! At a stationary rate the constrained masses coincide with the closed
//! form `p_ki = 1 / [ (n1_k/xi_k) b1_ki + (n0_k/(1-xi_k)) b0_ki ]` (the
//! multiplier is then `n1_k/xi_k - n0_k/(1-xi_k)`), but unlike that plug-in
//! expression the constrained profile is well defined and concave in the
//! masses at every feasible rate, so mass normalization holds throughout
//! optimization, not just at the optimum.

use crate::data::Stratum;
use crate::params::ParamVector;

use super::inner::InnerError;
use super::{pm2, StratumEvalParts};

pub(crate) fn eval_stratum(
    params: &ParamVector,
    stratum: &Stratum,
    k: usize,
) -> Result<StratumEvalParts, InnerError> {
    let xi = params.xi.as_ref().expect("estimated-rates variant carries xi")[k];
    let mut parts = pm2::eval_stratum(params, stratum, k, xi)?;
    let n1 = stratum.n_cases() as f64;
    let n0 = stratum.n_controls() as f64;
    parts.contribution -= n1 * xi.ln() + n0 * (-xi).ln_1p();
    Ok(parts)
}
