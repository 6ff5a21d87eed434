//! Parameter containers and the flat packing used by the optimizer.
//!
//! The free parameter vector is laid out as
//!
//! ```text
//! (beta0_1..beta0_K, beta1_1..beta1_q, [gamma0_1..gamma0_K,]
//!  gamma1_1..gamma1_q, gamma2 [, logit xi_1..logit xi_K])
//! ```
//!
//! The `gamma0` block exists only for [`Variant::Pm2`] and [`Variant::Pm3`]:
//! under the rare-disease approximation the disease intercepts cancel out of
//! the likelihood, so [`Variant::Pm1`] neither estimates nor stores them.
//! The trailing block of stratum disease rates exists only for
//! [`Variant::Pm3`] and travels through the optimizer on the logit scale so
//! the rates stay inside (0, 1) without constraints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terms::expit;

/// Which profile-likelihood estimator a parameter vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Rare disease in every stratum; no disease intercepts.
    Pm1,
    /// Known per-stratum disease rates imposed as constraints.
    Pm2,
    /// Per-stratum disease rates estimated jointly.
    Pm3,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Pm1 => "pm1",
            Variant::Pm2 => "pm2",
            Variant::Pm3 => "pm3",
        }
    }
}

/// Structured model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    /// Secondary-outcome intercepts, one per stratum.
    pub beta0: Vec<f64>,
    /// Secondary-outcome covariate effects.
    pub beta1: Vec<f64>,
    /// Disease intercepts (absent under the rare-disease variant).
    pub gamma0: Option<Vec<f64>>,
    /// Disease covariate effects.
    pub gamma1: Vec<f64>,
    /// Disease effect of the secondary outcome.
    pub gamma2: f64,
    /// Stratum disease rates, natural scale (estimated variant only).
    pub xi: Option<Vec<f64>>,
}

/// Validation failures for parameter containers.
#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("flat vector has length {got}, expected {expected} for {variant} with k={k}, q={q}")]
    FlatLen { variant: &'static str, k: usize, q: usize, got: usize, expected: usize },
    #[error("{variant} requires the {block} block")]
    MissingBlock { variant: &'static str, block: &'static str },
    #[error("{variant} does not use the {block} block")]
    UnexpectedBlock { variant: &'static str, block: &'static str },
    #[error("{block} has length {got}, expected {expected}")]
    BlockLen { block: &'static str, got: usize, expected: usize },
    #[error("rate {value} at position {index} is outside (0, 1)")]
    RateDomain { index: usize, value: f64 },
    #[error("non-finite value in the {block} block")]
    NonFinite { block: &'static str },
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl ParamVector {
    /// Length of the flat vector for the given shape.
    pub fn dim(variant: Variant, k: usize, q: usize) -> usize {
        match variant {
            Variant::Pm1 => k + 2 * q + 1,
            Variant::Pm2 => 2 * k + 2 * q + 1,
            Variant::Pm3 => 3 * k + 2 * q + 1,
        }
    }

    /// Checks block presence and lengths against `(variant, k, q)`.
    pub fn validate(&self, variant: Variant, k: usize, q: usize) -> Result<(), ParamError> {
        let name = variant.name();
        let check = |block: &'static str, got: usize, expected: usize| {
            if got == expected {
                Ok(())
            } else {
                Err(ParamError::BlockLen { block, got, expected })
            }
        };
        check("beta0", self.beta0.len(), k)?;
        check("beta1", self.beta1.len(), q)?;
        check("gamma1", self.gamma1.len(), q)?;
        match (variant, &self.gamma0) {
            (Variant::Pm1, Some(_)) => {
                return Err(ParamError::UnexpectedBlock { variant: name, block: "gamma0" })
            }
            (Variant::Pm2 | Variant::Pm3, None) => {
                return Err(ParamError::MissingBlock { variant: name, block: "gamma0" })
            }
            (Variant::Pm2 | Variant::Pm3, Some(g0)) => check("gamma0", g0.len(), k)?,
            (Variant::Pm1, None) => {}
        }
        match (variant, &self.xi) {
            (Variant::Pm3, None) => {
                return Err(ParamError::MissingBlock { variant: name, block: "xi" })
            }
            (Variant::Pm1 | Variant::Pm2, Some(_)) => {
                return Err(ParamError::UnexpectedBlock { variant: name, block: "xi" })
            }
            (Variant::Pm3, Some(xi)) => {
                check("xi", xi.len(), k)?;
                for (index, &value) in xi.iter().enumerate() {
                    if !(value > 0.0 && value < 1.0) {
                        return Err(ParamError::RateDomain { index, value });
                    }
                }
            }
            _ => {}
        }
        for (block, vals) in [
            ("beta0", &self.beta0),
            ("beta1", &self.beta1),
            ("gamma1", &self.gamma1),
        ] {
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(ParamError::NonFinite { block });
            }
        }
        if !self.gamma2.is_finite() {
            return Err(ParamError::NonFinite { block: "gamma2" });
        }
        Ok(())
    }

    /// Flattens into optimizer order (rates on the logit scale).
    pub fn pack(&self, variant: Variant) -> Result<Vec<f64>, ParamError> {
        let k = self.beta0.len();
        let q = self.beta1.len();
        self.validate(variant, k, q)?;
        let mut flat = Vec::with_capacity(Self::dim(variant, k, q));
        flat.extend_from_slice(&self.beta0);
        flat.extend_from_slice(&self.beta1);
        if let Some(g0) = &self.gamma0 {
            flat.extend_from_slice(g0);
        }
        flat.extend_from_slice(&self.gamma1);
        flat.push(self.gamma2);
        if let Some(xi) = &self.xi {
            flat.extend(xi.iter().map(|&v| logit(v)));
        }
        Ok(flat)
    }

    /// Rebuilds the structured form from a flat vector.
    pub fn unpack(flat: &[f64], variant: Variant, k: usize, q: usize) -> Result<Self, ParamError> {
        let expected = Self::dim(variant, k, q);
        if flat.len() != expected {
            return Err(ParamError::FlatLen {
                variant: variant.name(),
                k,
                q,
                got: flat.len(),
                expected,
            });
        }
        let mut pos = 0usize;
        let mut take = |len: usize| {
            let s = flat[pos..pos + len].to_vec();
            pos += len;
            s
        };
        let beta0 = take(k);
        let beta1 = take(q);
        let gamma0 = match variant {
            Variant::Pm1 => None,
            _ => Some(take(k)),
        };
        let gamma1 = take(q);
        let gamma2 = take(1)[0];
        let xi = match variant {
            Variant::Pm3 => Some(take(k).into_iter().map(expit).collect()),
            _ => None,
        };
        Ok(Self { beta0, beta1, gamma0, gamma1, gamma2, xi })
    }
}

/// Validated per-stratum disease rates for the known-rates estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownRates(Vec<f64>);

impl KnownRates {
    pub fn new(rates: Vec<f64>) -> Result<Self, ParamError> {
        for (index, &value) in rates.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(ParamError::RateDomain { index, value });
            }
        }
        Ok(Self(rates))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
