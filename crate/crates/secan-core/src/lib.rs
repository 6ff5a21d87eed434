//! Estimation of covariate effects on a binary secondary outcome in matched
//! (stratified) case-control data.
//!
//! Case-control sampling distorts the marginal law of everything that is
//! associated with the disease, so an ordinary regression of a secondary
//! outcome on covariates is biased. This crate implements three
//! profile-likelihood estimators that model the retrospective sampling
//! explicitly, treating the within-stratum covariate distribution as
//! nonparametric masses that are profiled out in closed form:
//!
//! * [`Variant::Pm1`] - assumes the disease is rare in every stratum.
//! * [`Variant::Pm2`] - uses known per-stratum disease rates as constraints.
//! * [`Variant::Pm3`] - estimates the per-stratum disease rates jointly.
//!
//! Alongside the estimators there are naive comparators (conditional
//! logistic regression with exact denominators, and unconditional logistic
//! regressions with several adjustment sets) and a simulation harness that
//! generates a finite source population, draws matched case-control samples,
//! and summarizes estimator performance over replicates.
//!
//! The CLI crate layers CSV ingestion and report writing on top of this one;
//! all shared types are re-exported from the crate root.

pub mod data;
pub mod fitter;
pub mod kahan;
pub mod linalg;
pub mod naive;
pub mod params;
pub mod profile;
pub mod sim;
pub mod terms;

pub use data::{DataError, Observation, StratifiedDataset, Stratum};
pub use fitter::{fit, Estimate, FitDiagnostics, FitError, FitOptions, FitResult, Z_975};
pub use params::{KnownRates, ParamError, ParamVector, Variant};
pub use profile::{profile_eval, profile_loglik, recover_p, InnerSolution, ProfileError, ProfileEval};
pub use sim::{
    run_replicates, run_replicates_detailed, summarize_records, Method, MethodRecord, RateSpec,
    ReplicateSummary, SimConfig, SimError, SummaryRow,
};
