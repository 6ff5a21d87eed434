//! Monte Carlo study of the estimators on matched case-control samples
//! drawn from a generated finite source population.
//!
//! One master seed drives everything. The population is generated from its
//! own random stream and each replicate's sampling gets an independent
//! stream derived from the master seed and the replicate index, so results
//! are reproducible and independent of how replicates are scheduled across
//! threads.

pub mod population;
pub mod quadrature;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, StratifiedDataset};
use crate::fitter::{fit, FitOptions, Z_975};
use crate::kahan::KahanSum;
use crate::naive::{self, Adjustment};
use crate::params::{KnownRates, Variant};

pub use population::{
    calibrate_gamma0, expected_stratum_rate, generate_population, sample_matched_cc, Calibration,
    Population, PopulationStratum, Subject,
};

/// How the disease-model intercept is chosen for the generated population.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSpec {
    /// Calibrate a single shared intercept so the expected overall disease
    /// rate equals this value.
    Target(f64),
    /// Use these per-stratum intercepts directly.
    Explicit(Vec<f64>),
}

/// Configuration of one simulation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Finite source population size.
    pub n_population: usize,
    /// Per-stratum population shares; positive, summing to one.
    pub stratum_shares: Vec<f64>,
    /// Outcome-model intercept per stratum.
    pub beta0: Vec<f64>,
    /// Outcome-model covariate effect (the estimand).
    pub beta1: f64,
    /// Disease-model covariate effect.
    pub gamma1: f64,
    /// Disease-model secondary-outcome effect.
    pub gamma2: f64,
    /// Disease-model intercept specification.
    pub rate: RateSpec,
    /// Cases sampled per stratum in each replicate.
    pub n_cases: usize,
    /// Controls sampled per stratum in each replicate.
    pub n_controls: usize,
    /// Number of Monte Carlo replicates.
    pub n_replicates: usize,
    /// Master seed for the whole study.
    pub seed: u64,
}

impl SimConfig {
    /// Number of strata.
    pub fn k(&self) -> usize {
        self.stratum_shares.len()
    }

    /// The built-in two-stratum benchmark scenario: a 60/40 split,
    /// outcome intercepts -1 and -0.2, an outcome effect of ln 2, and
    /// disease effects ln 0.5 (covariate) and ln 0.1 (outcome), with the
    /// shared disease intercept calibrated to `target_rate`.
    pub fn two_stratum_benchmark(target_rate: f64, n_per_group: usize) -> Self {
        Self {
            n_population: 200_000,
            stratum_shares: vec![0.6, 0.4],
            beta0: vec![-1.0, -0.2],
            beta1: (2.0f64).ln(),
            gamma1: (0.5f64).ln(),
            gamma2: (0.1f64).ln(),
            rate: RateSpec::Target(target_rate),
            n_cases: n_per_group,
            n_controls: n_per_group,
            n_replicates: 1000,
            seed: 20260816,
        }
    }

    /// Checks the structural invariants that do not depend on the
    /// generated population.
    pub fn validate(&self) -> Result<(), SimError> {
        let k = self.k();
        if k == 0 {
            return Err(SimError::Config("at least one stratum is required".into()));
        }
        if self.beta0.len() != k {
            return Err(SimError::Config(format!(
                "beta0 has {} entries but there are {k} stratum shares",
                self.beta0.len()
            )));
        }
        if self.stratum_shares.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(SimError::Config("stratum shares must be positive".into()));
        }
        let total: f64 = self.stratum_shares.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::Config(format!("stratum shares sum to {total}, not 1")));
        }
        if let RateSpec::Target(t) = self.rate {
            if !(t > 0.0 && t < 1.0) {
                return Err(SimError::Config(format!("target rate {t} is outside (0,1)")));
            }
        }
        if let RateSpec::Explicit(g) = &self.rate {
            if g.len() != k {
                return Err(SimError::Config(format!(
                    "{} explicit intercepts for {k} strata",
                    g.len()
                )));
            }
        }
        if self.n_cases == 0 || self.n_controls == 0 {
            return Err(SimError::Config("need at least one case and one control".into()));
        }
        if self.n_replicates == 0 {
            return Err(SimError::Config("need at least one replicate".into()));
        }
        if self.n_population < 2 * k {
            return Err(SimError::Config("population too small for the strata".into()));
        }
        Ok(())
    }

    /// The per-stratum disease intercepts: explicit ones as given,
    /// otherwise calibrated to the target overall rate.
    pub fn resolve_gamma0(&self) -> Result<Vec<f64>, SimError> {
        match &self.rate {
            RateSpec::Explicit(g) => Ok(g.clone()),
            RateSpec::Target(t) => Ok(calibrate_gamma0(self, *t)?.gamma0),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation configuration: {0}")]
    Config(String),
    #[error(
        "cannot calibrate the disease intercept: achievable rates span \
         [{rate_lo:.3e}, {rate_hi:.3e}] but the target is {target}"
    )]
    Calibration { rate_lo: f64, rate_hi: f64, target: f64 },
    #[error(
        "stratum {stratum} has {available} cases in the population but \
         {requested} were requested"
    )]
    InsufficientCases { stratum: usize, available: usize, requested: usize },
    #[error(
        "stratum {stratum} has {available} controls in the population but \
         {requested} were requested"
    )]
    InsufficientControls { stratum: usize, available: usize, requested: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// The estimators compared in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pm1,
    Pm2,
    Pm3,
    /// Conditional logistic regression of the outcome on the covariate,
    /// stratified on (stratum, disease) cells.
    Conditional,
    /// Unconditional logistic regression of the outcome on the covariate.
    Unadjusted,
    /// Unconditional regression with stratum indicators.
    Adjusted1,
    /// Unconditional regression with stratum indicators and disease status.
    Adjusted2,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Pm1,
        Method::Pm2,
        Method::Pm3,
        Method::Conditional,
        Method::Unadjusted,
        Method::Adjusted1,
        Method::Adjusted2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pm1 => "pm1",
            Method::Pm2 => "pm2",
            Method::Pm3 => "pm3",
            Method::Conditional => "conditional",
            Method::Unadjusted => "unadjusted",
            Method::Adjusted1 => "adjusted1",
            Method::Adjusted2 => "adjusted2",
        }
    }

    /// Inverse of [`Method::name`].
    pub fn from_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// One successful estimate of the outcome covariate effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodRecord {
    pub estimate: f64,
    pub se: f64,
    /// Whether the 95% Wald interval contains the true effect.
    pub covered: bool,
}

/// Performance of one method aggregated over replicates. A replicate
/// counts as used only when the method converged with a usable standard
/// error; everything else is a failure. Moment fields are `None` when too
/// few replicates were used to define them.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub n_used: usize,
    pub n_fail: usize,
    /// Mean estimate minus the true effect.
    pub bias: Option<f64>,
    /// Bias divided by the true effect (when that is nonzero).
    pub relative_bias: Option<f64>,
    /// Mean reported standard error.
    pub mean_se: Option<f64>,
    /// Sample standard deviation (n-1 convention) of the estimates.
    pub emp_sd: Option<f64>,
    /// 100 times the mean squared error of the estimates.
    pub mse_x100: Option<f64>,
    /// Fraction of 95% Wald intervals containing the true effect.
    pub coverage: Option<f64>,
}

/// Full output of a study: the scenario facts plus one row per method.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSummary {
    pub n_replicates: usize,
    pub true_beta1: f64,
    /// Disease intercepts the population was generated under.
    pub gamma0: Vec<f64>,
    /// Realized per-stratum disease rates in the finite population (these
    /// are the rates the known-rates estimator is given).
    pub population_stratum_rates: Vec<f64>,
    /// Realized overall disease rate in the finite population.
    pub population_overall_rate: f64,
    pub rows: Vec<SummaryRow>,
}

impl ReplicateSummary {
    pub fn row(&self, method: Method) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Distinguishes the independent random streams derived from one master
/// seed.
#[derive(Debug, Clone, Copy)]
pub enum StreamKind {
    Population,
    Replicate(u64),
}

/// The documented seed-splitting rule: the 32-byte stream seed is the
/// little-endian concatenation of the master seed, a purpose word
/// (0 = population, 1 = replicate sampling), the replicate index, and a
/// reserved zero word.
pub fn stream(master_seed: u64, kind: StreamKind) -> ChaCha8Rng {
    let (purpose, index) = match kind {
        StreamKind::Population => (0u64, 0u64),
        StreamKind::Replicate(i) => (1u64, i),
    };
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&purpose.to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Runs the full study: generates the population, draws `n_replicates`
/// matched samples, fits every requested method on each sample, and
/// aggregates. Replicates run in parallel; the aggregation pass consumes
/// the per-replicate records in replicate order, so the summary is
/// identical whatever the thread count.
pub fn run_replicates(
    config: &SimConfig,
    methods: &[Method],
) -> Result<ReplicateSummary, SimError> {
    run_replicates_detailed(config, methods).map(|(summary, _)| summary)
}

/// Per-replicate fit records: `records[r][j]` is method `methods[j]` on
/// replicate `r`, `None` when that fit failed.
pub type StudyRecords = Vec<Vec<Option<MethodRecord>>>;

/// Like [`run_replicates`], but also returns the per-replicate records
/// behind the summary, for audit dumps.
pub fn run_replicates_detailed(
    config: &SimConfig,
    methods: &[Method],
) -> Result<(ReplicateSummary, StudyRecords), SimError> {
    assert!(!methods.is_empty(), "at least one method is required");
    config.validate()?;
    let mut pop_rng = stream(config.seed, StreamKind::Population);
    let population = generate_population(config, &mut pop_rng)?;
    let rates = population.stratum_rates();
    if rates.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(SimError::Config(
            "a population stratum has no cases or no controls; \
             increase the population size or the target rate"
                .into(),
        ));
    }
    let known_rates =
        KnownRates::new(rates.clone()).expect("realized rates checked to lie in (0,1)");

    let records: Vec<Vec<Option<MethodRecord>>> = (0..config.n_replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(config.seed, StreamKind::Replicate(r));
            let data = sample_matched_cc(&population, config.n_cases, config.n_controls, &mut rng)
                .expect("per-stratum availability checked before the replicate loop");
            methods
                .iter()
                .map(|&m| run_method(m, &data, &known_rates, config.beta1))
                .collect()
        })
        .collect();

    let rows = methods
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let column: Vec<Option<MethodRecord>> =
                records.iter().map(|row| row[j]).collect();
            summarize_records(m, &column, config.beta1)
        })
        .collect();

    let summary = ReplicateSummary {
        n_replicates: config.n_replicates,
        true_beta1: config.beta1,
        gamma0: population.gamma0().to_vec(),
        population_stratum_rates: rates,
        population_overall_rate: population.overall_rate(),
        rows,
    };
    Ok((summary, records))
}

/// Fits one method on one sample. `None` means the method failed on this
/// replicate: an error, non-convergence, or no usable standard error.
fn run_method(
    method: Method,
    data: &StratifiedDataset,
    known_rates: &KnownRates,
    true_beta1: f64,
) -> Option<MethodRecord> {
    let (estimate, se) = match method {
        Method::Pm1 | Method::Pm2 | Method::Pm3 => {
            let (variant, rates) = match method {
                Method::Pm1 => (Variant::Pm1, None),
                Method::Pm2 => (Variant::Pm2, Some(known_rates)),
                _ => (Variant::Pm3, None),
            };
            let fit = fit(variant, data, rates, &FitOptions::default()).ok()?;
            if !fit.converged {
                return None;
            }
            let est = fit.estimate("beta1[1]")?;
            (est.value, est.se?)
        }
        Method::Conditional => {
            let out = naive::fit_conditional(data, &Default::default()).ok()?;
            if !out.fit.converged {
                return None;
            }
            let cov = out.fit.covariance.as_ref()?;
            (out.fit.coefficients[0], cov[0].sqrt())
        }
        Method::Unadjusted | Method::Adjusted1 | Method::Adjusted2 => {
            let adjustment = match method {
                Method::Unadjusted => Adjustment::None,
                Method::Adjusted1 => Adjustment::Stratum,
                _ => Adjustment::StratumDisease,
            };
            let out = naive::fit_unconditional(data, adjustment).ok()?;
            if !out.fit.converged || out.fit.separation {
                return None;
            }
            let cov = out.fit.covariance.as_ref()?;
            let j = out.x_cols.start;
            let p = out.labels.len();
            (out.fit.coefficients[j], cov[j * p + j].sqrt())
        }
    };
    if !estimate.is_finite() || !se.is_finite() || se <= 0.0 {
        return None;
    }
    let covered =
        estimate - Z_975 * se <= true_beta1 && true_beta1 <= estimate + Z_975 * se;
    Some(MethodRecord { estimate, se, covered })
}

/// Aggregates one method's per-replicate records, consuming them in the
/// order given.
/// Aggregates one method's per-replicate records into a summary row,
/// consuming them in the order given. This is the exact aggregation
/// [`run_replicates`] applies, exposed so that an audit dump of records
/// can be re-summarized to the identical row.
pub fn summarize_records(
    method: Method,
    records: &[Option<MethodRecord>],
    true_beta1: f64,
) -> SummaryRow {
    let used: Vec<MethodRecord> = records.iter().filter_map(|r| *r).collect();
    let n_used = used.len();
    let n_fail = records.len() - n_used;
    if n_used == 0 {
        return SummaryRow {
            method,
            n_used,
            n_fail,
            bias: None,
            relative_bias: None,
            mean_se: None,
            emp_sd: None,
            mse_x100: None,
            coverage: None,
        };
    }
    let n = n_used as f64;
    let mut est_sum = KahanSum::new();
    let mut se_sum = KahanSum::new();
    let mut sq_err_sum = KahanSum::new();
    let mut covered = 0usize;
    for r in &used {
        est_sum.add(r.estimate);
        se_sum.add(r.se);
        sq_err_sum.add((r.estimate - true_beta1) * (r.estimate - true_beta1));
        covered += usize::from(r.covered);
    }
    let mean = est_sum.value() / n;
    let mut dev_sum = KahanSum::new();
    for r in &used {
        dev_sum.add((r.estimate - mean) * (r.estimate - mean));
    }
    let bias = mean - true_beta1;
    SummaryRow {
        method,
        n_used,
        n_fail,
        bias: Some(bias),
        relative_bias: (true_beta1 != 0.0).then(|| bias / true_beta1),
        mean_se: Some(se_sum.value() / n),
        emp_sd: (n_used >= 2).then(|| (dev_sum.value() / (n - 1.0)).sqrt()),
        mse_x100: Some(100.0 * sq_err_sum.value() / n),
        coverage: Some(covered as f64 / n),
    }
}
