//! Finite source population generation and matched case-control sampling.

use rand::Rng;

use crate::data::{Observation, StratifiedDataset};
use crate::kahan::KahanSum;
use crate::terms::{expit, mixed_disease_probs, secondary_prob};

use super::quadrature::{normal_expectation, DEFAULT_NODES};
use super::{SimConfig, SimError};

/// Calibration search interval for the shared disease-model intercept.
const GAMMA0_LO: f64 = -30.0;
const GAMMA0_HI: f64 = 30.0;
/// Bisection stops when the expected overall rate is within this of the
/// target.
const CALIBRATION_TOL: f64 = 1e-6;

/// A calibrated disease-model intercept along with the stratum-level
/// disease rates it implies in the infinite population.
#[derive(Debug, Clone)]
pub struct Calibration {
    /// Per-stratum intercepts (a single shared value replicated).
    pub gamma0: Vec<f64>,
    /// Model-expected disease rate per stratum at these intercepts.
    pub expected_stratum_rates: Vec<f64>,
    /// Share-weighted overall rate (within tolerance of the target).
    pub expected_overall_rate: f64,
}

/// Model-expected disease rate in stratum `k` (0-based) at a given
/// intercept: the expectation over X ~ N(0,1) of the outcome-mixed disease
/// probability.
pub fn expected_stratum_rate(config: &SimConfig, k: usize, gamma0: f64) -> f64 {
    normal_expectation(
        |x| {
            let xs = [x];
            let (b1, _) = mixed_disease_probs(
                config.beta0[k],
                &[config.beta1],
                gamma0,
                &[config.gamma1],
                config.gamma2,
                &xs,
            );
            b1
        },
        DEFAULT_NODES,
    )
}

fn expected_overall_rate(config: &SimConfig, gamma0: f64) -> f64 {
    config
        .stratum_shares
        .iter()
        .enumerate()
        .map(|(k, share)| share * expected_stratum_rate(config, k, gamma0))
        .sum()
}

/// Finds the shared disease-model intercept whose expected overall disease
/// rate equals `target`, by bisection. The same value is used in every
/// stratum; stratum rates then differ only through the outcome model.
pub fn calibrate_gamma0(config: &SimConfig, target: f64) -> Result<Calibration, SimError> {
    assert!(target > 0.0 && target < 1.0, "target rate must be in (0,1)");
    let (mut lo, mut hi) = (GAMMA0_LO, GAMMA0_HI);
    let rate_lo = expected_overall_rate(config, lo);
    let rate_hi = expected_overall_rate(config, hi);
    if !(rate_lo <= target && target <= rate_hi) {
        return Err(SimError::Calibration { rate_lo, rate_hi, target });
    }
    // The rate is strictly increasing in the shared intercept.
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let rate = expected_overall_rate(config, mid);
        if (rate - target).abs() <= CALIBRATION_TOL {
            break;
        }
        if rate < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let expected_stratum_rates: Vec<f64> = (0..config.k())
        .map(|k| expected_stratum_rate(config, k, mid))
        .collect();
    let expected_overall_rate = config
        .stratum_shares
        .iter()
        .zip(&expected_stratum_rates)
        .map(|(s, r)| s * r)
        .sum();
    Ok(Calibration {
        gamma0: vec![mid; config.k()],
        expected_stratum_rates,
        expected_overall_rate,
    })
}

/// One generated subject: secondary outcome and scalar covariate.
#[derive(Debug, Clone, Copy)]
pub struct Subject {
    pub outcome: u8,
    pub x: f64,
}

/// A generated finite source population, grouped by stratum with cases and
/// controls held separately for sampling.
#[derive(Debug, Clone)]
pub struct Population {
    strata: Vec<PopulationStratum>,
    gamma0: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PopulationStratum {
    pub cases: Vec<Subject>,
    pub controls: Vec<Subject>,
}

impl PopulationStratum {
    pub fn n(&self) -> usize {
        self.cases.len() + self.controls.len()
    }

    /// Realized disease rate in this stratum of the finite population.
    pub fn disease_rate(&self) -> f64 {
        self.cases.len() as f64 / self.n() as f64
    }
}

impl Population {
    pub fn strata(&self) -> &[PopulationStratum] {
        &self.strata
    }

    /// The disease-model intercepts the population was generated under.
    pub fn gamma0(&self) -> &[f64] {
        &self.gamma0
    }

    /// Realized per-stratum disease rates; these are what "known rates"
    /// means for the known-rates estimator in a simulation.
    pub fn stratum_rates(&self) -> Vec<f64> {
        self.strata.iter().map(PopulationStratum::disease_rate).collect()
    }

    /// Realized overall disease rate.
    pub fn overall_rate(&self) -> f64 {
        let cases: usize = self.strata.iter().map(|s| s.cases.len()).sum();
        let total: usize = self.strata.iter().map(PopulationStratum::n).sum();
        cases as f64 / total as f64
    }
}

/// One standard normal draw via the Box-Muller transform. Consumes exactly
/// two uniforms per call so the stream layout is easy to reason about.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generates the finite source population. Stratum sizes are allocated
/// deterministically from the shares (largest-remainder rounding, so the
/// sizes sum exactly to the population size); subjects are then drawn from
/// the outcome and disease models. The intercepts come from the explicit
/// configuration or from calibration to the target rate.
pub fn generate_population<R: Rng>(
    config: &SimConfig,
    rng: &mut R,
) -> Result<Population, SimError> {
    config.validate()?;
    let gamma0 = config.resolve_gamma0()?;
    let sizes = allocate_sizes(&config.stratum_shares, config.n_population);
    let mut strata = Vec::with_capacity(config.k());
    for (k, &size) in sizes.iter().enumerate() {
        let mut cases = Vec::new();
        let mut controls = Vec::new();
        for _ in 0..size {
            let x = standard_normal(rng);
            let py = secondary_prob(config.beta0[k], &[config.beta1], &[x], 1);
            let y = u8::from(rng.gen::<f64>() < py);
            let pd = expit(gamma0[k] + config.gamma1 * x + config.gamma2 * f64::from(y));
            if rng.gen::<f64>() < pd {
                cases.push(Subject { outcome: y, x });
            } else {
                controls.push(Subject { outcome: y, x });
            }
        }
        strata.push(PopulationStratum { cases, controls });
    }
    Ok(Population { strata, gamma0 })
}

/// Largest-remainder allocation of `total` into parts proportional to
/// `shares`; parts sum exactly to `total`.
fn allocate_sizes(shares: &[f64], total: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = shares.iter().map(|s| (s * total as f64).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut remainders: Vec<(usize, f64)> = shares
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s * total as f64 - sizes[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.into_iter().take(total - assigned) {
        sizes[i] += 1;
    }
    sizes
}

/// Draws a matched case-control sample: a simple random sample without
/// replacement of `n_cases` cases and `n_controls` controls from every
/// stratum, via partial Fisher-Yates index shuffles.
pub fn sample_matched_cc<R: Rng>(
    population: &Population,
    n_cases: usize,
    n_controls: usize,
    rng: &mut R,
) -> Result<StratifiedDataset, SimError> {
    let mut obs = Vec::with_capacity(population.strata.len() * (n_cases + n_controls));
    for (k, stratum) in population.strata.iter().enumerate() {
        if stratum.cases.len() < n_cases {
            return Err(SimError::InsufficientCases {
                stratum: k + 1,
                available: stratum.cases.len(),
                requested: n_cases,
            });
        }
        if stratum.controls.len() < n_controls {
            return Err(SimError::InsufficientControls {
                stratum: k + 1,
                available: stratum.controls.len(),
                requested: n_controls,
            });
        }
        for (pool, take, disease) in [
            (&stratum.cases, n_cases, 1u8),
            (&stratum.controls, n_controls, 0u8),
        ] {
            for idx in sample_indices(pool.len(), take, rng) {
                let subject = pool[idx];
                obs.push(Observation {
                    disease,
                    stratum: k + 1,
                    outcome: subject.outcome,
                    covariates: vec![subject.x],
                });
            }
        }
    }
    Ok(StratifiedDataset::from_observations(&obs)?)
}

/// `take` distinct indices from `0..len`, uniformly without replacement
/// (partial Fisher-Yates shuffle).
fn sample_indices<R: Rng>(len: usize, take: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(take <= len);
    let mut indices: Vec<usize> = (0..len).collect();
    for i in 0..take {
        let j = rng.gen_range(i..len);
        indices.swap(i, j);
    }
    indices.truncate(take);
    indices
}

/// Mean of the secondary outcome in one population stratum (cases and
/// controls pooled), for cross-checks against the outcome model.
pub fn stratum_outcome_mean(stratum: &PopulationStratum) -> f64 {
    let mut sum = KahanSum::new();
    for s in stratum.cases.iter().chain(&stratum.controls) {
        sum.add(f64::from(s.outcome));
    }
    sum.value() / stratum.n() as f64
}
