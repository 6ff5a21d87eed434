//! Shared fixtures for the estimator benchmarks.

use secan_core::sim::population::{generate_population, sample_matched_cc};
use secan_core::sim::{stream, StreamKind};
use secan_core::{KnownRates, RateSpec, SimConfig, StratifiedDataset};

/// A matched case-control draw at benchmark scale: two strata, 500 cases
/// and 500 controls, a 20% disease rate (so every estimator, including the
/// one that infers the rates, is well identified). Returns the dataset and
/// the population disease rates.
pub fn benchmark_draw() -> (StratifiedDataset, KnownRates) {
    let mut config = SimConfig::two_stratum_benchmark(0.2, 500);
    config.rate = RateSpec::Target(0.2);
    config.n_population = 100_000;
    config.seed = 58_273;
    let mut pop_rng = stream(config.seed, StreamKind::Population);
    let population = generate_population(&config, &mut pop_rng).expect("population generates");
    let mut rep_rng = stream(config.seed, StreamKind::Replicate(0));
    let data = sample_matched_cc(&population, config.n_cases, config.n_controls, &mut rep_rng)
        .expect("draw samples");
    let rates = KnownRates::new(population.stratum_rates()).expect("rates are in (0,1)");
    (data, rates)
}
