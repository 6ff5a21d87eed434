//! Independent oracles for the integration suites: a direct
//! simplex-constrained maximizer (entropic mirror ascent with an augmented
//! Lagrangian for the rate constraint), exhaustive subset enumeration for
//! conditional-logistic denominators, Richardson-extrapolated derivatives,
//! and randomized instance generators. Everything here deliberately avoids
//! the library's own inner solvers so agreement is evidence, not tautology.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use secan_core::data::{Observation, StratifiedDataset};
use secan_core::params::{ParamVector, Variant};
use secan_core::terms::{log1pexp, log_rare_disease_weight, log_secondary_prob, mixed_disease_probs};

/// The result of a direct simplex maximization: the best value found
/// (excluding any per-subject constants) and the masses that attain it.
#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub value: f64,
    pub p: Vec<f64>,
}

/// Maximizes `sum_i log p_i + extra(p)` over the probability simplex,
/// optionally subject to `sum_i p_i b_i = target`, by multiplicative
/// (entropic mirror-ascent) updates inside an augmented-Lagrangian loop
/// with random restarts.
///
/// `extra` and `extra_grad` describe a smooth additional term; pass
/// `|_| 0.0` and a zero gradient when there is none.
pub fn simplex_maximize<F, G>(
    n: usize,
    extra: F,
    extra_grad: G,
    constraint: Option<(&[f64], f64)>,
    seed: u64,
) -> SimplexSolution
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = SimplexSolution { value: f64::NEG_INFINITY, p: Vec::new() };
    for _restart in 0..3 {
        let mut p: Vec<f64> = (0..n).map(|_| (rng.gen_range(-0.5..0.5f64)).exp()).collect();
        normalize(&mut p);
        let mut mu = 0.0f64;
        let mut rho = 10.0 * n as f64;
        let mut prev_violation = f64::INFINITY;
        for _outer in 0..40 {
            ascend(&mut p, &extra, &extra_grad, constraint, mu, rho);
            let e = violation(&p, constraint);
            if constraint.is_none() || e.abs() <= 1e-12 {
                break;
            }
            mu += rho * e;
            if e.abs() > 0.25 * prev_violation {
                rho = (rho * 4.0).min(1e12);
            }
            prev_violation = e.abs();
        }
        let value = p.iter().map(|&x| x.ln()).sum::<f64>() + extra(&p);
        let feasible = violation(&p, constraint).abs() <= 1e-9;
        if feasible && value > best.value {
            best = SimplexSolution { value, p };
        }
    }
    assert!(best.p.len() == n, "no feasible restart found");
    best
}

fn normalize(p: &mut [f64]) {
    let total: f64 = p.iter().sum();
    for x in p.iter_mut() {
        *x /= total;
    }
}

fn violation(p: &[f64], constraint: Option<(&[f64], f64)>) -> f64 {
    match constraint {
        None => 0.0,
        Some((b, target)) => p.iter().zip(b).map(|(pi, bi)| pi * bi).sum::<f64>() - target,
    }
}

/// One augmented-Lagrangian inner solve: monotone mirror ascent with
/// backtracking on the step size.
fn ascend<F, G>(
    p: &mut Vec<f64>,
    extra: &F,
    extra_grad: &G,
    constraint: Option<(&[f64], f64)>,
    mu: f64,
    rho: f64,
) where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    let n = p.len();
    let objective = |p: &[f64]| {
        let e = violation(p, constraint);
        p.iter().map(|&x| x.ln()).sum::<f64>() + extra(p) - mu * e - 0.5 * rho * e * e
    };
    let mut grad = vec![0.0; n];
    let mut eta = 0.05;
    let mut value = objective(p);
    for _ in 0..40_000 {
        extra_grad(p, &mut grad);
        let e = violation(p, constraint);
        for i in 0..n {
            grad[i] += 1.0 / p[i];
            if let Some((b, _)) = constraint {
                grad[i] -= (mu + rho * e) * b[i];
            }
        }
        // Multiplicative update, re-centered so the largest exponent is 0.
        let m = grad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut improved = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> =
                p.iter().zip(&grad).map(|(&pi, &gi)| pi * ((eta * (gi - m)).exp())).collect();
            normalize(&mut cand);
            let cand_value = objective(&cand);
            if cand_value > value - 1e-15 {
                let moved: f64 =
                    p.iter().zip(&cand).map(|(a, b)| (a - b).abs()).sum();
                *p = cand;
                if cand_value - value <= 1e-14 * value.abs().max(1.0) && moved <= 1e-12 {
                    value = cand_value;
                    improved = false;
                } else {
                    value = cand_value;
                    improved = true;
                }
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
        eta = (eta * 1.5).min(0.5);
    }
}

/// Log of the conditional-logistic denominator by exhaustive enumeration:
/// logsumexp over all size-`m` subsets of the rows of `x` (row-major n x q)
/// of `beta . subset_sum`.
pub fn enumerated_log_denominator(x: &[f64], q: usize, m: usize, beta: &[f64]) -> f64 {
    let n = x.len() / q;
    assert!(n <= 22, "enumeration limited to small cells");
    let row_scores: Vec<f64> = (0..n)
        .map(|i| (0..q).map(|a| beta[a] * x[i * q + a]).sum())
        .collect();
    let mut terms = Vec::new();
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let mut s = 0.0;
        for (i, score) in row_scores.iter().enumerate() {
            if mask & (1 << i) != 0 {
                s += score;
            }
        }
        terms.push(s);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Richardson-extrapolated central-difference gradient: combines step h
/// and h/2 central differences to cancel the leading truncation error.
/// Uses a different base step (1e-4) than the library's differentiator so
/// the two are independent checks of each other; the step is kept small
/// because near-infeasible profile points have very large higher
/// derivatives.
pub fn richardson_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut point = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-4 * x[j].abs().max(1.0);
        let mut central = |step: f64| {
            point[j] = x[j] + step;
            let up = f(&point);
            point[j] = x[j] - step;
            let down = f(&point);
            point[j] = x[j];
            (up - down) / (2.0 * step)
        };
        let d1 = central(h);
        let d2 = central(0.5 * h);
        grad[j] = (4.0 * d2 - d1) / 3.0;
    }
    grad
}

/// A randomized small stratified dataset: K strata of `max_n` subjects or
/// fewer, each with at least one case and one control, scalar covariate.
pub fn random_small_dataset(rng: &mut ChaCha8Rng, k: usize, max_n: usize) -> StratifiedDataset {
    loop {
        let mut obs = Vec::new();
        for stratum in 1..=k {
            let n = rng.gen_range(4..=max_n);
            for i in 0..n {
                // Force the first two subjects to be one case + one control.
                let disease = match i {
                    0 => 1,
                    1 => 0,
                    _ => u8::from(rng.gen::<f64>() < 0.4),
                };
                obs.push(Observation {
                    disease,
                    stratum,
                    outcome: u8::from(rng.gen::<f64>() < 0.5),
                    covariates: vec![rng.gen_range(-2.0..2.0)],
                });
            }
        }
        if let Ok(data) = StratifiedDataset::from_observations(&obs) {
            return data;
        }
    }
}

/// Mild random parameters for a variant on a dataset (scalar covariate),
/// with rates for the constrained variants picked strictly inside each
/// stratum's attainable interval.
pub fn random_mild_params(
    rng: &mut ChaCha8Rng,
    variant: Variant,
    data: &StratifiedDataset,
) -> (ParamVector, Option<Vec<f64>>) {
    let k = data.k();
    let mut draw = |scale: f64| rng.gen_range(-scale..scale);
    let beta0: Vec<f64> = (0..k).map(|_| draw(0.8)).collect();
    let beta1 = vec![draw(0.8)];
    let gamma1 = vec![draw(0.8)];
    let gamma2 = draw(0.8);
    let needs_gamma0 = variant != Variant::Pm1;
    let gamma0: Option<Vec<f64>> =
        needs_gamma0.then(|| (0..k).map(|_| rng.gen_range(-1.5..0.5)).collect());

    let mut rates = None;
    if needs_gamma0 {
        let g0 = gamma0.as_ref().expect("present for the constrained variants");
        let mut r = Vec::with_capacity(k);
        for (idx, stratum) in data.strata().iter().enumerate() {
            let b1: Vec<f64> = (0..stratum.n())
                .map(|i| {
                    mixed_disease_probs(
                        beta0[idx],
                        &beta1,
                        g0[idx],
                        &gamma1,
                        gamma2,
                        stratum.covariates(i),
                    )
                    .0
                })
                .collect();
            let lo = b1.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = b1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let u = rng.gen_range(0.25..0.75);
            r.push(lo + u * (hi - lo));
        }
        rates = Some(r);
    }

    let params = ParamVector {
        beta0,
        beta1,
        gamma0,
        gamma1,
        gamma2,
        xi: (variant == Variant::Pm3).then(|| rates.clone().expect("rates set above")),
    };
    (params, rates)
}

/// The per-subject terms of a stratum's log-likelihood that do not involve
/// the covariate masses, for a given variant.
pub fn stratum_constant_terms(
    variant: Variant,
    params: &ParamVector,
    data: &StratifiedDataset,
    k: usize,
) -> f64 {
    let stratum = data.stratum(k);
    let mut total = 0.0;
    for i in 0..stratum.n() {
        let x = stratum.covariates(i);
        let y = stratum.outcome(i);
        total += log_secondary_prob(params.beta0[k], &params.beta1, x, y);
        match variant {
            Variant::Pm1 => {
                if stratum.disease(i) == 1 {
                    let g: f64 = params.gamma1.iter().zip(x).map(|(a, b)| a * b).sum();
                    total += g + params.gamma2 * f64::from(y);
                }
            }
            Variant::Pm2 | Variant::Pm3 => {
                let g0 = params.gamma0.as_ref().expect("constrained variants carry gamma0")[k];
                let g: f64 = params.gamma1.iter().zip(x).map(|(a, b)| a * b).sum();
                let eta = g0 + g + params.gamma2 * f64::from(y);
                if stratum.disease(i) == 1 {
                    total += eta;
                }
                total -= log1pexp(eta);
            }
        }
    }
    total
}

/// The rare-disease mixing weights a_i of one stratum.
pub fn stratum_rare_weights(params: &ParamVector, data: &StratifiedDataset, k: usize) -> Vec<f64> {
    let stratum = data.stratum(k);
    (0..stratum.n())
        .map(|i| {
            log_rare_disease_weight(
                params.beta0[k],
                &params.beta1,
                &params.gamma1,
                params.gamma2,
                stratum.covariates(i),
            )
            .exp()
        })
        .collect()
}

/// The outcome-mixed disease probabilities b1_i of one stratum.
pub fn stratum_mixed_probs(params: &ParamVector, data: &StratifiedDataset, k: usize) -> Vec<f64> {
    let stratum = data.stratum(k);
    let g0 = params.gamma0.as_ref().expect("constrained variants carry gamma0")[k];
    (0..stratum.n())
        .map(|i| {
            mixed_disease_probs(
                params.beta0[k],
                &params.beta1,
                g0,
                &params.gamma1,
                params.gamma2,
                stratum.covariates(i),
            )
            .0
        })
        .collect()
}

/// Direct (oracle) value of one stratum's profile contribution for a
/// variant, on the same value convention as the library, together with the
/// maximizing masses. The rare-disease variant is reported n-normalized
/// (offset `n_k log n_k`) and the estimated-rates variant adds the
/// retrospective sampling terms.
pub fn oracle_stratum_value(
    variant: Variant,
    params: &ParamVector,
    data: &StratifiedDataset,
    k: usize,
    rate: Option<f64>,
    seed: u64,
) -> (f64, Vec<f64>) {
    let stratum = data.stratum(k);
    let n = stratum.n();
    let n1 = stratum.n_cases() as f64;
    let n0 = stratum.n_controls() as f64;
    let constants = stratum_constant_terms(variant, params, data, k);
    match variant {
        Variant::Pm1 => {
            let a = stratum_rare_weights(params, data, k);
            let extra = |p: &[f64]| {
                let s: f64 = p.iter().zip(&a).map(|(pi, ai)| pi * ai).sum();
                -n1 * s.ln()
            };
            let extra_grad = |p: &[f64], g: &mut [f64]| {
                let s: f64 = p.iter().zip(&a).map(|(pi, ai)| pi * ai).sum();
                for (gi, ai) in g.iter_mut().zip(&a) {
                    *gi = -n1 * ai / s;
                }
            };
            let inner = simplex_maximize(n, extra, extra_grad, None, seed);
            (constants + inner.value + (n as f64) * (n as f64).ln(), inner.p)
        }
        Variant::Pm2 | Variant::Pm3 => {
            let b1 = stratum_mixed_probs(params, data, k);
            let target = rate.expect("constrained variants need a rate");
            let inner = simplex_maximize(
                n,
                |_| 0.0,
                |_, g| g.iter_mut().for_each(|x| *x = 0.0),
                Some((&b1, target)),
                seed,
            );
            let sampling = if variant == Variant::Pm3 {
                -n1 * target.ln() - n0 * (-target).ln_1p()
            } else {
                0.0
            };
            (constants + inner.value + sampling, inner.p)
        }
    }
}
