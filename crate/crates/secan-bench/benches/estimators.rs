//! Criterion benchmarks for the numeric kernels: one profile-objective
//! evaluation per variant (the unit of work inside the optimizer loop),
//! and the end-to-end fits.

use criterion::{criterion_group, criterion_main, Criterion};
use secan_bench::benchmark_draw;
use secan_core::naive::{self, Adjustment, CondLogitOptions};
use secan_core::{fit, profile_eval, FitOptions, Variant};

fn profile_objective(c: &mut Criterion) {
    let (data, rates) = benchmark_draw();
    let options = FitOptions::default();
    let mut group = c.benchmark_group("profile_eval");
    for variant in [Variant::Pm1, Variant::Pm2, Variant::Pm3] {
        let rates_arg = (variant == Variant::Pm2).then_some(&rates);
        let fitted =
            fit(variant, &data, rates_arg, &options).expect("the benchmark draw fits");
        assert!(fitted.converged, "{variant:?} should converge on the draw");
        group.bench_function(variant.name(), |b| {
            b.iter(|| {
                profile_eval(variant, &fitted.params, &data, rates_arg)
                    .expect("evaluation at the optimum succeeds")
                    .value
            })
        });
    }
    group.finish();
}

fn full_fits(c: &mut Criterion) {
    let (data, rates) = benchmark_draw();
    let options = FitOptions::default();
    let mut group = c.benchmark_group("fit");
    group.sample_size(20);
    group.bench_function("pm1", |b| {
        b.iter(|| fit(Variant::Pm1, &data, None, &options).expect("fits"))
    });
    group.bench_function("pm2", |b| {
        b.iter(|| fit(Variant::Pm2, &data, Some(&rates), &options).expect("fits"))
    });
    group.finish();
}

fn comparator_fits(c: &mut Criterion) {
    let (data, _) = benchmark_draw();
    let mut group = c.benchmark_group("naive");
    group.bench_function("conditional_logistic", |b| {
        b.iter(|| fit_conditional_once(&data))
    });
    group.bench_function("logistic_adjusted", |b| {
        b.iter(|| naive::fit_unconditional(&data, Adjustment::StratumDisease).expect("fits"))
    });
    group.finish();
}

fn fit_conditional_once(data: &secan_core::StratifiedDataset) -> f64 {
    let fit = naive::fit_conditional(data, &CondLogitOptions::default()).expect("fits");
    fit.fit.coefficients[0]
}

criterion_group!(benches, profile_objective, full_fits, comparator_fits);
criterion_main!(benches);
