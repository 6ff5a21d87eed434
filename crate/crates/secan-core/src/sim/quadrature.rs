//! Gauss-Hermite quadrature for expectations against the standard normal.

/// Default number of quadrature nodes. Logistic-type integrands are smooth,
/// so this is far more than needed for 1e-10 accuracy.
pub const DEFAULT_NODES: usize = 60;

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// Nodes and weights of the n-point Gauss-Hermite rule for the weight
/// function exp(-t^2), so that `sum_i w_i f(t_i)` approximates
/// the integral of f(t) exp(-t^2) dt. Nodes are in increasing order.
///
/// Roots are found by Newton iteration on the orthonormal Hermite
/// recurrence, which stays bounded where the raw polynomials overflow.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one quadrature node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Largest root first, descending; standard asymptotic initial guesses.
    let mut t = 0.0f64;
    for i in 0..n.div_ceil(2) {
        t = match i {
            0 => {
                let f = (2 * n + 1) as f64;
                f.sqrt() - 1.85575 * f.powf(-1.0 / 6.0)
            }
            1 => t - 1.14 * (n as f64).powf(0.426) / t,
            2 => 1.86 * t - 0.86 * nodes[n - 1],
            3 => 1.91 * t - 0.91 * nodes[n - 2],
            _ => 2.0 * t - nodes[n - i + 1],
        };
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = orthonormal_hermite(n, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() <= NEWTON_TOL * t.abs().max(1.0) {
                let (_, d2) = orthonormal_hermite(n, t);
                dp = d2;
                break;
            }
        }
        nodes[n - 1 - i] = t;
        nodes[i] = -t;
        // w = 2 / h'_n(t)^2 for the orthonormal polynomials.
        let w = 2.0 / (dp * dp);
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = orthonormal_hermite(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// Value and derivative of the degree-n orthonormal Hermite polynomial
/// (physicists' weight) at t.
fn orthonormal_hermite(n: usize, t: f64) -> (f64, f64) {
    let mut prev = 0.0f64;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    for k in 0..n {
        let next = t * (2.0 / (k as f64 + 1.0)).sqrt() * cur
            - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    let deriv = (2.0 * n as f64).sqrt() * prev;
    (cur, deriv)
}

/// E[f(X)] for X standard normal, by the n-point Gauss-Hermite rule:
/// substituting x = sqrt(2) t gives E[f] = pi^{-1/2} sum_i w_i f(sqrt(2) t_i).
pub fn normal_expectation<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
    let (nodes, weights) = gauss_hermite(n);
    let scale = std::f64::consts::PI.sqrt().recip();
    let mut sum = crate::kahan::KahanSum::new();
    for (t, w) in nodes.iter().zip(&weights) {
        sum.add(w * f(std::f64::consts::SQRT_2 * t));
    }
    scale * sum.value()
}
