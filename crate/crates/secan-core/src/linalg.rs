//! Minimal dense linear algebra for small symmetric systems.
//!
//! Every matrix this crate touches is tiny (parameter dimension, at most a
//! few dozen), so the routines here favor clarity and determinism over
//! performance: an unblocked Cholesky, a cyclic Jacobi eigenvalue sweep, and
//! a column-pivoted Householder QR used only for design-matrix rank checks.
//! Matrices are flat row-major `Vec<f64>` with explicit dimension.

/// Cholesky factor `L` (lower triangular, row-major) of a symmetric
/// positive-definite matrix, or `None` if a pivot is not strictly positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` given the Cholesky factor `L` of `A`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    assert_eq!(b.len(), n);
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

/// Inverse of a symmetric positive-definite matrix from its Cholesky factor.
pub fn cholesky_inverse(l: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        let col = cholesky_solve(l, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    // Exact symmetry by averaging the numerically near-symmetric result.
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = m;
            inv[j * n + i] = m;
        }
    }
    inv
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    for sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m, n)) || sweep == 99 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn frobenius(m: &[f64], n: usize) -> f64 {
    m.iter().take(n * n).map(|v| v * v).sum::<f64>().sqrt()
}

/// Condition number estimate `max |eig| / min |eig|` of a symmetric matrix;
/// `f64::INFINITY` when the smallest eigenvalue magnitude underflows.
pub fn symmetric_condition(a: &[f64], n: usize) -> f64 {
    let eig = symmetric_eigenvalues(a, n);
    let max = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    if min <= f64::MIN_POSITIVE * max.max(1.0) {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Column-pivoted Householder QR rank check of an `n x p` design (row-major).
/// Returns `(rank, dependent_columns)`: the original indices of columns whose
/// pivot collapses below `tol * |largest pivot|`.
pub fn design_rank(x: &[f64], n: usize, p: usize, tol: f64) -> (usize, Vec<usize>) {
    assert_eq!(x.len(), n * p);
    // Column-major working copy.
    let mut a = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            a[j * n + i] = x[i * p + j];
        }
    }
    let mut perm: Vec<usize> = (0..p).collect();
    let mut norms: Vec<f64> = (0..p)
        .map(|j| a[j * n..(j + 1) * n].iter().map(|v| v * v).sum::<f64>())
        .collect();
    let kmax = n.min(p);
    let mut rank = kmax;
    let mut first_pivot = 0.0f64;
    for k in 0..kmax {
        // Recompute trailing norms for stability (p is tiny).
        for j in k..p {
            norms[j] = a[j * n + k..(j + 1) * n].iter().map(|v| v * v).sum();
        }
        let (jmax, _) = norms
            .iter()
            .enumerate()
            .skip(k)
            .fold((k, -1.0), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
        if jmax != k {
            for i in 0..n {
                a.swap(jmax * n + i, k * n + i);
            }
            perm.swap(jmax, k);
            norms.swap(jmax, k);
        }
        let col = &a[k * n + k..(k + 1) * n];
        let mut alpha = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if k == 0 {
            first_pivot = alpha;
        }
        if alpha <= tol * first_pivot.max(f64::MIN_POSITIVE) {
            rank = k;
            break;
        }
        if a[k * n + k] > 0.0 {
            alpha = -alpha;
        }
        // Householder vector v = x - alpha e1, applied to trailing columns.
        let mut v: Vec<f64> = col.to_vec();
        v[0] -= alpha;
        let vtv = v.iter().map(|u| u * u).sum::<f64>();
        if vtv <= f64::MIN_POSITIVE {
            rank = k;
            break;
        }
        for j in k..p {
            let colj = &mut a[j * n + k..(j + 1) * n];
            let proj: f64 = colj.iter().zip(&v).map(|(c, u)| c * u).sum();
            let scale = 2.0 * proj / vtv;
            for (c, u) in colj.iter_mut().zip(&v) {
                *c -= scale * u;
            }
        }
    }
    let dependent = perm[rank..].to_vec();
    (rank, dependent)
}
