//! Right Gauss-Radau abscissae from the Radau-modified Legendre Jacobi matrix.

use crate::quadrature::QuadratureError;
use crate::scalar::Real;

/// Eigenvalues of a symmetric tridiagonal matrix (implicit QL with Wilkinson
/// shifts), returned in ascending order.
///
/// `diag` has length n, `off` has length n − 1 (the sub/super diagonal).
pub(crate) fn symmetric_tridiagonal_eigenvalues<T: Real>(
    diag: &[T],
    off: &[T],
) -> Result<Vec<T>, QuadratureError> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(T::zero());
    let two = T::lit(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(QuadratureError::EigenSolverStalled);
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("NaN eigenvalue"));
    Ok(d)
}

/// `P_k(x)` and `P'_k(x)` via the three-term recurrence.
pub(crate) fn legendre_with_derivative<T: Real>(k: usize, x: T) -> (T, T) {
    let (mut p0, mut p1) = (T::one(), x);
    if k == 0 {
        return (T::one(), T::zero());
    }
    for j in 1..k {
        let jf = T::from_usize_lossy(j);
        let p2 = ((T::lit(2.0) * jf + T::one()) * x * p1 - jf * p0) / (jf + T::one());
        p0 = p1;
        p1 = p2;
    }
    // (x² − 1) P'_k = k (x P_k − P_{k−1})
    let kf = T::from_usize_lossy(k);
    (p1, kf * (x * p1 - p0) / (x * x - T::one()))
}

/// `P_M(x) − P_{M−1}(x)` and its derivative via the Legendre recurrence.
fn radau_polynomial<T: Real>(m: usize, x: T) -> (T, T) {
    // p0 = P_{k-1}, p1 = P_k, with derivatives dp0, dp1
    let (mut p0, mut p1) = (T::one(), x);
    let (mut dp0, mut dp1) = (T::zero(), T::one());
    if m == 1 {
        return (p1 - p0, dp1 - dp0);
    }
    for k in 1..m {
        let kf = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kf + T::one()) * x * p1 - kf * p0) / (kf + T::one());
        let dp2 = dp0 + (T::lit(2.0) * kf + T::one()) * p1;
        p0 = p1;
        p1 = p2;
        dp0 = dp1;
        dp1 = dp2;
    }
    (p1 - p0, dp1 - dp0)
}

/// Right Radau abscissae on the reference interval [−1, 1], ascending, with
/// the last entry exactly 1.
pub(crate) fn radau_right_reference<T: Real>(m: usize) -> Result<Vec<T>, QuadratureError> {
    if m == 0 {
        return Err(QuadratureError::InvalidArgument("node count must be ≥ 1"));
    }
    if m == 1 {
        return Ok(vec![T::one()]);
    }
    // Legendre recurrence coefficients: α_k = 0, β_k = k / sqrt(4k² − 1)
    let beta: Vec<T> = (1..m)
        .map(|k| {
            let k = T::from_usize_lossy(k);
            k / (T::lit(4.0) * k * k - T::one()).sqrt()
        })
        .collect();
    // Fix the node a = 1: solve (J_{m−1} − a I) δ = β_{m−1}² e_{m−1}, then α_m = a + δ_{m−1}.
    let a = T::one();
    let n = m - 1;
    let diag: Vec<T> = vec![-a; n];
    let mut rhs = vec![T::zero(); n];
    rhs[n - 1] = beta[n - 1] * beta[n - 1];
    let delta = solve_tridiagonal(&diag, &beta[..n - 1], &rhs);
    let mut jdiag = vec![T::zero(); m];
    jdiag[m - 1] = a + delta[n - 1];

    let mut x = symmetric_tridiagonal_eigenvalues(&jdiag, &beta)?;
    // polish the interior roots by Newton on P_M − P_{M−1}
    for xi in x.iter_mut().take(m - 1) {
        for _ in 0..3 {
            let (p, dp) = radau_polynomial(m, *xi);
            if dp == T::zero() {
                break;
            }
            *xi -= p / dp;
        }
    }
    x[m - 1] = T::one();
    for w in x.windows(2) {
        if !(w[0] < w[1]) {
            return Err(QuadratureError::EigenSolverStalled);
        }
    }
    Ok(x)
}

/// Thomas algorithm for symmetric tridiagonal systems.
fn solve_tridiagonal<T: Real>(diag: &[T], off: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut denom = diag[0];
    if n > 1 {
        c[0] = off[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}
