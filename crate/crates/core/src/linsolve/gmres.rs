//! Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.
//!
//! The procedure is fully deterministic: reductions run in index order and
//! there is no randomized restart, so identical inputs give bitwise identical
//! iterates regardless of which thread performs the solve.

use crate::linsolve::{LinearOperator, LinsolveError};
use crate::scalar::{axpy, dot, norm2, Real, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresSettings<T> {
    /// Relative residual target `‖b − A x‖ ≤ rel_tol ‖b‖`.
    pub rel_tol: T,
    /// Total Arnoldi steps allowed over all restart cycles.
    pub max_iter: usize,
    /// Krylov dimension before a restart.
    pub restart: usize,
}

impl<T: Real> Default for GmresSettings<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-12),
            max_iter: 200,
            restart: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub iterations: usize,
    /// True residual `‖b − A x‖₂` of the returned iterate.
    pub final_residual_norm: T,
    pub converged: bool,
    /// Residual estimates after every Arnoldi step (from the Givens machinery).
    pub residual_history: Vec<T>,
}

/// Builds a complex Givens rotation `(c, s)` with real `c` that zeroes `b`
/// against `a`; returns the rotated leading entry too.
fn givens<T: Real, S: Scalar<T>>(a: S, b: S) -> (T, S, S) {
    let b_abs = b.abs();
    if b_abs == T::zero() {
        return (T::one(), S::zero(), a);
    }
    let a_abs = a.abs();
    if a_abs == T::zero() {
        return (
            T::zero(),
            b.conj() * (T::one() / b_abs),
            S::from_real(b_abs),
        );
    }
    let r = a_abs.hypot(b_abs);
    let phase = a * (T::one() / a_abs);
    let c = a_abs / r;
    let s = phase * b.conj() * (T::one() / r);
    (c, s, phase * r)
}

#[inline]
fn rotate<T: Real, S: Scalar<T>>(c: T, s: S, x: S, y: S) -> (S, S) {
    (x * c + s * y, y * c - s.conj() * x)
}

/// Solves `A x = b` starting from `x0`.
///
/// On `max_iter` exhaustion the best iterate is returned with
/// `converged = false`; the caller decides whether that is fatal.
pub fn gmres<T, S, A>(
    op: &A,
    b: &[S],
    x0: &[S],
    settings: &GmresSettings<T>,
) -> Result<(Vec<S>, SolveReport<T>), LinsolveError>
where
    T: Real,
    S: Scalar<T>,
    A: LinearOperator<T, S> + ?Sized,
{
    let n = op.dim();
    if b.len() != n {
        return Err(LinsolveError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if x0.len() != n {
        return Err(LinsolveError::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    if !(settings.rel_tol > T::zero()) {
        return Err(LinsolveError::InvalidSetting("rel_tol must be positive"));
    }
    if settings.restart == 0 {
        return Err(LinsolveError::InvalidSetting("restart must be at least 1"));
    }

    let b_norm = norm2(b);
    if b_norm == T::zero() {
        return Ok((
            vec![S::zero(); n],
            SolveReport {
                iterations: 0,
                final_residual_norm: T::zero(),
                converged: true,
                residual_history: Vec::new(),
            },
        ));
    }
    let target = settings.rel_tol * b_norm;

    let mut x = x0.to_vec();
    let mut r = vec![S::zero(); n];
    let mut w = vec![S::zero(); n];
    let mut history = Vec::new();
    let mut total = 0usize;
    let m = settings.restart.min(n.max(1));

    loop {
        op.apply(&x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm2(&r);
        if beta <= target {
            return Ok((
                x,
                SolveReport {
                    iterations: total,
                    final_residual_norm: beta,
                    converged: true,
                    residual_history: history,
                },
            ));
        }
        if total >= settings.max_iter {
            return Ok((
                x,
                SolveReport {
                    iterations: total,
                    final_residual_norm: beta,
                    converged: false,
                    residual_history: history,
                },
            ));
        }

        let inv_beta = T::one() / beta;
        let mut basis: Vec<Vec<S>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|&v| v * inv_beta).collect());
        // column-major upper Hessenberg, h[j] holds column j (length j + 2)
        let mut h: Vec<Vec<S>> = Vec::with_capacity(m);
        let mut cs: Vec<T> = Vec::with_capacity(m);
        let mut sn: Vec<S> = Vec::with_capacity(m);
        let mut g = vec![S::zero(); m + 1];
        g[0] = S::from_real(beta);

        let mut k = 0;
        while k < m && total < settings.max_iter {
            op.apply(&basis[k], &mut w);
            total += 1;
            let w_norm0 = norm2(&w);
            let mut col = vec![S::zero(); k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                col[i] = hij;
                axpy(-hij, v, &mut w);
            }
            let w_norm = norm2(&w);
            col[k + 1] = S::from_real(w_norm);

            for i in 0..k {
                let (a, bb) = rotate(cs[i], sn[i], col[i], col[i + 1]);
                col[i] = a;
                col[i + 1] = bb;
            }
            let (c, s, rkk) = givens(col[k], col[k + 1]);
            col[k] = rkk;
            col[k + 1] = S::zero();
            let (gk, gk1) = rotate(c, s, g[k], g[k + 1]);
            g[k] = gk;
            g[k + 1] = gk1;
            cs.push(c);
            sn.push(s);
            h.push(col);
            k += 1;

            let estimate = g[k].abs();
            history.push(estimate);
            let breakdown = w_norm <= T::epsilon() * w_norm0;
            if breakdown || estimate <= target {
                break;
            }
            let inv = T::one() / w_norm;
            basis.push(w.iter().map(|&v| v * inv).collect());
        }

        // back substitution on the k×k triangle
        let mut y = vec![S::zero(); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in (i + 1)..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut x);
        }
    }
}
