//! Eigen-decomposition `A = V Λ V⁻¹` of small real matrices.
//!
//! Eigenvalues come from a shifted complex QR iteration on the Hessenberg
//! form, eigenvectors from inverse iteration. Real eigenvalues get real
//! eigenvectors and conjugate pairs get exactly conjugate eigenvectors, so
//! `V Λ V⁻¹ x` of a real `x` recombines to a real vector up to rounding.

use num_complex::Complex;

use crate::linsolve::{DenseMatrix, PivotedLu};
use crate::quadrature::QuadratureError;
use crate::scalar::{norm2, Real, Scalar};

/// Condition number of `V` above which [`Diagonalization::ill_conditioned`] is set.
pub const CONDITION_WARNING: f64 = 1e8;

/// Relative eigenvalue separation below which a matrix is rejected.
pub const SEPARATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Diagonalization<T: Real> {
    pub v: DenseMatrix<Complex<T>>,
    pub lambda: Vec<Complex<T>>,
    pub v_inv: DenseMatrix<Complex<T>>,
    /// `‖V‖_∞ ‖V⁻¹‖_∞`
    pub condition: T,
    pub ill_conditioned: bool,
}

impl<T: Real> Diagonalization<T> {
    pub fn size(&self) -> usize {
        self.lambda.len()
    }

    /// `V Λ V⁻¹` assembled densely.
    pub fn reconstruct(&self) -> DenseMatrix<Complex<T>> {
        let n = self.size();
        let vl = DenseMatrix::from_fn(n, n, |i, j| self.v.get(i, j) * self.lambda[j]);
        vl.matmul(&self.v_inv)
    }

    /// `‖V Λ V⁻¹ − A‖_∞`
    pub fn reconstruction_error(&self, a: &DenseMatrix<T>) -> T {
        let ac = a.map(Complex::from_real);
        self.reconstruct().sub(&ac).norm_inf()
    }
}

/// Ordering convention: ascending real part, then ascending imaginary part.
fn order<T: Real>(a: &Complex<T>, b: &Complex<T>) -> std::cmp::Ordering {
    a.re.partial_cmp(&b.re)
        .expect("NaN eigenvalue")
        .then(a.im.partial_cmp(&b.im).expect("NaN eigenvalue"))
}

pub fn diagonalize<T: Real>(a: &DenseMatrix<T>) -> Result<Diagonalization<T>, QuadratureError> {
    let n = a.rows();
    if n == 0 || n != a.cols() {
        return Err(QuadratureError::InvalidArgument(
            "matrix must be square and non-empty",
        ));
    }
    if a.data_iter().any(|v| !v.is_finite()) {
        return Err(QuadratureError::InvalidArgument(
            "matrix has non-finite entries",
        ));
    }
    let scale = a.norm_inf::<T>();
    let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || a.get(i, j) == T::zero()));
    if is_diagonal {
        return Ok(diagonal_case(a));
    }

    let sep_tol = T::lit(SEPARATION_TOLERANCE).max(T::lit(100.0) * T::epsilon()) * scale;
    let lower = (0..n).all(|i| ((i + 1)..n).all(|j| a.get(i, j) == T::zero()));
    let upper = (0..n).all(|i| (0..i).all(|j| a.get(i, j) == T::zero()));
    let mut lambda = if lower || upper {
        (0..n).map(|i| Complex::from_real(a.get(i, i))).collect()
    } else {
        hessenberg_qr_eigenvalues(a)?
    };
    symmetrize_spectrum(&mut lambda, sep_tol);
    lambda.sort_by(order);

    for i in 0..n {
        for j in (i + 1)..n {
            if (lambda[i] - lambda[j]).norm() < sep_tol {
                return Err(QuadratureError::NotDiagonalizable {
                    separation: (lambda[i] - lambda[j]).norm().to_f64_lossy(),
                });
            }
        }
    }

    let mut v = DenseMatrix::<Complex<T>>::zeros(n, n);
    let mut done = vec![false; n];
    for j in 0..n {
        if done[j] {
            continue;
        }
        let lam = lambda[j];
        let vec = if lam.im == T::zero() {
            let real = inverse_iteration::<T, T>(&a.clone(), lam.re, scale)?;
            real.into_iter().map(Complex::from_real).collect::<Vec<_>>()
        } else {
            let ac = a.map(Complex::from_real);
            inverse_iteration::<T, Complex<T>>(&ac, lam, scale)?
        };
        let vec = normalize_phase(vec);
        for i in 0..n {
            v.set(i, j, vec[i]);
        }
        done[j] = true;
        if lam.im != T::zero() {
            // partner sits at the exact conjugate
            if let Some(k) = (0..n).find(|&k| !done[k] && lambda[k] == lam.conj()) {
                for i in 0..n {
                    v.set(i, k, vec[i].conj());
                }
                done[k] = true;
            }
        }
    }

    let lu = PivotedLu::<T, Complex<T>>::factor(&v)
        .map_err(|_| QuadratureError::NotDiagonalizable { separation: 0.0 })?;
    let v_inv = lu.inverse();
    let condition = v.norm_inf::<T>() * v_inv.norm_inf::<T>();
    Ok(Diagonalization {
        v,
        lambda,
        v_inv,
        condition,
        ill_conditioned: condition > T::lit(CONDITION_WARNING),
    })
}

fn diagonal_case<T: Real>(a: &DenseMatrix<T>) -> Diagonalization<T> {
    let n = a.rows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        a.get(i, i)
            .partial_cmp(&a.get(j, j))
            .expect("NaN entry")
            .then(i.cmp(&j))
    });
    let lambda: Vec<Complex<T>> = idx
        .iter()
        .map(|&i| Complex::from_real(a.get(i, i)))
        .collect();
    // column j of V is the unit vector e_{idx[j]}
    let v = DenseMatrix::from_fn(n, n, |r, c| {
        if r == idx[c] {
            Complex::from_real(T::one())
        } else {
            Complex::from_real(T::zero())
        }
    });
    let v_inv = v.transpose();
    Diagonalization {
        v,
        lambda,
        v_inv,
        condition: T::one(),
        ill_conditioned: false,
    }
}

/// Snaps near-real eigenvalues to the real axis and makes conjugate pairs exact.
fn symmetrize_spectrum<T: Real>(lambda: &mut [Complex<T>], sep_tol: T) {
    let half = sep_tol * T::lit(0.5);
    for l in lambda.iter_mut() {
        if l.im.abs() < half {
            l.im = T::zero();
        }
    }
    let n = lambda.len();
    let mut paired = vec![false; n];
    for i in 0..n {
        if paired[i] || lambda[i].im <= T::zero() {
            continue;
        }
        let target = lambda[i].conj();
        let partner = (0..n)
            .filter(|&k| !paired[k] && k != i && lambda[k].im < T::zero())
            .min_by(|&p, &q| {
                (lambda[p] - target)
                    .norm()
                    .partial_cmp(&(lambda[q] - target).norm())
                    .expect("NaN eigenvalue")
            });
        if let Some(k) = partner {
            let re = (lambda[i].re + lambda[k].re) * T::lit(0.5);
            let im = (lambda[i].im - lambda[k].im) * T::lit(0.5);
            lambda[i] = Complex::new(re, im);
            lambda[k] = Complex::new(re, -im);
            paired[i] = true;
            paired[k] = true;
        }
    }
}

/// Unit 2-norm, largest entry (first in index order) rotated to the positive real axis.
fn normalize_phase<T: Real>(mut v: Vec<Complex<T>>) -> Vec<Complex<T>> {
    let nrm = norm2(&v);
    let max = v.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (T::one() - T::lit(1e-8)))
        .unwrap_or(0);
    let p = v[pivot];
    let phase = p.conj() * (T::one() / p.norm());
    let s = phase * (T::one() / nrm);
    for z in v.iter_mut() {
        *z *= s;
    }
    v[pivot].im = T::zero();
    v
}

fn inverse_iteration<T: Real, S: Scalar<T>>(
    a: &DenseMatrix<S>,
    lambda: S,
    scale: T,
) -> Result<Vec<S>, QuadratureError> {
    let n = a.rows();
    let mut delta = T::epsilon() * scale.max(T::one()) * T::lit(16.0);
    for _attempt in 0..8 {
        let shift = lambda + S::from_real(delta);
        let b = DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                a.get(i, j) - shift
            } else {
                a.get(i, j)
            }
        });
        if let Some(lu) = PivotedLu::<T, S>::factor_unchecked(&b) {
            let mut x: Vec<S> = (0..n)
                .map(|i| S::from_real(T::one() + T::from_usize_lossy(i) * T::lit(0.1)))
                .collect();
            for _ in 0..4 {
                let y = lu.solve(&x);
                let nrm = norm2(&y);
                if !(nrm.is_finite() && nrm > T::zero()) {
                    break;
                }
                x = y.into_iter().map(|v| v * (T::one() / nrm)).collect();
            }
            if x.iter().all(|v| v.re().is_finite() && v.im().is_finite()) {
                return Ok(x);
            }
        }
        delta *= T::lit(100.0);
    }
    Err(QuadratureError::EigenSolverStalled)
}

/// Eigenvalues of a real matrix by complex single-shift QR on its Hessenberg form.
fn hessenberg_qr_eigenvalues<T: Real>(
    a: &DenseMatrix<T>,
) -> Result<Vec<Complex<T>>, QuadratureError> {
    let n = a.rows();
    let mut h: Vec<Vec<Complex<T>>> = (0..n)
        .map(|i| (0..n).map(|j| Complex::from_real(a.get(i, j))).collect())
        .collect();
    reduce_to_hessenberg(&mut h);

    let mut eig = vec![Complex::from_real(T::zero()); n];
    let mut hi = n;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        if hi == 1 {
            eig[0] = h[0][0];
            break;
        }
        let k = hi - 1;
        // look for a negligible subdiagonal in the active window
        let mut lo = k;
        while lo > 0 {
            let s = h[lo - 1][lo - 1].norm() + h[lo][lo].norm();
            if h[lo][lo - 1].norm() <= T::epsilon() * s {
                h[lo][lo - 1] = Complex::from_real(T::zero());
                break;
            }
            lo -= 1;
        }
        if lo == k {
            eig[k] = h[k][k];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > 100 * n {
            return Err(QuadratureError::EigenSolverStalled);
        }
        let mu = if iter % 11 == 10 {
            // exceptional shift
            h[k][k] + Complex::from_real(h[k][k - 1].norm() * T::lit(1.5))
        } else {
            wilkinson_shift(h[k - 1][k - 1], h[k - 1][k], h[k][k - 1], h[k][k])
        };
        qr_step(&mut h, lo, hi, mu);
    }
    Ok(eig)
}

fn wilkinson_shift<T: Real>(
    a: Complex<T>,
    b: Complex<T>,
    c: Complex<T>,
    d: Complex<T>,
) -> Complex<T> {
    let half = T::lit(0.5);
    let tr = (a + d) * half;
    let det = a * d - b * c;
    let disc = (tr * tr - det).sqrt();
    let l1 = tr + disc;
    let l2 = tr - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// One shifted QR step `H − μI = QR, H ← RQ + μI` on rows/cols lo..hi.
fn qr_step<T: Real>(h: &mut [Vec<Complex<T>>], lo: usize, hi: usize, mu: Complex<T>) {
    let n = h.len();
    for i in lo..hi {
        h[i][i] -= mu;
    }
    let mut rots: Vec<(T, Complex<T>)> = Vec::with_capacity(hi - lo);
    for i in lo..hi - 1 {
        let (c, s) = givens_pair(h[i][i], h[i + 1][i]);
        for j in i..n {
            let x = h[i][j];
            let y = h[i + 1][j];
            h[i][j] = x * c + s * y;
            h[i + 1][j] = y * c - s.conj() * x;
        }
        rots.push((c, s));
    }
    for (off, &(c, s)) in rots.iter().enumerate() {
        let i = lo + off;
        for row in h.iter_mut().take((i + 2).min(hi)) {
            let x = row[i];
            let y = row[i + 1];
            row[i] = x * c + y * s.conj();
            row[i + 1] = y * c - x * s;
        }
    }
    for i in lo..hi {
        h[i][i] += mu;
    }
}

fn givens_pair<T: Real>(a: Complex<T>, b: Complex<T>) -> (T, Complex<T>) {
    let bn = b.norm();
    if bn == T::zero() {
        return (T::one(), Complex::from_real(T::zero()));
    }
    let an = a.norm();
    if an == T::zero() {
        return (T::zero(), b.conj() * (T::one() / bn));
    }
    let r = an.hypot(bn);
    let phase = a * (T::one() / an);
    (an / r, phase * b.conj() * (T::one() / r))
}

/// Householder reduction to upper Hessenberg form (eigenvalues only, Q discarded).
fn reduce_to_hessenberg<T: Real>(h: &mut [Vec<Complex<T>>]) {
    let n = h.len();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex<T>> = ((k + 1)..n).map(|i| h[i][k]).collect();
        let alpha_abs = norm2(&x);
        if alpha_abs == T::zero() {
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() == T::zero() {
            Complex::from_real(T::one())
        } else {
            x0 * (T::one() / x0.norm())
        };
        let mut v = x;
        v[0] += phase * alpha_abs;
        let vn = norm2(&v);
        if vn == T::zero() {
            continue;
        }
        for z in v.iter_mut() {
            *z *= T::one() / vn;
        }
        // H ← (I − 2vvᴴ) H (I − 2vvᴴ)
        for j in 0..n {
            let mut s = Complex::from_real(T::zero());
            for (idx, vi) in v.iter().enumerate() {
                s += vi.conj() * h[k + 1 + idx][j];
            }
            for (idx, vi) in v.iter().enumerate() {
                h[k + 1 + idx][j] -= *vi * s * T::lit(2.0);
            }
        }
        for row in h.iter_mut() {
            let mut s = Complex::from_real(T::zero());
            for (idx, vi) in v.iter().enumerate() {
                s += row[k + 1 + idx] * *vi;
            }
            for (idx, vi) in v.iter().enumerate() {
                row[k + 1 + idx] -= s * vi.conj() * T::lit(2.0);
            }
        }
        for i in (k + 2)..n {
            h[i][k] = Complex::from_real(T::zero());
        }
    }
}
