//! Small dense matrices and a partial-pivoting direct solver.
//!
//! Sized for quadrature matrices and verification systems of at most a few
//! hundred rows.

use std::fmt;
use std::marker::PhantomData;

use crate::linsolve::{LinearOperator, LinsolveError};
use crate::scalar::{Real, Scalar};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: fmt::Debug> fmt::Debug for DenseMatrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for r in 0..self.rows {
            list.entry(&&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        list.finish()
    }
}

impl<S: Copy> DenseMatrix<S> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data_iter(&self) -> impl Iterator<Item = &S> {
        self.data.iter()
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map<U: Copy>(&self, f: impl Fn(S) -> U) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

impl<S> DenseMatrix<S> {
    pub fn zeros<T: Real>(rows: usize, cols: usize) -> Self
    where
        S: Scalar<T>,
    {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity<T: Real>(n: usize) -> Self
    where
        S: Scalar<T>,
    {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn matmul<T: Real>(&self, other: &Self) -> Self
    where
        S: Scalar<T>,
    {
        assert_eq!(self.cols, other.rows, "shape mismatch in matmul");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn matvec<T: Real>(&self, x: &[S]) -> Vec<S>
    where
        S: Scalar<T>,
    {
        assert_eq!(self.cols, x.len(), "shape mismatch in matvec");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .fold(S::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf<T: Real>(&self) -> T
    where
        S: Scalar<T>,
    {
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .fold(T::zero(), |acc, &a| acc + a.abs())
            })
            .fold(T::zero(), T::max)
    }

    pub fn sub<T: Real>(&self, other: &Self) -> Self
    where
        S: Scalar<T>,
    {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn is_lower_triangular<T: Real>(&self) -> bool
    where
        S: Scalar<T>,
    {
        (0..self.rows)
            .all(|i| ((i + 1)..self.cols).all(|j| self.data[i * self.cols + j] == S::zero()))
    }
}

/// LU factors with row pivoting, `P A = L U`, stored in one matrix.
#[derive(Clone, Debug)]
pub struct PivotedLu<T, S> {
    lu: DenseMatrix<S>,
    perm: Vec<usize>,
    _real: PhantomData<T>,
}

impl<T: Real, S: Scalar<T>> PivotedLu<T, S> {
    pub fn factor(a: &DenseMatrix<S>) -> Result<Self, LinsolveError> {
        let n = a.rows();
        if n != a.cols() {
            return Err(LinsolveError::DimensionMismatch {
                expected: n,
                found: a.cols(),
            });
        }
        let scale = a.norm_inf::<T>();
        let tiny = T::epsilon() * scale * T::from_usize_lossy(n.max(1));
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu.get(k, k).abs();
            for i in (k + 1)..n {
                let v = lu.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny || best == T::zero() {
                return Err(LinsolveError::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, tmp);
                }
                perm.swap(k, p);
            }
            let pivot = lu.get(k, k);
            for i in (k + 1)..n {
                let factor = lu.get(i, k) / pivot;
                lu.set(i, k, factor);
                for j in (k + 1)..n {
                    let v = lu.get(i, j) - factor * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            _real: PhantomData,
        })
    }

    /// Factors without the singularity threshold; only exact zero pivots fail.
    /// Used by inverse iteration, where near-singular shifts are the point.
    pub fn factor_unchecked(a: &DenseMatrix<S>) -> Option<Self> {
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| {
                    lu.get(i, k)
                        .abs()
                        .partial_cmp(&lu.get(j, k).abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(j.cmp(&i))
                })
                .unwrap_or(k);
            if lu.get(p, k).abs() == T::zero() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, tmp);
                }
                perm.swap(k, p);
            }
            let pivot = lu.get(k, k);
            for i in (k + 1)..n {
                let factor = lu.get(i, k) / pivot;
                lu.set(i, k, factor);
                for j in (k + 1)..n {
                    let v = lu.get(i, j) - factor * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Some(Self {
            lu,
            perm,
            _real: PhantomData,
        })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix<S> {
        let n = self.lu.rows();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![S::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = S::zero());
            e[j] = S::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }
}

/// Direct solve of `A x = b` by LU with partial pivoting.
pub fn dense_solve<T: Real, S: Scalar<T>>(
    a: &DenseMatrix<S>,
    b: &[S],
) -> Result<Vec<S>, LinsolveError> {
    if b.len() != a.rows() {
        return Err(LinsolveError::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    Ok(PivotedLu::<T, S>::factor(a)?.solve(b))
}

/// Dense matrices act as linear operators, which lets tests feed them to GMRES.
impl<T: Real, S: Scalar<T>> LinearOperator<T, S> for DenseMatrix<S> {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[S], y: &mut [S]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self
                .row(i)
                .iter()
                .zip(x)
                .fold(S::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }
}
