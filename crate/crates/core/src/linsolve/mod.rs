//! Linear solvers for the innermost shifted systems.
//!
//! Operators are matrix-free: anything implementing [`LinearOperator`] over a
//! real or complex entry type can be handed to [`gmres`].

mod dense;
mod gmres;

pub use dense::{dense_solve, DenseMatrix, PivotedLu};
pub use gmres::{gmres, GmresSettings, SolveReport};

use thiserror::Error;

use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinsolveError {
    #[error("matrix is singular to working precision (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid solver setting: {0}")]
    InvalidSetting(&'static str),
}

/// A linear map acting on vectors with entries of type `S`.
pub trait LinearOperator<T: Real, S: Scalar<T>>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[S], y: &mut [S]);
}

impl<T: Real, S: Scalar<T>, A: LinearOperator<T, S> + ?Sized> LinearOperator<T, S> for &A {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[S], y: &mut [S]) {
        (**self).apply(x, y)
    }
}

/// Identity operator of a given size.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl<T: Real, S: Scalar<T>> LinearOperator<T, S> for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[S], y: &mut [S]) {
        y.copy_from_slice(x);
    }
}

/// `x ↦ x − shift · A x`, the node systems of implicit sweeps.
pub struct ShiftedOperator<'a, T: Real, S: Scalar<T>, A: ?Sized> {
    pub inner: &'a A,
    pub shift: S,
    _real: std::marker::PhantomData<T>,
}

impl<'a, T: Real, S: Scalar<T>, A: LinearOperator<T, S> + ?Sized> ShiftedOperator<'a, T, S, A> {
    pub fn new(inner: &'a A, shift: S) -> Self {
        Self {
            inner,
            shift,
            _real: std::marker::PhantomData,
        }
    }
}

impl<T: Real, S: Scalar<T>, A: LinearOperator<T, S> + ?Sized> LinearOperator<T, S>
    for ShiftedOperator<'_, T, S, A>
{
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[S], y: &mut [S]) {
        self.inner.apply(x, y);
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = xi - self.shift * *yi;
        }
    }
}
