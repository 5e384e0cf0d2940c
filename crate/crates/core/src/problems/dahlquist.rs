//! Dahlquist test equation `u' = λu`, `u(0) = 1`.
//!
//! A real `λ` gives a scalar system. A complex `λ = a + ib` is carried as the
//! real pair `(Re u, Im u)` with the block `[[a, −b], [b, a]]`, so every
//! solver still sees a real state.

use num_complex::Complex;

use crate::linsolve::LinearOperator;
use crate::problems::Problem;
use crate::scalar::{Real, Scalar};
use crate::spatial::Mesh2D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dahlquist<T> {
    pub lambda: Complex<T>,
}

impl<T: Real> Dahlquist<T> {
    pub fn new(lambda: Complex<T>) -> Self {
        Self { lambda }
    }

    pub fn real(lambda: T) -> Self {
        Self::new(Complex::new(lambda, T::zero()))
    }

    fn is_real(&self) -> bool {
        self.lambda.im == T::zero()
    }

    /// The exact solution `exp(λt)` in the state layout of this problem.
    pub fn exact(&self, t: T) -> Vec<T> {
        let z = (self.lambda * t).exp();
        if self.is_real() {
            vec![z.re]
        } else {
            vec![z.re, z.im]
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DahlquistJacobian<T> {
    pub lambda: Complex<T>,
    pub dim: usize,
}

impl<T: Real, S: Scalar<T>> LinearOperator<T, S> for DahlquistJacobian<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[S], y: &mut [S]) {
        let (a, b) = (self.lambda.re, self.lambda.im);
        if self.dim == 1 {
            y[0] = x[0] * a;
        } else {
            y[0] = x[0] * a - x[1] * b;
            y[1] = x[0] * b + x[1] * a;
        }
    }
}

impl<T: Real> Problem<T> for Dahlquist<T> {
    type Jacobian = DahlquistJacobian<T>;

    fn name(&self) -> &'static str {
        "dahlquist"
    }

    fn dim(&self) -> usize {
        if self.is_real() {
            1
        } else {
            2
        }
    }

    fn components(&self) -> usize {
        self.dim()
    }

    fn mesh(&self) -> Option<Mesh2D<T>> {
        None
    }

    fn eval_f(&self, u: &[T], out: &mut [T]) {
        self.jacobian_at(u).apply(u, out);
    }

    fn jacobian_at(&self, _u0: &[T]) -> Self::Jacobian {
        DahlquistJacobian {
            lambda: self.lambda,
            dim: Problem::dim(self),
        }
    }

    fn initial_condition(&self) -> Vec<T> {
        let mut u = vec![T::zero(); Problem::dim(self)];
        u[0] = T::one();
        u
    }
}
