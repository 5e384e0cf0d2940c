//! Scalar abstractions shared by every numerical module.
//!
//! All of the math in this crate is written against [`Real`] (the floating
//! point type, `f32` or `f64`) and [`Scalar`] (the entry type of a vector a
//! linear operator acts on, either a `Real` or a `Complex<Real>`).

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, One, ToPrimitive, Zero};

/// Gathers the traits needed of a real floating point type.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal out of range")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer out of range")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Entry type of a vector: either a real number or a complex number over `T`.
pub trait Scalar<T: Real>:
    Copy
    + Debug
    + Send
    + Sync
    + PartialEq
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Mul<T, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn from_real(x: T) -> Self;
    fn conj(self) -> Self;
    fn abs_sq(self) -> T;
    fn re(self) -> T;
    fn im(self) -> T;

    #[inline]
    fn abs(self) -> T {
        self.abs_sq().sqrt()
    }
}

impl<T: Real> Scalar<T> for T {
    #[inline]
    fn from_real(x: T) -> Self {
        x
    }
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn abs_sq(self) -> T {
        self * self
    }
    #[inline]
    fn re(self) -> T {
        self
    }
    #[inline]
    fn im(self) -> T {
        T::zero()
    }
    #[inline]
    fn abs(self) -> T {
        Float::abs(self)
    }
}

impl<T: Real> Scalar<T> for Complex<T> {
    #[inline]
    fn from_real(x: T) -> Self {
        Complex::new(x, T::zero())
    }
    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    #[inline]
    fn abs_sq(self) -> T {
        self.norm_sqr()
    }
    #[inline]
    fn re(self) -> T {
        self.re
    }
    #[inline]
    fn im(self) -> T {
        self.im
    }
    #[inline]
    fn abs(self) -> T {
        self.norm()
    }
}

/// Hermitian inner product `Σ conj(x_i) y_i`, summed in index order.
pub fn dot<T: Real, S: Scalar<T>>(x: &[S], y: &[S]) -> S {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .fold(S::zero(), |acc, (&a, &b)| acc + a.conj() * b)
}

pub fn norm2<T: Real, S: Scalar<T>>(x: &[S]) -> T {
    x.iter().fold(T::zero(), |acc, &a| acc + a.abs_sq()).sqrt()
}

pub fn norm_inf<T: Real, S: Scalar<T>>(x: &[S]) -> T {
    x.iter().fold(T::zero(), |acc, &a| acc.max(a.abs()))
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Real, S: Scalar<T>>(a: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Maximum absolute entrywise difference.
pub fn max_abs_diff<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_dot_is_sesquilinear() {
        let x = [Complex::new(1.0, 2.0), Complex::new(0.0, -1.0)];
        let y = [Complex::new(3.0, 0.0), Complex::new(1.0, 1.0)];
        let d = dot::<f64, _>(&x, &y);
        // conj(1+2i)*3 + conj(-i)*(1+i) = 3-6i + i(1+i) = 3-6i+i-1 = 2-5i
        assert_eq!(d, Complex::new(2.0, -5.0));
        assert!((norm2::<f64, _>(&x) - 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn real_scalar_roundtrip() {
        assert_eq!(<f32 as Scalar<f32>>::from_real(2.5).re(), 2.5);
        assert_eq!(<f64 as Scalar<f64>>::im(4.0), 0.0);
        assert_eq!(norm_inf::<f64, f64>(&[1.0, -3.0, 2.0]), 3.0);
    }
}
