//! Right-hand sides `u_t = f(u)` with Jacobian actions frozen at a state.

mod allen_cahn;
mod dahlquist;
mod gray_scott;

pub use allen_cahn::{AcInitial, AcReaction, AllenCahn, AllenCahnParams};
pub use dahlquist::{Dahlquist, DahlquistJacobian};
pub use gray_scott::{GrayScott, GrayScottParams, GsCoupling};

use num_complex::Complex;

use crate::linsolve::LinearOperator;
use crate::scalar::{Real, Scalar};
use crate::spatial::{laplacian_into, Mesh2D};

/// An autonomous ODE system `u_t = f(u)` on flat state vectors.
pub trait Problem<T: Real>: Send + Sync {
    /// Jacobian snapshot; acts on real vectors and on complex ones for the
    /// shifted systems of diagonalized sweeps.
    type Jacobian: LinearOperator<T, T> + LinearOperator<T, Complex<T>> + Send + Sync;

    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn components(&self) -> usize;
    /// `None` for mesh-free problems.
    fn mesh(&self) -> Option<Mesh2D<T>>;
    fn eval_f(&self, u: &[T], out: &mut [T]);
    fn jacobian_at(&self, u0: &[T]) -> Self::Jacobian;
    fn initial_condition(&self) -> Vec<T>;
}

/// `w ↦ (D_c Δ w_c + Σ_d a_{cd} ⊙ w_d)_c`: per-component diffusion plus a
/// pointwise coupling matrix, the linearization of a reaction-diffusion system.
#[derive(Debug, Clone)]
pub struct ReactionDiffusionJacobian<T> {
    pub mesh: Mesh2D<T>,
    pub diffusion: Vec<T>,
    /// `coupling[c * k + d]` holds the pointwise coefficients `∂f_c/∂u_d`.
    pub coupling: Vec<Vec<T>>,
}

impl<T: Real> ReactionDiffusionJacobian<T> {
    fn components(&self) -> usize {
        self.diffusion.len()
    }

    fn apply_generic<S: Scalar<T>>(&self, x: &[S], y: &mut [S]) {
        laplacian_into(&self.mesh, x, y, &self.diffusion);
        let k = self.components();
        let p = self.mesh.points();
        for c in 0..k {
            let yc = &mut y[c * p..(c + 1) * p];
            for d in 0..k {
                let a = &self.coupling[c * k + d];
                let xd = &x[d * p..(d + 1) * p];
                for ((yi, &xi), &ai) in yc.iter_mut().zip(xd).zip(a) {
                    *yi += xi * ai;
                }
            }
        }
    }
}

impl<T: Real, S: Scalar<T>> LinearOperator<T, S> for ReactionDiffusionJacobian<T> {
    fn dim(&self) -> usize {
        self.components() * self.mesh.points()
    }
    fn apply(&self, x: &[S], y: &mut [S]) {
        self.apply_generic(x, y)
    }
}
