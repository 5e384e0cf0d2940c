//! Allen-Cahn: `u_t = Δu + (1/ε²) r(u)` on the periodic square [−0.5, 0.5]².

use serde::{Deserialize, Serialize};

use crate::problems::{Problem, ReactionDiffusionJacobian};
use crate::scalar::Real;
use crate::spatial::{laplacian_into, Mesh2D};

/// Reaction term `r(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AcReaction {
    /// `u (1 − u)`
    #[default]
    Logistic,
    /// `u (1 − u²)`, with stable states ±1
    Cubic,
}

/// Distance measure inside the initial profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AcInitial {
    /// `tanh((R₀ − (x² + y²)) / (√2 ε))`
    #[default]
    Literal,
    /// `tanh((R₀ − √(x² + y²)) / (√2 ε))`
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllenCahnParams<T> {
    pub eps: T,
    pub r0: T,
    pub reaction: AcReaction,
    pub initial: AcInitial,
}

impl<T: Real> Default for AllenCahnParams<T> {
    fn default() -> Self {
        Self {
            eps: T::lit(0.04),
            r0: T::lit(0.25),
            reaction: AcReaction::Logistic,
            initial: AcInitial::Literal,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AllenCahn<T> {
    pub mesh: Mesh2D<T>,
    pub params: AllenCahnParams<T>,
    inv_eps2: T,
}

impl<T: Real> AllenCahn<T> {
    /// Panics unless `eps > 0`.
    pub fn new(mesh: Mesh2D<T>, params: AllenCahnParams<T>) -> Self {
        assert!(params.eps > T::zero(), "interface width must be positive");
        Self {
            mesh,
            params,
            inv_eps2: T::one() / (params.eps * params.eps),
        }
    }

    /// The standard mesh of `n` points per dimension on [−0.5, 0.5]².
    pub fn default_mesh(n: usize) -> Result<Mesh2D<T>, crate::spatial::SpatialError> {
        let h = T::lit(0.5);
        Mesh2D::periodic(n, (-h, h, -h, h))
    }

    #[inline]
    fn reaction(&self, u: T) -> T {
        match self.params.reaction {
            AcReaction::Logistic => u * (T::one() - u),
            AcReaction::Cubic => u * (T::one() - u * u),
        }
    }

    #[inline]
    fn reaction_derivative(&self, u: T) -> T {
        match self.params.reaction {
            AcReaction::Logistic => T::one() - T::lit(2.0) * u,
            AcReaction::Cubic => T::one() - T::lit(3.0) * u * u,
        }
    }
}

impl<T: Real> Problem<T> for AllenCahn<T> {
    type Jacobian = ReactionDiffusionJacobian<T>;

    fn name(&self) -> &'static str {
        "allen-cahn"
    }

    fn dim(&self) -> usize {
        self.mesh.points()
    }

    fn components(&self) -> usize {
        1
    }

    fn mesh(&self) -> Option<Mesh2D<T>> {
        Some(self.mesh)
    }

    fn eval_f(&self, u: &[T], out: &mut [T]) {
        laplacian_into(&self.mesh, u, out, &[T::one()]);
        for (o, &ui) in out.iter_mut().zip(u) {
            *o += self.inv_eps2 * self.reaction(ui);
        }
    }

    fn jacobian_at(&self, u0: &[T]) -> Self::Jacobian {
        let a = u0
            .iter()
            .map(|&v| self.inv_eps2 * self.reaction_derivative(v))
            .collect();
        ReactionDiffusionJacobian {
            mesh: self.mesh,
            diffusion: vec![T::one()],
            coupling: vec![a],
        }
    }

    fn initial_condition(&self) -> Vec<T> {
        let n = self.mesh.n;
        let denom = T::SQRT_2() * self.params.eps;
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            let y = self.mesh.y(j);
            for i in 0..n {
                let x = self.mesh.x(i);
                let r2 = x * x + y * y;
                let d = match self.params.initial {
                    AcInitial::Literal => r2,
                    AcInitial::Radial => r2.sqrt(),
                };
                out.push(((self.params.r0 - d) / denom).tanh());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::LinearOperator;
    use crate::problems::testing::{check_fd, check_linearity_and_complex};

    fn problem(n: usize, reaction: AcReaction) -> AllenCahn<f64> {
        AllenCahn::new(
            AllenCahn::default_mesh(n).unwrap(),
            AllenCahnParams {
                reaction,
                ..Default::default()
            },
        )
    }

    #[test]
    fn reaction_roots_and_midpoint() {
        let p = problem(16, AcReaction::Logistic);
        let mut out = vec![0.0; 256];
        p.eval_f(&vec![0.0; 256], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        p.eval_f(&vec![1.0; 256], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-10));
        p.eval_f(&vec![0.5; 256], &mut out);
        let expect = 1.0 / (4.0 * 0.04 * 0.04);
        assert!(out.iter().all(|v| (v - expect).abs() < 1e-9));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        check_fd(&problem(16, AcReaction::Logistic), -1.0, 1.0);
        check_fd(&problem(16, AcReaction::Cubic), -1.0, 1.0);
        check_linearity_and_complex(&problem(8, AcReaction::Cubic));
    }

    #[test]
    fn half_state_leaves_pure_laplacian() {
        let p = problem(8, AcReaction::Logistic);
        let j = p.jacobian_at(&vec![0.5; 64]);
        assert!(j.coupling[0].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn constant_state_shifts_fourier_eigenvalue() {
        let n = 32;
        let p = problem(n, AcReaction::Logistic);
        let u0 = 0.2;
        let j = p.jacobian_at(&vec![u0; n * n]);
        let tp = 2.0 * std::f64::consts::PI;
        let mesh = p.mesh;
        let w: Vec<f64> = (0..n * n)
            .map(|k| (tp * (mesh.x(k % n) + 0.5)).cos())
            .collect();
        let mut jw = vec![0.0; n * n];
        LinearOperator::<f64, f64>::apply(&j, &w, &mut jw);
        let dx = mesh.dx;
        let ev = -(2.0 / (dx * dx)) * (1.0 - (tp * dx).cos()) + (1.0 - 2.0 * u0) / (0.04 * 0.04);
        for k in 0..n * n {
            assert!((jw[k] - ev * w[k]).abs() < 1e-9 * ev.abs());
        }
    }

    #[test]
    fn initial_condition_values() {
        let p = problem(64, AcReaction::Logistic);
        let u = p.initial_condition();
        let centre = u[32 * 64 + 32];
        assert!((centre - (0.25 / (2f64.sqrt() * 0.04)).tanh()).abs() < 1e-15);
        assert!((centre - 0.999710).abs() < 5e-7);
        assert!((u[0] - (-0.999710)).abs() < 5e-7);
        assert!(u.iter().all(|&v| v > -1.0 && v < 1.0));

        let radial = AllenCahn::new(
            p.mesh,
            AllenCahnParams {
                initial: AcInitial::Radial,
                ..Default::default()
            },
        );
        let ur = radial.initial_condition();
        assert_eq!(ur[32 * 64 + 32], centre);
        // (0.25, 0) lies on the radial interface but inside the literal one
        assert!(ur[32 * 64 + 48].abs() < 1e-15);
        assert!(u[32 * 64 + 48] > 0.99);
    }
}
