//! Gray-Scott: two species `(u, v)` on the periodic unit square.

use serde::{Deserialize, Serialize};

use crate::problems::{Problem, ReactionDiffusionJacobian};
use crate::scalar::Real;
use crate::spatial::{laplacian_into, Mesh2D};

/// Form of the `u`–`v` coupling term `g(u, v)` in `u_t = … − g + …`, `v_t = … + g − …`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GsCoupling {
    /// `g = 2uv`
    #[default]
    Bilinear,
    /// `g = uv²`
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrayScottParams<T> {
    pub du: T,
    pub dv: T,
    pub feed: T,
    pub kill: T,
    pub coupling: GsCoupling,
}

impl<T: Real> Default for GrayScottParams<T> {
    fn default() -> Self {
        Self {
            du: T::lit(1e-4),
            dv: T::lit(1e-5),
            feed: T::lit(0.0367),
            kill: T::lit(0.0649),
            coupling: GsCoupling::Bilinear,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrayScott<T> {
    pub mesh: Mesh2D<T>,
    pub params: GrayScottParams<T>,
}

impl<T: Real> GrayScott<T> {
    /// Panics on negative coefficients.
    pub fn new(mesh: Mesh2D<T>, params: GrayScottParams<T>) -> Self {
        let p = &params;
        assert!(
            p.du >= T::zero() && p.dv >= T::zero() && p.feed >= T::zero() && p.kill >= T::zero(),
            "Gray-Scott coefficients must be nonnegative"
        );
        Self { mesh, params }
    }

    /// `g(u, v)` and its partial derivatives `(g_u, g_v)`.
    #[inline]
    fn coupling(&self, u: T, v: T) -> (T, T, T) {
        let two = T::lit(2.0);
        match self.params.coupling {
            GsCoupling::Bilinear => (two * u * v, two * v, two * u),
            GsCoupling::Classical => (u * v * v, v * v, two * u * v),
        }
    }
}

impl<T: Real> Problem<T> for GrayScott<T> {
    type Jacobian = ReactionDiffusionJacobian<T>;

    fn name(&self) -> &'static str {
        "gray-scott"
    }

    fn dim(&self) -> usize {
        2 * self.mesh.points()
    }

    fn components(&self) -> usize {
        2
    }

    fn mesh(&self) -> Option<Mesh2D<T>> {
        Some(self.mesh)
    }

    fn eval_f(&self, x: &[T], out: &mut [T]) {
        let p = &self.params;
        laplacian_into(&self.mesh, x, out, &[p.du, p.dv]);
        let np = self.mesh.points();
        let (u, v) = x.split_at(np);
        let (fu, fv) = out.split_at_mut(np);
        for k in 0..np {
            let (g, _, _) = self.coupling(u[k], v[k]);
            fu[k] += p.feed * (T::one() - u[k]) - g;
            fv[k] += g - (p.feed + p.kill) * v[k];
        }
    }

    fn jacobian_at(&self, x0: &[T]) -> Self::Jacobian {
        let p = &self.params;
        let np = self.mesh.points();
        let (u, v) = x0.split_at(np);
        let mut a_uu = Vec::with_capacity(np);
        let mut a_uv = Vec::with_capacity(np);
        let mut a_vu = Vec::with_capacity(np);
        let mut a_vv = Vec::with_capacity(np);
        for k in 0..np {
            let (_, gu, gv) = self.coupling(u[k], v[k]);
            a_uu.push(-gu - p.feed);
            a_uv.push(-gv);
            a_vu.push(gu);
            a_vv.push(gv - (p.feed + p.kill));
        }
        ReactionDiffusionJacobian {
            mesh: self.mesh,
            diffusion: vec![p.du, p.dv],
            coupling: vec![a_uu, a_uv, a_vu, a_vv],
        }
    }

    /// `(u, v) = (0.5, 0.25)` within distance 0.05 of the domain centre, `(1, 0)` elsewhere.
    fn initial_condition(&self) -> Vec<T> {
        let (x0, x1, y0, y1) = self.mesh.domain;
        let half = T::lit(0.5);
        let (cx, cy) = ((x0 + x1) * half, (y0 + y1) * half);
        let r = T::lit(0.05);
        let n = self.mesh.n;
        let np = n * n;
        let mut out = vec![T::zero(); 2 * np];
        for j in 0..n {
            for i in 0..n {
                let dx = self.mesh.x(i) - cx;
                let dy = self.mesh.y(j) - cy;
                let inside = (dx * dx + dy * dy).sqrt() < r;
                let k = j * n + i;
                if inside {
                    out[k] = half;
                    out[np + k] = T::lit(0.25);
                } else {
                    out[k] = T::one();
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{check_fd, check_linearity_and_complex};

    fn problem(n: usize, coupling: GsCoupling) -> GrayScott<f64> {
        GrayScott::new(
            Mesh2D::unit_square(n).unwrap(),
            GrayScottParams {
                coupling,
                ..Default::default()
            },
        )
    }

    #[test]
    fn homogeneous_states() {
        let p = problem(8, GsCoupling::Bilinear);
        let mut out = vec![0.0; 128];
        let mut x = vec![1.0; 64];
        x.extend(vec![0.0; 64]);
        p.eval_f(&x, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-14));

        let mut x = vec![0.0; 64];
        x.extend(vec![1.0; 64]);
        p.eval_f(&x, &mut out);
        let (f, k) = (0.0367, 0.0649);
        assert!(out[..64].iter().all(|v| (v - f).abs() < 1e-14));
        assert!(out[64..].iter().all(|v| (v + f + k).abs() < 1e-14));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        check_fd(&problem(16, GsCoupling::Bilinear), 0.0, 1.0);
        check_fd(&problem(16, GsCoupling::Classical), 0.0, 1.0);
        check_linearity_and_complex(&problem(8, GsCoupling::Bilinear));
    }

    #[test]
    fn bilinear_jacobian_blocks() {
        let p = problem(4, GsCoupling::Bilinear);
        let mut x = vec![0.3; 16];
        x.extend(vec![0.7; 16]);
        let j = p.jacobian_at(&x);
        let (f, k) = (0.0367, 0.0649);
        assert!((j.coupling[0][0] - (-1.4 - f)).abs() < 1e-15);
        assert!((j.coupling[1][0] - (-0.6)).abs() < 1e-15);
        assert!((j.coupling[2][0] - 1.4).abs() < 1e-15);
        assert!((j.coupling[3][0] - (0.6 - f - k)).abs() < 1e-15);
    }

    #[test]
    fn initial_disc() {
        let n = 128;
        let p = problem(n, GsCoupling::Bilinear);
        let x = p.initial_condition();
        let np = n * n;
        let centre = (n / 2) * n + n / 2;
        assert_eq!((x[centre], x[np + centre]), (0.5, 0.25));
        assert_eq!((x[0], x[np]), (1.0, 0.0));
        let inside = x[..np].iter().filter(|&&u| u == 0.5).count() as f64;
        let dx = 1.0 / n as f64;
        let area = std::f64::consts::PI * 0.05f64.powi(2);
        // band of one cell around the circle
        let band = 2.0 * std::f64::consts::PI * 0.05 * dx;
        assert!(
            (inside * dx * dx - area).abs() <= band,
            "{} vs {area}",
            inside * dx * dx
        );
    }
}
