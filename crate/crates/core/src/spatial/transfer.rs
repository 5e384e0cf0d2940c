//! Full-weighting restriction and bilinear interpolation.
//!
//! Coarse point `(I, J)` coincides with fine point `(2I, 2J)`. Under the
//! mesh-weighted inner products the pair is variational: `⟨R u, w⟩_coarse =
//! ⟨u, T w⟩_fine`, i.e. `R = Tᵀ/4` in plain coordinates.

use crate::scalar::Real;
use crate::spatial::{Field, Mesh2D, SpatialError};

/// Node-wise spatial transfer between a fine and a coarse level.
pub trait Transfer<T: Real>: Send + Sync {
    fn fine_dim(&self) -> usize;
    fn coarse_dim(&self) -> usize;
    fn restrict(&self, fine: &[T], coarse: &mut [T]);
    fn interpolate(&self, coarse: &[T], fine: &mut [T]);
}

/// Both levels share one discretization.
#[derive(Debug, Clone, Copy)]
pub struct IdentityTransfer(pub usize);

impl<T: Real> Transfer<T> for IdentityTransfer {
    fn fine_dim(&self) -> usize {
        self.0
    }
    fn coarse_dim(&self) -> usize {
        self.0
    }
    fn restrict(&self, fine: &[T], coarse: &mut [T]) {
        coarse.copy_from_slice(fine);
    }
    fn interpolate(&self, coarse: &[T], fine: &mut [T]) {
        fine.copy_from_slice(coarse);
    }
}

/// Full weighting / bilinear pair between a mesh and its coarsening.
#[derive(Debug, Clone, Copy)]
pub struct MeshTransfer<T> {
    pub fine: Mesh2D<T>,
    pub coarse: Mesh2D<T>,
    pub components: usize,
}

impl<T: Real> MeshTransfer<T> {
    pub fn new(
        fine: Mesh2D<T>,
        coarse: Mesh2D<T>,
        components: usize,
    ) -> Result<Self, SpatialError> {
        if fine.n != 2 * coarse.n {
            return Err(SpatialError::MeshMismatch {
                expected: fine.n / 2,
                found: coarse.n,
            });
        }
        if fine.domain != coarse.domain {
            return Err(SpatialError::InvalidArgument(
                "meshes must cover the same domain",
            ));
        }
        Ok(Self {
            fine,
            coarse,
            components,
        })
    }
}

impl<T: Real> Transfer<T> for MeshTransfer<T> {
    fn fine_dim(&self) -> usize {
        self.components * self.fine.points()
    }

    fn coarse_dim(&self) -> usize {
        self.components * self.coarse.points()
    }

    fn restrict(&self, fine: &[T], coarse: &mut [T]) {
        let nf = self.fine.n;
        let nc = self.coarse.n;
        let (pf, pc) = (nf * nf, nc * nc);
        let w_c = T::lit(0.25);
        let w_e = T::lit(0.125);
        let w_k = T::lit(0.0625);
        for c in 0..self.components {
            let f = &fine[c * pf..(c + 1) * pf];
            let out = &mut coarse[c * pc..(c + 1) * pc];
            for jc in 0..nc {
                let j = 2 * jc;
                let (jm, jp) = ((j + nf - 1) % nf, (j + 1) % nf);
                for ic in 0..nc {
                    let i = 2 * ic;
                    let (im, ip) = ((i + nf - 1) % nf, (i + 1) % nf);
                    let centre = f[j * nf + i];
                    let edges = f[j * nf + im] + f[j * nf + ip] + f[jm * nf + i] + f[jp * nf + i];
                    let corners =
                        f[jm * nf + im] + f[jm * nf + ip] + f[jp * nf + im] + f[jp * nf + ip];
                    out[jc * nc + ic] = w_c * centre + w_e * edges + w_k * corners;
                }
            }
        }
    }

    fn interpolate(&self, coarse: &[T], fine: &mut [T]) {
        let nf = self.fine.n;
        let nc = self.coarse.n;
        let (pf, pc) = (nf * nf, nc * nc);
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        for c in 0..self.components {
            let g = &coarse[c * pc..(c + 1) * pc];
            let out = &mut fine[c * pf..(c + 1) * pf];
            for jc in 0..nc {
                let jn = (jc + 1) % nc;
                for ic in 0..nc {
                    let inx = (ic + 1) % nc;
                    let a = g[jc * nc + ic];
                    let b = g[jc * nc + inx];
                    let d = g[jn * nc + ic];
                    let e = g[jn * nc + inx];
                    let (i, j) = (2 * ic, 2 * jc);
                    out[j * nf + i] = a;
                    out[j * nf + i + 1] = (a + b) * half;
                    out[(j + 1) * nf + i] = (a + d) * half;
                    out[(j + 1) * nf + i + 1] = (a + b + d + e) * quarter;
                }
            }
        }
    }
}

/// Full-weighting restriction of a field onto its coarsened mesh.
pub fn restrict<T: Real>(u: &Field<T>, coarse: &Mesh2D<T>) -> Result<Field<T>, SpatialError> {
    let t = MeshTransfer::new(u.mesh, *coarse, u.components)?;
    let mut out = Field::zeros(*coarse, u.components);
    t.restrict(&u.data, &mut out.data);
    Ok(out)
}

/// Bilinear interpolation of a coarse field onto the mesh with twice the points.
pub fn interpolate<T: Real>(u: &Field<T>, fine: &Mesh2D<T>) -> Result<Field<T>, SpatialError> {
    let t = MeshTransfer::new(*fine, u.mesh, u.components)?;
    let mut out = Field::zeros(*fine, u.components);
    t.interpolate(&u.data, &mut out.data);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meshes(n: usize) -> (Mesh2D<f64>, Mesh2D<f64>) {
        let f = Mesh2D::unit_square(n).unwrap();
        (f, f.coarsen().unwrap())
    }

    #[test]
    fn constants_are_preserved() {
        let (f, c) = meshes(16);
        let u = Field::from_fn(f, 1, |_, _, _| 1.0);
        let r = restrict(&u, &c).unwrap();
        assert!(r.data.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let t = interpolate(&r, &f).unwrap();
        assert!(t.data.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn impulse_restricts_to_quarter() {
        let (f, c) = meshes(8);
        let mut u = Field::zeros(f, 1);
        u.data[4 * 8 + 2] = 1.0;
        let r = restrict(&u, &c).unwrap();
        assert_eq!(r.data[2 * 4 + 1], 0.25);
        assert_eq!(r.data.iter().sum::<f64>(), 0.25);
        // odd fine points only feed corner/edge weights of their coarse neighbours
        let mut odd = Field::zeros(f, 1);
        odd.data[3 * 8 + 3] = 1.0;
        let r = restrict(&odd, &c).unwrap();
        assert_eq!(r.data[4 + 1], 0.0625);
        assert!((r.data.iter().sum::<f64>() - 0.25).abs() < 1e-16);
    }

    #[test]
    fn coincident_points_are_injected() {
        let (f, c) = meshes(8);
        let u = Field::from_fn(c, 1, |_, x, y| x * 3.0 + y * y);
        let t = interpolate(&u, &f).unwrap();
        for jc in 0..4 {
            for ic in 0..4 {
                assert_eq!(t.data[(2 * jc) * 8 + 2 * ic], u.data[jc * 4 + ic]);
            }
        }
    }

    #[test]
    fn interpolation_is_second_order() {
        let tp = 2.0 * std::f64::consts::PI;
        let err = |nc: usize| {
            let (f, c) = meshes(2 * nc);
            let u = Field::from_fn(c, 1, |_, x, _| (tp * x).sin());
            let exact = Field::from_fn(f, 1, |_, x, _| (tp * x).sin());
            let t = interpolate(&u, &f).unwrap();
            t.data
                .iter()
                .zip(&exact.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e32, e64) = (err(32), err(64));
        let ratio = e32 / e64;
        assert!(ratio > 3.8 && ratio < 4.2, "ratio {ratio}");
        assert!(e32 <= 2.0 * (1.0 / 32.0f64).powi(2) * tp * tp / 8.0);
    }

    #[test]
    fn round_trip_is_second_order() {
        let tp = 2.0 * std::f64::consts::PI;
        let err = |n: usize| {
            let (f, c) = meshes(n);
            let u = Field::from_fn(f, 1, |_, x, y| (tp * x).sin() * (tp * y).cos());
            let back = interpolate(&restrict(&u, &c).unwrap(), &f).unwrap();
            back.data
                .iter()
                .zip(&u.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn mismatched_meshes_are_rejected() {
        let f = Mesh2D::<f64>::unit_square(16).unwrap();
        let wrong = Mesh2D::<f64>::unit_square(4).unwrap();
        let u = Field::zeros(f, 1);
        assert!(matches!(
            restrict(&u, &wrong),
            Err(SpatialError::MeshMismatch { .. })
        ));
        let shifted = Mesh2D::periodic(8, (-0.5, 0.5, -0.5, 0.5)).unwrap();
        assert!(restrict(&u, &shifted).is_err());
    }
}
