//! Uniform periodic 2-D meshes, the 5-point Laplacian and the space-only
//! transfer operators between a mesh and its half-resolution coarsening.
//!
//! Grid values are stored component-major, then row by row in `y`, so entry
//! `(c, i, j)` of a field on an `n × n` mesh sits at `c·n² + j·n + i` with
//! `x_i = x_min + i·dx` and `y_j = y_min + j·dy`.

mod transfer;

pub use transfer::{interpolate, restrict, IdentityTransfer, MeshTransfer, Transfer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("mesh mismatch: expected {expected} points per dimension, found {found}")]
    MeshMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    #[default]
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh2D<T> {
    pub n: usize,
    /// `(x_min, x_max, y_min, y_max)`
    pub domain: (T, T, T, T),
    pub dx: T,
    pub dy: T,
    pub bc: BoundaryCondition,
}

impl<T: Real> Mesh2D<T> {
    /// Periodic mesh with `n` points per dimension; `n ≥ 4` and even.
    pub fn periodic(n: usize, domain: (T, T, T, T)) -> Result<Self, SpatialError> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(SpatialError::InvalidArgument(
                "points per dimension must be even and ≥ 4",
            ));
        }
        let (x0, x1, y0, y1) = domain;
        if !(x1 > x0) || !(y1 > y0) {
            return Err(SpatialError::InvalidArgument(
                "domain must have positive extent",
            ));
        }
        let nf = T::from_usize_lossy(n);
        Ok(Self {
            n,
            domain,
            dx: (x1 - x0) / nf,
            dy: (y1 - y0) / nf,
            bc: BoundaryCondition::Periodic,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self, SpatialError> {
        Self::periodic(n, (T::zero(), T::one(), T::zero(), T::one()))
    }

    /// The mesh with `n/2` points over the same domain.
    pub fn coarsen(&self) -> Result<Self, SpatialError> {
        Self::periodic(self.n / 2, self.domain)
    }

    pub fn points(&self) -> usize {
        self.n * self.n
    }

    pub fn x(&self, i: usize) -> T {
        self.domain.0 + T::from_usize_lossy(i) * self.dx
    }

    pub fn y(&self, j: usize) -> T {
        self.domain.2 + T::from_usize_lossy(j) * self.dy
    }

    /// Area weight of a single grid point, used by mesh inner products.
    pub fn cell_area(&self) -> T {
        self.dx * self.dy
    }
}

/// Grid values with one or more components on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub mesh: Mesh2D<T>,
    pub components: usize,
    pub data: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(mesh: Mesh2D<T>, components: usize) -> Self {
        Self {
            mesh,
            components,
            data: vec![T::zero(); components * mesh.points()],
        }
    }

    pub fn from_data(
        mesh: Mesh2D<T>,
        components: usize,
        data: Vec<T>,
    ) -> Result<Self, SpatialError> {
        if data.len() != components * mesh.points() {
            return Err(SpatialError::InvalidArgument(
                "data length must be components·n²",
            ));
        }
        Ok(Self {
            mesh,
            components,
            data,
        })
    }

    /// Samples `f(component, x, y)` at every grid point.
    pub fn from_fn(mesh: Mesh2D<T>, components: usize, f: impl Fn(usize, T, T) -> T) -> Self {
        let n = mesh.n;
        let mut data = Vec::with_capacity(components * n * n);
        for c in 0..components {
            for j in 0..n {
                for i in 0..n {
                    data.push(f(c, mesh.x(i), mesh.y(j)));
                }
            }
        }
        Self {
            mesh,
            components,
            data,
        }
    }

    pub fn component(&self, c: usize) -> &[T] {
        let p = self.mesh.points();
        &self.data[c * p..(c + 1) * p]
    }

    /// Mesh-weighted inner product `Σ u_i w_i · dx·dy`.
    pub fn inner(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum::<T>()
            * self.mesh.cell_area()
    }
}

/// 5-point periodic Laplacian of every component.
pub fn apply_laplacian<T: Real>(u: &Field<T>) -> Field<T> {
    let mut out = vec![T::zero(); u.data.len()];
    laplacian_into(&u.mesh, &u.data, &mut out, &vec![T::one(); u.components]);
    Field {
        mesh: u.mesh,
        components: u.components,
        data: out,
    }
}

/// `y_c = scale[c] · Δ x_c` for every component `c`, on real or complex data.
///
/// `x.len()` must equal `scale.len() · n²`.
pub fn laplacian_into<T: Real, S: Scalar<T>>(mesh: &Mesh2D<T>, x: &[S], y: &mut [S], scale: &[T]) {
    let n = mesh.n;
    let p = n * n;
    debug_assert_eq!(x.len(), scale.len() * p);
    debug_assert_eq!(y.len(), x.len());
    let cx = T::one() / (mesh.dx * mesh.dx);
    let cy = T::one() / (mesh.dy * mesh.dy);
    let two = T::lit(2.0);
    for (c, &s) in scale.iter().enumerate() {
        let xc = &x[c * p..(c + 1) * p];
        let yc = &mut y[c * p..(c + 1) * p];
        let (sx, sy) = (cx * s, cy * s);
        for j in 0..n {
            let row = &xc[j * n..(j + 1) * n];
            let down = &xc[((j + n - 1) % n) * n..][..n];
            let up = &xc[((j + 1) % n) * n..][..n];
            let out = &mut yc[j * n..(j + 1) * n];
            for i in 0..n {
                let left = row[if i == 0 { n - 1 } else { i - 1 }];
                let right = row[if i + 1 == n { 0 } else { i + 1 }];
                let centre = row[i] * two;
                out[i] = (left + right - centre) * sx + (down[i] + up[i] - centre) * sy;
            }
        }
    }
}
