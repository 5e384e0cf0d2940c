//! Two-level PFASST and PFASST-ER for stiff reaction-diffusion problems.
//!
//! The numerical core is generic over `f32`/`f64` through [`scalar::Real`];
//! the aliases below fix the common `f64` instantiations. The [`cli`] driver
//! works in `f64` only.

// Index loops mirror the matrix notation; `!(a <= b)` comparisons are
// meant to treat NaN as failure.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod controller;
pub mod exec;
pub mod linsolve;
pub mod problems;
pub mod quadrature;
pub mod scalar;
pub mod spatial;
pub mod sweeps;

pub type QuadratureRule64 = quadrature::QuadratureRule<f64>;
pub type Mesh64 = spatial::Mesh2D<f64>;
pub type AllenCahn64 = problems::AllenCahn<f64>;
pub type GrayScott64 = problems::GrayScott<f64>;
pub type Dahlquist64 = problems::Dahlquist<f64>;
pub type ControllerSettings64 = controller::ControllerSettings<f64>;

pub type QuadratureRule32 = quadrature::QuadratureRule<f32>;
pub type Mesh32 = spatial::Mesh2D<f32>;
pub type AllenCahn32 = problems::AllenCahn<f32>;
