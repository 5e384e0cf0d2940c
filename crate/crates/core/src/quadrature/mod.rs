//! Collocation nodes, quadrature matrices and SDC preconditioner matrices.
//!
//! Everything here lives on the normalized interval: `Q` and `Q_Δ` are
//! stored with the step size scaled out, so a collocation update reads
//! `u = u₀ + Δt·Q·f(u)` with `Δt` applied by the caller.

mod eigen;
mod nodes;

pub use eigen::{diagonalize, Diagonalization, CONDITION_WARNING, SEPARATION_TOLERANCE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linsolve::DenseMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("zero pivot in the LU factorization of Qᵀ at row {0}")]
    FactorizationFailure(usize),
    #[error("eigenvalues not separated (min distance {separation:e})")]
    NotDiagonalizable { separation: f64 },
    #[error("eigenvalue iteration did not converge")]
    EigenSolverStalled,
}

/// Which lower-triangular approximation of `Q` drives the SDC sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QDeltaKind {
    /// `Q_Δ = Uᵀ` from `Qᵀ = L U`.
    #[default]
    Lu,
    /// Implicit Euler substeps between consecutive nodes.
    ImplicitEuler,
}

/// Nodes and matrices for one collocation interval, in normalized units.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T: Real> {
    /// Node positions in (0, 1], last one exactly 1.
    pub nodes: Vec<T>,
    pub q: DenseMatrix<T>,
    pub q_delta: DenseMatrix<T>,
    pub q_delta_kind: QDeltaKind,
    pub diag_q: Diagonalization<T>,
    pub diag_q_delta: Diagonalization<T>,
}

impl<T: Real> QuadratureRule<T> {
    /// Right Gauss-Radau rule with `m` nodes on [0, 1].
    pub fn radau_right(m: usize, kind: QDeltaKind) -> Result<Self, QuadratureError> {
        let nodes = radau_right_nodes(m, T::zero(), T::one())?;
        let q = build_q(&nodes, T::zero(), T::one())?;
        let q_delta = match kind {
            QDeltaKind::Lu => build_q_delta_lu(&q)?,
            QDeltaKind::ImplicitEuler => build_q_delta_euler(&nodes, T::zero(), T::one())?,
        };
        let diag_q = diagonalize(&q)?;
        let diag_q_delta = diagonalize(&q_delta)?;
        Ok(Self {
            nodes,
            q,
            q_delta,
            q_delta_kind: kind,
            diag_q,
            diag_q_delta,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

fn check_interval<T: Real>(t_l: T, t_r: T) -> Result<T, QuadratureError> {
    if !(t_l < t_r) || !t_l.is_finite() || !t_r.is_finite() {
        return Err(QuadratureError::InvalidArgument(
            "interval must satisfy t_l < t_r",
        ));
    }
    Ok(t_r - t_l)
}

/// Right-endpoint Gauss-Radau (Radau IIA) abscissae mapped onto `[t_l, t_r]`.
pub fn radau_right_nodes<T: Real>(m: usize, t_l: T, t_r: T) -> Result<Vec<T>, QuadratureError> {
    if m < 1 {
        return Err(QuadratureError::InvalidArgument("node count must be ≥ 1"));
    }
    let dt = check_interval(t_l, t_r)?;
    let reference = nodes::radau_right_reference::<T>(m)?;
    let half = T::lit(0.5);
    let mut out: Vec<T> = reference
        .iter()
        .map(|&x| t_l + (x + T::one()) * half * dt)
        .collect();
    out[m - 1] = t_r;
    Ok(out)
}

/// Gauss-Legendre points and weights on [0, 1], exact for degree `2k − 1`.
fn gauss_legendre_unit<T: Real>(k: usize) -> Result<(Vec<T>, Vec<T>), QuadratureError> {
    let off: Vec<T> = (1..k)
        .map(|i| {
            let i = T::from_usize_lossy(i);
            i / (T::lit(4.0) * i * i - T::one()).sqrt()
        })
        .collect();
    let x = nodes::symmetric_tridiagonal_eigenvalues(&vec![T::zero(); k], &off)?;
    let half = T::lit(0.5);
    let mut pts = Vec::with_capacity(k);
    let mut wts = Vec::with_capacity(k);
    for xi in x {
        let (_, dp) = nodes::legendre_with_derivative(k, xi);
        // w = 2 / ((1 − x²) P'_k(x)²) on [−1, 1], halved for [0, 1]
        let w = T::one() / ((T::one() - xi * xi) * dp * dp);
        pts.push((xi + T::one()) * half);
        wts.push(w);
    }
    Ok((pts, wts))
}

/// `ℓ_j(x)` over `nodes` in product form.
fn lagrange_basis<T: Real>(nodes: &[T], j: usize, x: T) -> T {
    nodes
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .fold(T::one(), |acc, (_, &xk)| acc * (x - xk) / (nodes[j] - xk))
}

/// `Q[m][j] = (1/Δt) ∫_{t_l}^{nodes[m]} ℓ_j(s) ds`, integrating the Lagrange
/// basis over the normalized nodes with a Gauss rule that is exact for it.
pub fn build_q<T: Real>(nodes: &[T], t_l: T, t_r: T) -> Result<DenseMatrix<T>, QuadratureError> {
    let dt = check_interval(t_l, t_r)?;
    if nodes.is_empty() {
        return Err(QuadratureError::InvalidArgument("empty node list"));
    }
    let tau: Vec<T> = nodes.iter().map(|&x| (x - t_l) / dt).collect();
    for i in 0..tau.len() {
        for j in (i + 1)..tau.len() {
            if tau[i] == tau[j] {
                return Err(QuadratureError::InvalidArgument("duplicate nodes"));
            }
        }
    }
    let m = tau.len();
    // ℓ_j has degree m − 1, so ⌈m/2⌉ Gauss points already integrate it exactly
    let (gx, gw) = gauss_legendre_unit::<T>(m / 2 + 1)?;
    Ok(DenseMatrix::from_fn(m, m, |row, j| {
        let b = tau[row];
        gx.iter()
            .zip(&gw)
            .map(|(&x, &w)| w * lagrange_basis(&tau, j, b * x))
            .sum::<T>()
            * b
    }))
}

/// Doolittle LU of `Qᵀ` without pivoting: returns `(L, U)` with unit-lower `L`.
pub fn lu_no_pivot<T: Real>(
    a: &DenseMatrix<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>), QuadratureError> {
    let n = a.rows();
    if n != a.cols() {
        return Err(QuadratureError::InvalidArgument("matrix must be square"));
    }
    let mut l = DenseMatrix::<T>::identity(n);
    let mut u = a.clone();
    for k in 0..n {
        let pivot = u.get(k, k);
        if pivot == T::zero() {
            return Err(QuadratureError::FactorizationFailure(k));
        }
        for i in (k + 1)..n {
            let factor = u.get(i, k) / pivot;
            l.set(i, k, factor);
            u.set(i, k, T::zero());
            for j in (k + 1)..n {
                let v = u.get(i, j) - factor * u.get(k, j);
                u.set(i, j, v);
            }
        }
    }
    Ok((l, u))
}

/// The LU trick: `Q_Δ = Uᵀ` where `Qᵀ = L U`.
pub fn build_q_delta_lu<T: Real>(q: &DenseMatrix<T>) -> Result<DenseMatrix<T>, QuadratureError> {
    let (_, u) = lu_no_pivot(&q.transpose())?;
    Ok(u.transpose())
}

/// Implicit-Euler substepping: `Q_Δ[m][j] = (τ_j − τ_{j−1})/Δt` for `j ≤ m`.
pub fn build_q_delta_euler<T: Real>(
    nodes: &[T],
    t_l: T,
    t_r: T,
) -> Result<DenseMatrix<T>, QuadratureError> {
    let dt = check_interval(t_l, t_r)?;
    if nodes.is_empty() {
        return Err(QuadratureError::InvalidArgument("empty node list"));
    }
    let m = nodes.len();
    let steps: Vec<T> = (0..m)
        .map(|j| {
            let prev = if j == 0 { t_l } else { nodes[j - 1] };
            (nodes[j] - prev) / dt
        })
        .collect();
    Ok(DenseMatrix::from_fn(m, m, |row, j| {
        if j <= row {
            steps[j]
        } else {
            T::zero()
        }
    }))
}
