//! Single-step kernels: the collocation residual, the serial node-by-node
//! Newton sweep and the node-parallel diagonalized Quasi-Newton sweep.
//!
//! Both sweeps solve `v − Δt·P·f(v) = c` for a preconditioner `P` with the
//! frozen right-hand side `c = u₀ + Δt·(Q − P)·f(uᵏ) + τ` assembled at the
//! start of the sweep.

mod qn;
mod serial;

pub use qn::{qn_sweep_diag, QnGuess, QnSettings, QnVariant, IMAGINARY_RESIDUE_BOUND};
pub use serial::{sdc_sweep_serial, NewtonSettings};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linsolve::{DenseMatrix, GmresSettings, LinsolveError};
use crate::problems::Problem;
use crate::quadrature::QuadratureRule;
use crate::scalar::{norm_inf, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("Newton iteration diverged at node {node} (residual {residual:e} after {iterations} iterations)")]
    NewtonDiverged {
        node: usize,
        iterations: usize,
        residual: f64,
    },
    #[error(
        "GMRES did not converge at node {node} ({iterations} iterations, residual {residual:e})"
    )]
    LinearSolveFailed {
        node: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("linear solver error at node {node}: {source}")]
    Linsolve { node: usize, source: LinsolveError },
    #[error("imaginary residue {residue:e} exceeds bound {bound:e}")]
    ImaginaryResidue { residue: f64, bound: f64 },
    #[error("inconsistent step state: {0}")]
    Shape(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelTag {
    Fine,
    Coarse,
}

/// Node values of one time step on one level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState<T> {
    pub level: LevelTag,
    /// `u[m]` is the state at node `m`.
    pub u: Vec<Vec<T>>,
    /// Received initial value `u_{l,0}`.
    pub u0: Vec<T>,
    /// FAS correction per node; present exactly on the coarse level.
    pub tau: Option<Vec<Vec<T>>>,
    /// Frozen right-hand side `c` of the most recent sweep.
    pub rhs_cache: Vec<Vec<T>>,
}

impl<T: Real> StepState<T> {
    /// `u0` copied to all `m` nodes; the coarse level starts with `τ = 0`.
    pub fn spread(level: LevelTag, u0: &[T], m: usize) -> Self {
        let tau = match level {
            LevelTag::Fine => None,
            LevelTag::Coarse => Some(vec![vec![T::zero(); u0.len()]; m]),
        };
        Self {
            level,
            u: vec![u0.to_vec(); m],
            u0: u0.to_vec(),
            tau,
            rhs_cache: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.u.len()
    }

    pub fn last(&self) -> &[T] {
        self.u.last().expect("step state without nodes")
    }

    fn check(&self, dim: usize, m: usize) -> Result<(), SweepError> {
        if self.u.len() != m {
            return Err(SweepError::Shape("node count differs from the rule"));
        }
        if self.u0.len() != dim || self.u.iter().any(|v| v.len() != dim) {
            return Err(SweepError::Shape(
                "field length differs from the problem dimension",
            ));
        }
        if let Some(t) = &self.tau {
            if t.len() != m || t.iter().any(|v| v.len() != dim) {
                return Err(SweepError::Shape("tau shape differs from the node values"));
            }
        }
        if (self.level == LevelTag::Coarse) != self.tau.is_some() {
            return Err(SweepError::Shape(
                "tau must be present exactly on the coarse level",
            ));
        }
        Ok(())
    }
}

/// Work counters of one level, accumulated across sweeps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounters {
    pub sweeps: usize,
    pub newton_iters: usize,
    pub qn_steps: usize,
    pub linear_solves: usize,
    pub gmres_iters: usize,
    /// Indexed by node (serial sweeps) or eigenvalue (diagonalized sweeps).
    pub per_node_gmres: Vec<usize>,
    pub per_node_solves: Vec<usize>,
    /// Dense recombination gathers between node groups.
    pub node_gathers: usize,
}

impl LevelCounters {
    pub(crate) fn record_solve(&mut self, node: usize, iterations: usize) {
        if self.per_node_gmres.len() <= node {
            self.per_node_gmres.resize(node + 1, 0);
            self.per_node_solves.resize(node + 1, 0);
        }
        self.linear_solves += 1;
        self.gmres_iters += iterations;
        self.per_node_gmres[node] += iterations;
        self.per_node_solves[node] += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.sweeps += other.sweeps;
        self.newton_iters += other.newton_iters;
        self.qn_steps += other.qn_steps;
        self.linear_solves += other.linear_solves;
        self.gmres_iters += other.gmres_iters;
        self.node_gathers += other.node_gathers;
        let n = self.per_node_gmres.len().max(other.per_node_gmres.len());
        self.per_node_gmres.resize(n, 0);
        self.per_node_solves.resize(n, 0);
        for (a, b) in self.per_node_gmres.iter_mut().zip(&other.per_node_gmres) {
            *a += b;
        }
        for (a, b) in self.per_node_solves.iter_mut().zip(&other.per_node_solves) {
            *a += b;
        }
    }
}

/// What a sweep needs to know about its level.
#[derive(Debug)]
pub struct SweepContext<'a, T: Real, P> {
    pub problem: &'a P,
    pub rule: &'a QuadratureRule<T>,
    pub dt: T,
    pub gmres: GmresSettings<T>,
}

impl<T: Real, P> Clone for SweepContext<'_, T, P> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Real, P> Copy for SweepContext<'_, T, P> {}

pub(crate) fn eval_nodes<T: Real, P: Problem<T>>(problem: &P, u: &[Vec<T>]) -> Vec<Vec<T>> {
    u.iter()
        .map(|v| {
            let mut out = vec![T::zero(); v.len()];
            problem.eval_f(v, &mut out);
            out
        })
        .collect()
}

/// `out[m] += scale · Σ_j a[m, j] · x[j]`, accumulated in index order.
pub(crate) fn add_node_combination<T: Real>(
    out: &mut [Vec<T>],
    a: &DenseMatrix<T>,
    scale: T,
    x: &[Vec<T>],
) {
    for (m, o) in out.iter_mut().enumerate() {
        for (j, xj) in x.iter().enumerate() {
            let w = scale * a.get(m, j);
            if w == T::zero() {
                continue;
            }
            for (oi, &xi) in o.iter_mut().zip(xj) {
                *oi += w * xi;
            }
        }
    }
}

/// `c = u₀ + Δt·(Q − P)·f(uᵏ) + τ`; `P = None` stands for `P = Q`.
pub(crate) fn frozen_rhs<T: Real>(
    state: &StepState<T>,
    rule: &QuadratureRule<T>,
    dt: T,
    p: Option<&DenseMatrix<T>>,
    fu: &[Vec<T>],
) -> Vec<Vec<T>> {
    let m = state.num_nodes();
    let mut c = vec![state.u0.clone(); m];
    if let Some(p) = p {
        let diff = rule.q.sub(p);
        add_node_combination(&mut c, &diff, dt, fu);
    }
    if let Some(tau) = &state.tau {
        for (cm, tm) in c.iter_mut().zip(tau) {
            for (a, &b) in cm.iter_mut().zip(tm) {
                *a += b;
            }
        }
    }
    c
}

/// `r_m = u₀ + Δt Σ_j Q[m,j] f(u_j) + τ_m − u_m`, and `max_m ‖r_m‖_∞`.
pub fn collocation_residual<T: Real, P: Problem<T>>(
    state: &StepState<T>,
    ctx: &SweepContext<'_, T, P>,
) -> Result<(Vec<Vec<T>>, T), SweepError> {
    state.check(ctx.problem.dim(), ctx.rule.num_nodes())?;
    let fu = eval_nodes(ctx.problem, &state.u);
    let mut r = frozen_rhs(state, ctx.rule, ctx.dt, None, &fu);
    add_node_combination(&mut r, &ctx.rule.q, ctx.dt, &fu);
    let mut norm = T::zero();
    for (rm, um) in r.iter_mut().zip(&state.u) {
        for (a, &b) in rm.iter_mut().zip(um) {
            *a -= b;
        }
        norm = norm.max(norm_inf(rm));
    }
    Ok((r, norm))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::linsolve::dense_solve;
    use crate::problems::Dahlquist;
    use crate::quadrature::QDeltaKind;

    pub fn rule(m: usize) -> QuadratureRule<f64> {
        QuadratureRule::radau_right(m, QDeltaKind::Lu).unwrap()
    }

    pub fn ctx<'a>(
        p: &'a Dahlquist<f64>,
        r: &'a QuadratureRule<f64>,
        dt: f64,
    ) -> SweepContext<'a, f64, Dahlquist<f64>> {
        SweepContext {
            problem: p,
            rule: r,
            dt,
            gmres: GmresSettings::default(),
        }
    }

    /// Dense solve of `(I − Δt λ Q) u = u₀ 𝟙` for scalar real `λ`.
    pub fn dense_collocation(
        rule: &QuadratureRule<f64>,
        lambda: f64,
        dt: f64,
        u0: f64,
    ) -> Vec<f64> {
        let m = rule.num_nodes();
        let a = DenseMatrix::from_fn(m, m, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - dt * lambda * rule.q.get(i, j)
        });
        dense_solve(&a, &vec![u0; m]).unwrap()
    }

    /// `f ≡ 0` on a scalar state.
    pub struct Zero;

    impl Problem<f64> for Zero {
        type Jacobian = crate::problems::DahlquistJacobian<f64>;
        fn name(&self) -> &'static str {
            "zero"
        }
        fn dim(&self) -> usize {
            1
        }
        fn components(&self) -> usize {
            1
        }
        fn mesh(&self) -> Option<crate::spatial::Mesh2D<f64>> {
            None
        }
        fn eval_f(&self, _u: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn jacobian_at(&self, _u0: &[f64]) -> Self::Jacobian {
            crate::problems::DahlquistJacobian {
                lambda: num_complex::Complex::new(0.0, 0.0),
                dim: 1,
            }
        }
        fn initial_condition(&self) -> Vec<f64> {
            vec![1.0]
        }
    }
}
