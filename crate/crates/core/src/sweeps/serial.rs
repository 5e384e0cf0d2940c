//! Node-by-node forward substitution with a classical Newton solve per node.

use crate::linsolve::{gmres, ShiftedOperator};
use crate::problems::Problem;
use crate::scalar::{norm_inf, Real};
use crate::sweeps::{eval_nodes, frozen_rhs, LevelCounters, StepState, SweepContext, SweepError};

/// Stopping rule of the per-node Newton iteration.
///
/// `{ tol: 0, max_iter: 1 }` performs exactly one Newton step per node;
/// a positive `tol` with a larger `max_iter` iterates to that residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> NewtonSettings<T> {
    pub fn single() -> Self {
        Self {
            tol: T::zero(),
            max_iter: 1,
        }
    }

    pub fn to_tolerance(tol: T, max_iter: usize) -> Self {
        Self { tol, max_iter }
    }
}

/// Consecutive residual increases that count as divergence.
const DIVERGENCE_STREAK: usize = 3;

/// One SDC sweep with the lower-triangular `Q_Δ` of the rule.
///
/// Node `m` solves `v − Δt q̃_mm f(v) = c_m + Δt Σ_{n<m} q̃_mn f(u_n^{k+1})`
/// by Newton, starting from the current node value and refreshing the
/// Jacobian at every iterate.
pub fn sdc_sweep_serial<T: Real, P: Problem<T>>(
    state: &mut StepState<T>,
    ctx: &SweepContext<'_, T, P>,
    newton: &NewtonSettings<T>,
    counters: &mut LevelCounters,
) -> Result<(), SweepError> {
    let rule = ctx.rule;
    let m_nodes = rule.num_nodes();
    let dim = ctx.problem.dim();
    state.check(dim, m_nodes)?;
    if !rule.q_delta.is_lower_triangular::<T>() {
        return Err(SweepError::Shape("Q_Δ must be lower triangular"));
    }
    let dt = ctx.dt;
    let fu = eval_nodes(ctx.problem, &state.u);
    let c = frozen_rhs(state, rule, dt, Some(&rule.q_delta), &fu);

    let mut f_new: Vec<Vec<T>> = Vec::with_capacity(m_nodes);
    for m in 0..m_nodes {
        let mut rhs = c[m].clone();
        for (n, fnew) in f_new.iter().enumerate() {
            let w = dt * rule.q_delta.get(m, n);
            for (r, &f) in rhs.iter_mut().zip(fnew) {
                *r += w * f;
            }
        }
        let a = dt * rule.q_delta.get(m, m);
        let mut v = state.u[m].clone();
        let mut fv = fu[m].clone();
        let mut g = vec![T::zero(); dim];
        let mut previous = T::infinity();
        let mut streak = 0;
        let mut iter = 0;
        loop {
            for k in 0..dim {
                g[k] = rhs[k] + a * fv[k] - v[k];
            }
            let gn = norm_inf(&g);
            if !gn.is_finite() {
                return Err(SweepError::NewtonDiverged {
                    node: m,
                    iterations: iter,
                    residual: gn.to_f64_lossy(),
                });
            }
            if gn > previous {
                streak += 1;
                if streak >= DIVERGENCE_STREAK {
                    return Err(SweepError::NewtonDiverged {
                        node: m,
                        iterations: iter,
                        residual: gn.to_f64_lossy(),
                    });
                }
            } else {
                streak = 0;
            }
            previous = gn;
            if gn <= newton.tol || iter >= newton.max_iter || gn == T::zero() {
                break;
            }
            let jac = ctx.problem.jacobian_at(&v);
            let op = ShiftedOperator::new(&jac, a);
            let x0 = vec![T::zero(); dim];
            let (delta, report) = gmres(&op, &g, &x0, &ctx.gmres)
                .map_err(|source| SweepError::Linsolve { node: m, source })?;
            counters.record_solve(m, report.iterations);
            if !report.converged {
                return Err(SweepError::LinearSolveFailed {
                    node: m,
                    iterations: report.iterations,
                    residual: report.final_residual_norm.to_f64_lossy(),
                });
            }
            for (vi, di) in v.iter_mut().zip(&delta) {
                *vi += *di;
            }
            ctx.problem.eval_f(&v, &mut fv);
            iter += 1;
        }
        counters.newton_iters += iter;
        state.u[m] = v;
        f_new.push(fv);
    }
    state.rhs_cache = c;
    counters.sweeps += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::{dense_solve, DenseMatrix};
    use crate::problems::{AcReaction, AllenCahn, AllenCahnParams, Dahlquist};
    use crate::sweeps::testing::*;
    use crate::sweeps::{collocation_residual, LevelTag};

    #[test]
    fn one_sweep_matches_triangular_solve() {
        let r = rule(4);
        let (lambda, dt) = (-1.0, 0.2);
        let p = Dahlquist::real(lambda);
        let c = ctx(&p, &r, dt);
        let mut s = StepState::spread(LevelTag::Fine, &[1.0], 4);
        let uk: Vec<f64> = s.u.iter().map(|v| v[0]).collect();
        let mut counters = LevelCounters::default();
        sdc_sweep_serial(&mut s, &c, &NewtonSettings::single(), &mut counters).unwrap();

        let a = DenseMatrix::from_fn(4, 4, |i, j| {
            (if i == j { 1.0 } else { 0.0 }) - dt * lambda * r.q_delta.get(i, j)
        });
        let qmd = r.q.sub(&r.q_delta);
        let b: Vec<f64> = (0..4)
            .map(|i| 1.0 + dt * lambda * (0..4).map(|j| qmd.get(i, j) * uk[j]).sum::<f64>())
            .collect();
        let oracle = dense_solve(&a, &b).unwrap();
        for m in 0..4 {
            assert!((s.u[m][0] - oracle[m]).abs() < 1e-14);
        }
        assert_eq!(counters.linear_solves, 4);
        assert_eq!(counters.newton_iters, 4);
    }

    #[test]
    fn trivial_problem_returns_initial_value() {
        let r = rule(3);
        let c = SweepContext {
            problem: &Zero,
            rule: &r,
            dt: 0.3,
            gmres: Default::default(),
        };
        let mut s = StepState::spread(LevelTag::Fine, &[2.0], 3);
        s.u = vec![vec![5.0], vec![-1.0], vec![0.25]];
        sdc_sweep_serial(
            &mut s,
            &c,
            &NewtonSettings::single(),
            &mut LevelCounters::default(),
        )
        .unwrap();
        assert!(s.u.iter().all(|v| v[0] == 2.0));
    }

    #[test]
    fn repeated_sweeps_contract_to_collocation() {
        let r = rule(4);
        let (lambda, dt) = (-1.0, 0.1);
        let p = Dahlquist::real(lambda);
        let c = ctx(&p, &r, dt);
        let exact = dense_collocation(&r, lambda, dt, 1.0);
        let mut s = StepState::spread(LevelTag::Fine, &[1.0], 4);
        let err = |s: &StepState<f64>| {
            (0..4)
                .map(|m| (s.u[m][0] - exact[m]).abs())
                .fold(0.0, f64::max)
        };
        let mut prev = err(&s);
        for _ in 0..8 {
            sdc_sweep_serial(
                &mut s,
                &c,
                &NewtonSettings::single(),
                &mut LevelCounters::default(),
            )
            .unwrap();
            let e = err(&s);
            assert!(e < 0.5 * prev || e < 1e-15, "{e} vs {prev}");
            prev = e;
        }
        assert!(prev < 1e-13);
        assert!(collocation_residual(&s, &c).unwrap().1 < 1e-13);
    }

    #[test]
    fn tolerance_mode_iterates_until_node_residual_is_small() {
        let mesh = AllenCahn::default_mesh(16).unwrap();
        let p = AllenCahn::new(
            mesh,
            AllenCahnParams {
                reaction: AcReaction::Cubic,
                ..Default::default()
            },
        );
        let r = rule(3);
        let c = SweepContext {
            problem: &p,
            rule: &r,
            dt: 1e-3,
            gmres: Default::default(),
        };
        let u0 = p.initial_condition();
        let mut single = StepState::spread(LevelTag::Fine, &u0, 3);
        let mut many = single.clone();
        let mut c1 = LevelCounters::default();
        let mut cn = LevelCounters::default();
        sdc_sweep_serial(&mut single, &c, &NewtonSettings::single(), &mut c1).unwrap();
        sdc_sweep_serial(
            &mut many,
            &c,
            &NewtonSettings::to_tolerance(1e-11, 20),
            &mut cn,
        )
        .unwrap();
        assert_eq!(c1.newton_iters, 3);
        assert!(cn.newton_iters > 3);
        assert!(cn.linear_solves >= c1.linear_solves);
    }

    #[test]
    fn divergence_is_reported() {
        struct Blowup;
        impl Problem<f64> for Blowup {
            type Jacobian = crate::problems::DahlquistJacobian<f64>;
            fn name(&self) -> &'static str {
                "blowup"
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
            // f(u) = u³ with a reversed-sign Jacobian sends Newton the wrong way
            fn eval_f(&self, u: &[f64], out: &mut [f64]) {
                out[0] = u[0] * u[0] * u[0];
            }
            fn jacobian_at(&self, u: &[f64]) -> Self::Jacobian {
                crate::problems::DahlquistJacobian {
                    lambda: num_complex::Complex::new(-3.0 * u[0] * u[0], 0.0),
                    dim: 1,
                }
            }
            fn initial_condition(&self) -> Vec<f64> {
                vec![1.0]
            }
        }
        let r = rule(2);
        let c = SweepContext {
            problem: &Blowup,
            rule: &r,
            dt: 1.0,
            gmres: Default::default(),
        };
        let mut s = StepState::spread(LevelTag::Fine, &[1.0], 2);
        let out = sdc_sweep_serial(
            &mut s,
            &c,
            &NewtonSettings::to_tolerance(1e-12, 50),
            &mut LevelCounters::default(),
        );
        assert!(
            matches!(out, Err(SweepError::NewtonDiverged { node: 0, .. })),
            "{out:?}"
        );
    }
}
