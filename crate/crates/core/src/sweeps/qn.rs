//! Quasi-Newton sweep with the Jacobian frozen at the step's initial value.
//!
//! With `J₀ = f'(u₀)` the QN matrix `I − Δt·P ⊗ J₀` and `P = V Λ V⁻¹` give
//! `(I − Δt·P ⊗ J₀)⁻¹ = (V ⊗ I)(I − Δt·Λ ⊗ J₀)⁻¹(V⁻¹ ⊗ I)`: two dense node
//! recombinations around `M` independent shifted solves.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::linsolve::{gmres, LinearOperator, ShiftedOperator, SolveReport};
use crate::problems::Problem;
use crate::quadrature::Diagonalization;
use crate::scalar::{norm_inf, Real};
use crate::sweeps::{
    add_node_combination, eval_nodes, frozen_rhs, LevelCounters, StepState, SweepContext,
    SweepError,
};

/// Relative bound on the imaginary part discarded after recombination.
///
/// Types with less precision than `f64` use `1e3·ε` instead when larger.
pub const IMAGINARY_RESIDUE_BOUND: f64 = 1e-10;

/// Preconditioner matrix of the QN iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QnVariant {
    /// `P = Q_Δ`: the residual is the SDC sweep equation.
    QDelta,
    /// `P = Q`: the residual is the step's collocation equation.
    Q,
}

/// Starting iterate of the inner QN iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QnGuess {
    /// The current node values.
    #[default]
    Warm,
    /// `u₀` at every node.
    Spread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QnSettings {
    pub n_qn: usize,
    pub guess: QnGuess,
}

impl Default for QnSettings {
    fn default() -> Self {
        Self {
            n_qn: 1,
            guess: QnGuess::Warm,
        }
    }
}

type NodeSolve<T> = Result<(Vec<Complex<T>>, SolveReport<T>), SweepError>;

fn solve_shifted<T: Real, J>(
    jac0: &J,
    lambda: Complex<T>,
    dt: T,
    rbar: &[Complex<T>],
    node: usize,
    ctx_gmres: &crate::linsolve::GmresSettings<T>,
) -> NodeSolve<T>
where
    J: LinearOperator<T, T> + LinearOperator<T, Complex<T>>,
{
    let dim = rbar.len();
    let lift = |source| SweepError::Linsolve { node, source };
    let (x, report) = if lambda.im == T::zero() {
        // real eigenvalue: the system and its data are real
        let b: Vec<T> = rbar.iter().map(|z| z.re).collect();
        let op = ShiftedOperator::<T, T, J>::new(jac0, dt * lambda.re);
        let (x, report) = gmres(&op, &b, &vec![T::zero(); dim], ctx_gmres).map_err(lift)?;
        (
            x.into_iter().map(|v| Complex::new(v, T::zero())).collect(),
            report,
        )
    } else {
        let op = ShiftedOperator::<T, Complex<T>, J>::new(jac0, lambda * dt);
        gmres(
            &op,
            rbar,
            &vec![Complex::new(T::zero(), T::zero()); dim],
            ctx_gmres,
        )
        .map_err(lift)?
    };
    if !report.converged {
        return Err(SweepError::LinearSolveFailed {
            node,
            iterations: report.iterations,
            residual: report.final_residual_norm.to_f64_lossy(),
        });
    }
    Ok((x, report))
}

fn check_groups(groups: &[Vec<usize>], m: usize) -> Result<(), SweepError> {
    let mut seen = vec![false; m];
    for &node in groups.iter().flatten() {
        if node >= m || seen[node] {
            return Err(SweepError::Shape("node groups must partition the nodes"));
        }
        seen[node] = true;
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(SweepError::Shape("node groups must partition the nodes"))
    }
}

/// Runs the `M` shifted solves, one worker per node group.
fn solve_all<T: Real, J>(
    jac0: &J,
    diag: &Diagonalization<T>,
    dt: T,
    rbar: &[Vec<Complex<T>>],
    groups: &[Vec<usize>],
    gmres_settings: &crate::linsolve::GmresSettings<T>,
) -> Vec<NodeSolve<T>>
where
    J: LinearOperator<T, T> + LinearOperator<T, Complex<T>> + Sync,
{
    let m = rbar.len();
    let run = |node: usize| {
        solve_shifted(
            jac0,
            diag.lambda[node],
            dt,
            &rbar[node],
            node,
            gmres_settings,
        )
    };
    let mut slots: Vec<Option<NodeSolve<T>>> = (0..m).map(|_| None).collect();
    if groups.len() <= 1 {
        for &node in groups.iter().flatten() {
            slots[node] = Some(run(node));
        }
    } else {
        let results: Vec<Vec<(usize, NodeSolve<T>)>> = std::thread::scope(|s| {
            let handles: Vec<_> = groups
                .iter()
                .map(|g| {
                    let run = &run;
                    s.spawn(move || g.iter().map(|&node| (node, run(node))).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("node worker panicked"))
                .collect()
        });
        for (node, r) in results.into_iter().flatten() {
            slots[node] = Some(r);
        }
    }
    slots
        .into_iter()
        .map(|s| s.expect("every node is solved exactly once"))
        .collect()
}

/// `n_qn` Quasi-Newton steps on `G(v) = v − Δt·P·f(v) − c`.
///
/// `groups` partitions the node indices among node workers; the result is
/// independent of the partition because each solve is self-contained and
/// the recombinations sum in index order.
pub fn qn_sweep_diag<T: Real, P: Problem<T>>(
    state: &mut StepState<T>,
    ctx: &SweepContext<'_, T, P>,
    variant: QnVariant,
    jac0: &P::Jacobian,
    settings: &QnSettings,
    groups: &[Vec<usize>],
    counters: &mut LevelCounters,
) -> Result<(), SweepError> {
    let rule = ctx.rule;
    let m_nodes = rule.num_nodes();
    let dim = ctx.problem.dim();
    state.check(dim, m_nodes)?;
    check_groups(groups, m_nodes)?;
    let dt = ctx.dt;
    let (p, diag) = match variant {
        QnVariant::QDelta => (&rule.q_delta, &rule.diag_q_delta),
        QnVariant::Q => (&rule.q, &rule.diag_q),
    };
    let fu = eval_nodes(ctx.problem, &state.u);
    let c = match variant {
        QnVariant::QDelta => frozen_rhs(state, rule, dt, Some(p), &fu),
        QnVariant::Q => frozen_rhs(state, rule, dt, None, &fu),
    };
    let (mut v, mut fv) = match settings.guess {
        QnGuess::Warm => (state.u.clone(), fu),
        QnGuess::Spread => {
            let v = vec![state.u0.clone(); m_nodes];
            let fv = eval_nodes(ctx.problem, &v);
            (v, fv)
        }
    };
    let zero = Complex::new(T::zero(), T::zero());
    for step in 0..settings.n_qn {
        if step > 0 {
            fv = eval_nodes(ctx.problem, &v);
        }
        // r = −G(v) = c + Δt P f(v) − v
        let mut r = c.clone();
        add_node_combination(&mut r, p, dt, &fv);
        for (rm, vm) in r.iter_mut().zip(&v) {
            for (a, &b) in rm.iter_mut().zip(vm) {
                *a -= b;
            }
        }
        let mut rbar = vec![vec![zero; dim]; m_nodes];
        for (m, out) in rbar.iter_mut().enumerate() {
            for (j, rj) in r.iter().enumerate() {
                let w = diag.v_inv.get(m, j);
                for (o, &x) in out.iter_mut().zip(rj) {
                    *o += w * x;
                }
            }
        }
        let solutions = solve_all(jac0, diag, dt, &rbar, groups, &ctx.gmres);
        let mut ebar = Vec::with_capacity(m_nodes);
        for (node, s) in solutions.into_iter().enumerate() {
            let (x, report) = s?;
            counters.record_solve(node, report.iterations);
            ebar.push(x);
        }
        let mut residue = T::zero();
        for (m, vm) in v.iter_mut().enumerate() {
            let mut e = vec![zero; dim];
            for (n, en) in ebar.iter().enumerate() {
                let w = diag.v.get(m, n);
                for (o, &x) in e.iter_mut().zip(en) {
                    *o += w * x;
                }
            }
            for (vi, ei) in vm.iter_mut().zip(&e) {
                *vi += ei.re;
                residue = residue.max(ei.im.abs());
            }
        }
        let scale = v.iter().map(|vm| norm_inf(vm)).fold(T::zero(), T::max);
        let relative = T::lit(IMAGINARY_RESIDUE_BOUND).max(T::lit(1e3) * T::epsilon());
        let bound = relative * scale;
        if residue > bound {
            return Err(SweepError::ImaginaryResidue {
                residue: residue.to_f64_lossy(),
                bound: bound.to_f64_lossy(),
            });
        }
        counters.qn_steps += 1;
        if groups.len() > 1 {
            counters.node_gathers += 2;
        }
    }
    state.u = v;
    state.rhs_cache = c;
    counters.sweeps += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{AcReaction, AllenCahn, AllenCahnParams, Dahlquist};
    use crate::quadrature::{QDeltaKind, QuadratureRule};
    use crate::sweeps::testing::*;
    use crate::sweeps::{collocation_residual, sdc_sweep_serial, LevelTag, NewtonSettings};

    fn all_nodes(m: usize) -> Vec<Vec<usize>> {
        vec![(0..m).collect()]
    }

    #[test]
    fn q_variant_solves_linear_collocation_in_one_step() {
        let r = rule(4);
        let (lambda, dt) = (-1.0, 0.1);
        let p = Dahlquist::real(lambda);
        let c = ctx(&p, &r, dt);
        let mut s = StepState::spread(LevelTag::Fine, &[1.0], 4);
        let jac0 = p.jacobian_at(&s.u0);
        let mut counters = LevelCounters::default();
        qn_sweep_diag(
            &mut s,
            &c,
            QnVariant::Q,
            &jac0,
            &QnSettings::default(),
            &all_nodes(4),
            &mut counters,
        )
        .unwrap();
        let exact = dense_collocation(&r, lambda, dt, 1.0);
        for m in 0..4 {
            assert!((s.u[m][0] - exact[m]).abs() < 1e-12);
        }
        assert!(collocation_residual(&s, &c).unwrap().1 < 1e-12);
        assert_eq!(counters.linear_solves, 4);
        assert_eq!(counters.node_gathers, 0);
    }

    #[test]
    fn q_delta_variant_equals_serial_sweep_for_linear_problem() {
        let r = rule(4);
        let p = Dahlquist::real(-2.0);
        let c = ctx(&p, &r, 0.3);
        let mut a = StepState::spread(LevelTag::Fine, &[1.0], 4);
        a.u = vec![vec![0.9], vec![0.7], vec![0.6], vec![0.5]];
        let mut b = a.clone();
        let jac0 = p.jacobian_at(&a.u0);
        qn_sweep_diag(
            &mut a,
            &c,
            QnVariant::QDelta,
            &jac0,
            &QnSettings::default(),
            &all_nodes(4),
            &mut LevelCounters::default(),
        )
        .unwrap();
        sdc_sweep_serial(
            &mut b,
            &c,
            &NewtonSettings::single(),
            &mut LevelCounters::default(),
        )
        .unwrap();
        for m in 0..4 {
            assert!((a.u[m][0] - b.u[m][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_problem_is_fixed_point() {
        let r = rule(4);
        let c = SweepContext {
            problem: &Zero,
            rule: &r,
            dt: 0.5,
            gmres: Default::default(),
        };
        let mut s = StepState::spread(LevelTag::Fine, &[3.0], 4);
        s.u[2] = vec![-7.0];
        let jac0 = Zero.jacobian_at(&s.u0);
        qn_sweep_diag(
            &mut s,
            &c,
            QnVariant::Q,
            &jac0,
            &QnSettings::default(),
            &all_nodes(4),
            &mut LevelCounters::default(),
        )
        .unwrap();
        assert!(s.u.iter().all(|v| (v[0] - 3.0).abs() < 1e-14));
    }

    fn ac_setup(n: usize) -> (AllenCahn<f64>, QuadratureRule<f64>) {
        let mesh = AllenCahn::default_mesh(n).unwrap();
        let p = AllenCahn::new(
            mesh,
            AllenCahnParams {
                reaction: AcReaction::Cubic,
                ..Default::default()
            },
        );
        (p, QuadratureRule::radau_right(4, QDeltaKind::Lu).unwrap())
    }

    #[test]
    fn node_grouping_does_not_change_the_result() {
        let (p, r) = ac_setup(16);
        let c = SweepContext {
            problem: &p,
            rule: &r,
            dt: 1e-3,
            gmres: Default::default(),
        };
        let u0 = p.initial_condition();
        let jac0 = p.jacobian_at(&u0);
        for variant in [QnVariant::Q, QnVariant::QDelta] {
            let mut serial = StepState::spread(LevelTag::Fine, &u0, 4);
            let mut grouped = serial.clone();
            let mut cs = LevelCounters::default();
            let mut cg = LevelCounters::default();
            let settings = QnSettings {
                n_qn: 2,
                guess: QnGuess::Warm,
            };
            qn_sweep_diag(
                &mut serial,
                &c,
                variant,
                &jac0,
                &settings,
                &all_nodes(4),
                &mut cs,
            )
            .unwrap();
            qn_sweep_diag(
                &mut grouped,
                &c,
                variant,
                &jac0,
                &settings,
                &[vec![0, 2], vec![1, 3]],
                &mut cg,
            )
            .unwrap();
            assert_eq!(serial.u, grouped.u);
            assert_eq!(cs.per_node_gmres, cg.per_node_gmres);
            assert_eq!(cg.node_gathers, 4);
        }
    }

    #[test]
    fn conjugate_shifts_give_conjugate_solutions() {
        let (p, r) = ac_setup(8);
        let u0 = p.initial_condition();
        let jac0 = p.jacobian_at(&u0);
        let lam = r
            .diag_q
            .lambda
            .iter()
            .copied()
            .find(|l| l.im > 0.0)
            .expect("complex pair");
        let data: Vec<Complex<f64>> = (0..64)
            .map(|k| Complex::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let conj_data: Vec<Complex<f64>> = data.iter().map(|z| z.conj()).collect();
        let g = Default::default();
        let (x, _) = solve_shifted(&jac0, lam, 1e-3, &data, 0, &g).unwrap();
        let (y, _) = solve_shifted(&jac0, lam.conj(), 1e-3, &conj_data, 1, &g).unwrap();
        let scale = x.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        for (a, b) in x.iter().zip(&y) {
            assert!((a.conj() - b).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn qn_iteration_converges_linearly_on_a_fixed_step() {
        let (p, r) = ac_setup(16);
        let c = SweepContext {
            problem: &p,
            rule: &r,
            dt: 1e-3,
            gmres: Default::default(),
        };
        let u0 = p.initial_condition();
        let jac0 = p.jacobian_at(&u0);
        let mut s = StepState::spread(LevelTag::Fine, &u0, 4);
        let mut norms = Vec::new();
        for _ in 0..6 {
            qn_sweep_diag(
                &mut s,
                &c,
                QnVariant::Q,
                &jac0,
                &QnSettings::default(),
                &all_nodes(4),
                &mut LevelCounters::default(),
            )
            .unwrap();
            norms.push(collocation_residual(&s, &c).unwrap().1);
        }
        let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.iter().all(|&q| q < 1.0), "{ratios:?}");
        let (lo, hi) = ratios[..4]
            .iter()
            .fold((f64::MAX, 0.0f64), |(lo, hi), &q| (lo.min(q), hi.max(q)));
        assert!(hi / lo < 10.0, "{ratios:?}");
    }

    #[test]
    fn bad_groups_are_rejected() {
        let r = rule(3);
        let p = Dahlquist::real(-1.0);
        let c = ctx(&p, &r, 0.1);
        let mut s = StepState::spread(LevelTag::Fine, &[1.0], 3);
        let jac0 = p.jacobian_at(&s.u0);
        let out = qn_sweep_diag(
            &mut s,
            &c,
            QnVariant::Q,
            &jac0,
            &QnSettings::default(),
            &[vec![0, 1], vec![1, 2]],
            &mut LevelCounters::default(),
        );
        assert!(matches!(out, Err(SweepError::Shape(_))));
    }
}
