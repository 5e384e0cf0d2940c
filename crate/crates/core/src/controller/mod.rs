//! Two-level PFASST outer iteration and its single-level / serial variants.
//!
//! One outer iteration of step `l` in a block:
//!
//! 1. restrict `ũᵏ = R uᵏ` and form the FAS correction `τᵏ`;
//! 2. coarse sweep from `ũ_{l,0}^{k+1}`, the left neighbour's new coarse end value;
//! 3. coarse-grid correction `u^{k+½} = uᵏ + T(ũ^{k+1} − R uᵏ)`;
//! 4. fine sweep from the left neighbour's previous-stage fine end value;
//! 5. receive the left neighbour's new fine end value and measure the fine
//!    collocation residual with it.
//!
//! Steps 2 and 5 are the only cross-step couplings. The threaded schedule
//! lives in [`crate::exec`]; [`run_block_reference`] is the plain loop.

mod stats;

pub use stats::{MessageCounters, RunStats, StepStats};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, ExecError, WorkerGrid};
use crate::linsolve::GmresSettings;
use crate::problems::Problem;
use crate::quadrature::QuadratureRule;
use crate::scalar::Real;
use crate::spatial::Transfer;
use crate::sweeps::{
    collocation_residual, qn_sweep_diag, sdc_sweep_serial, LevelCounters, LevelTag, NewtonSettings,
    QnSettings, QnVariant, StepState, SweepContext, SweepError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step {step}, {level:?} level: {source}")]
    Sweep {
        step: usize,
        level: LevelTag,
        source: SweepError,
    },
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "sl-sdc")]
    SlSdc,
    #[serde(rename = "mlsdc")]
    Mlsdc,
    #[serde(rename = "pfasst")]
    Pfasst,
    #[serde(rename = "pfasst-er-qdelta")]
    PfasstErQdelta,
    #[serde(rename = "pfasst-er-q")]
    PfasstErQ,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::SlSdc,
        Mode::Mlsdc,
        Mode::Pfasst,
        Mode::PfasstErQdelta,
        Mode::PfasstErQ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::SlSdc => "sl-sdc",
            Mode::Mlsdc => "mlsdc",
            Mode::Pfasst => "pfasst",
            Mode::PfasstErQdelta => "pfasst-er-qdelta",
            Mode::PfasstErQ => "pfasst-er-q",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_multilevel(self) -> bool {
        self != Mode::SlSdc
    }

    /// Serial modes run one step at a time.
    pub fn is_serial_in_time(self) -> bool {
        matches!(self, Mode::SlSdc | Mode::Mlsdc)
    }

    /// `Some` for the diagonalized Quasi-Newton sweeps.
    pub fn qn_variant(self) -> Option<QnVariant> {
        match self {
            Mode::PfasstErQdelta => Some(QnVariant::QDelta),
            Mode::PfasstErQ => Some(QnVariant::Q),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Discretization of one level.
#[derive(Debug, Clone)]
pub struct Level<T: Real, P> {
    pub problem: P,
    pub rule: QuadratureRule<T>,
}

/// Fine and (optional) coarse level with node-wise transfers between them.
pub struct LevelHierarchy<T: Real, P> {
    pub fine: Level<T, P>,
    pub coarse: Option<Level<T, P>>,
    pub transfer: Box<dyn Transfer<T>>,
}

impl<T: Real, P: Problem<T>> LevelHierarchy<T, P> {
    pub fn new(
        fine: Level<T, P>,
        coarse: Option<Level<T, P>>,
        transfer: Box<dyn Transfer<T>>,
    ) -> Result<Self, ControllerError> {
        if let Some(c) = &coarse {
            if c.rule.num_nodes() != fine.rule.num_nodes() {
                return Err(ControllerError::InvalidArgument(
                    "coarse and fine levels must use the same number of nodes".into(),
                ));
            }
            if transfer.fine_dim() != fine.problem.dim() || transfer.coarse_dim() != c.problem.dim()
            {
                return Err(ControllerError::InvalidArgument(
                    "transfer dimensions do not match the level problems".into(),
                ));
            }
        }
        Ok(Self {
            fine,
            coarse,
            transfer,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.fine.rule.num_nodes()
    }

    pub fn restrict(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.transfer.coarse_dim()];
        self.transfer.restrict(u, &mut out);
        out
    }

    pub fn interpolate(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.transfer.fine_dim()];
        self.transfer.interpolate(u, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings<T> {
    pub mode: Mode,
    pub dt: T,
    pub l_total: usize,
    /// Steps iterated together; serial-in-time modes always use 1.
    pub block_steps: usize,
    /// Absolute ∞-norm tolerance on the fine collocation residual.
    pub tol: T,
    pub max_outer: usize,
    /// Freeze converged steps whose left neighbour is frozen.
    pub locking: bool,
    pub newton: NewtonSettings<T>,
    pub qn: QnSettings,
    pub gmres: GmresSettings<T>,
    /// Progress timeout of the threaded executor.
    pub timeout: Duration,
}

impl<T: Real> ControllerSettings<T> {
    pub fn new(mode: Mode, dt: T, l_total: usize) -> Self {
        Self {
            mode,
            dt,
            l_total,
            block_steps: l_total,
            tol: T::lit(1e-10),
            max_outer: 100,
            locking: true,
            newton: NewtonSettings::single(),
            qn: QnSettings::default(),
            gmres: GmresSettings::default(),
            timeout: Duration::from_secs(600),
        }
    }

    pub fn effective_block(&self) -> usize {
        if self.mode.is_serial_in_time() {
            1
        } else {
            self.block_steps
        }
    }
}

/// Everything a step operation needs besides the step itself.
pub struct IterationContext<'a, T: Real, P> {
    pub hierarchy: &'a LevelHierarchy<T, P>,
    pub settings: &'a ControllerSettings<T>,
    /// Node groups of the diagonalized sweeps.
    pub groups: &'a [Vec<usize>],
}

impl<'a, T: Real, P: Problem<T>> IterationContext<'a, T, P> {
    /// Coarse sweeps and corrections take part in the iteration.
    pub fn multilevel(&self) -> bool {
        self.settings.mode.is_multilevel() && self.hierarchy.coarse.is_some()
    }

    fn sweep_ctx(&self, level: LevelTag) -> SweepContext<'a, T, P> {
        let l = match level {
            LevelTag::Fine => &self.hierarchy.fine,
            LevelTag::Coarse => self
                .hierarchy
                .coarse
                .as_ref()
                .expect("coarse level present"),
        };
        SweepContext {
            problem: &l.problem,
            rule: &l.rule,
            dt: self.settings.dt,
            gmres: self.settings.gmres,
        }
    }
}

/// Jacobian snapshot keyed by the state it was taken at.
struct JacobianCache<T, J> {
    at: Vec<T>,
    jac: J,
}

/// All data of one time step on both levels.
pub struct StepSlot<T: Real, P: Problem<T>> {
    /// Global step index.
    pub index: usize,
    pub fine: StepState<T>,
    pub coarse: Option<StepState<T>>,
    /// `R uᵏ` from the most recent coarse sweep, kept for the correction.
    pub restricted: Vec<Vec<T>>,
    pub frozen: bool,
    pub iterations: usize,
    pub residual: T,
    pub residual_history: Vec<T>,
    pub fine_counters: LevelCounters,
    pub coarse_counters: LevelCounters,
    fine_jac: Option<JacobianCache<T, P::Jacobian>>,
    coarse_jac: Option<JacobianCache<T, P::Jacobian>>,
}

impl<T: Real, P: Problem<T>> StepSlot<T, P> {
    /// Initial guess: `u0` at every node on both levels, `τ = 0`.
    pub fn spread(index: usize, u0: &[T], hierarchy: &LevelHierarchy<T, P>) -> Self {
        let m = hierarchy.num_nodes();
        let coarse = hierarchy
            .coarse
            .as_ref()
            .map(|_| StepState::spread(LevelTag::Coarse, &hierarchy.restrict(u0), m));
        Self {
            index,
            fine: StepState::spread(LevelTag::Fine, u0, m),
            coarse,
            restricted: Vec::new(),
            frozen: false,
            iterations: 0,
            residual: T::infinity(),
            residual_history: Vec::new(),
            fine_counters: LevelCounters::default(),
            coarse_counters: LevelCounters::default(),
            fine_jac: None,
            coarse_jac: None,
        }
    }
}

fn sweep_level<T: Real, P: Problem<T>>(
    state: &mut StepState<T>,
    jac_cache: &mut Option<JacobianCache<T, P::Jacobian>>,
    counters: &mut LevelCounters,
    step: usize,
    ctx: &IterationContext<'_, T, P>,
) -> Result<(), ControllerError> {
    let level = state.level;
    let sctx = ctx.sweep_ctx(level);
    let lift = |source| ControllerError::Sweep {
        step,
        level,
        source,
    };
    match ctx.settings.mode.qn_variant() {
        None => sdc_sweep_serial(state, &sctx, &ctx.settings.newton, counters).map_err(lift),
        Some(variant) => {
            let stale = jac_cache.as_ref().is_none_or(|c| c.at != state.u0);
            if stale {
                *jac_cache = Some(JacobianCache {
                    at: state.u0.clone(),
                    jac: sctx.problem.jacobian_at(&state.u0),
                });
            }
            let jac = &jac_cache.as_ref().expect("cache filled").jac;
            qn_sweep_diag(
                state,
                &sctx,
                variant,
                jac,
                &ctx.settings.qn,
                ctx.groups,
                counters,
            )
            .map_err(lift)
        }
    }
}

/// `τ_m = Δt Σ_j Q[m,j] (R f(u_j) − f̃(R u_j))`.
///
/// The `u` and `u₀` parts of the two collocation operators cancel because
/// the coarse problem receives `R u` and `R u₀`.
pub fn fas_correction<T: Real, P: Problem<T>>(
    fine: &StepState<T>,
    hierarchy: &LevelHierarchy<T, P>,
    dt: T,
) -> Result<Vec<Vec<T>>, ControllerError> {
    let restricted: Vec<Vec<T>> = fine.u.iter().map(|v| hierarchy.restrict(v)).collect();
    fas_from_restricted(fine, &restricted, hierarchy, dt)
}

fn fas_from_restricted<T: Real, P: Problem<T>>(
    fine: &StepState<T>,
    restricted: &[Vec<T>],
    hierarchy: &LevelHierarchy<T, P>,
    dt: T,
) -> Result<Vec<Vec<T>>, ControllerError> {
    let coarse = hierarchy.coarse.as_ref().ok_or_else(|| {
        ControllerError::InvalidArgument("FAS correction needs a coarse level".into())
    })?;
    let m = fine.num_nodes();
    let nc = coarse.problem.dim();
    let mut diff = Vec::with_capacity(m);
    let mut ff = vec![T::zero(); fine.u0.len()];
    let mut fc = vec![T::zero(); nc];
    for (u, ru) in fine.u.iter().zip(restricted) {
        hierarchy.fine.problem.eval_f(u, &mut ff);
        let rf = hierarchy.restrict(&ff);
        coarse.problem.eval_f(ru, &mut fc);
        diff.push(rf.iter().zip(&fc).map(|(&a, &b)| a - b).collect::<Vec<T>>());
    }
    let q = &coarse.rule.q;
    Ok((0..m)
        .map(|row| {
            let mut t = vec![T::zero(); nc];
            for (j, dj) in diff.iter().enumerate() {
                let w = dt * q.get(row, j);
                for (ti, &di) in t.iter_mut().zip(dj) {
                    *ti += w * di;
                }
            }
            t
        })
        .collect())
}

/// Restriction, FAS correction and coarse sweep from the received value
/// `ũ_{l,0}^{k+1}`; returns the new coarse end value to forward.
pub fn coarse_sweep_step<T: Real, P: Problem<T>>(
    slot: &mut StepSlot<T, P>,
    received: &[T],
    ctx: &IterationContext<'_, T, P>,
) -> Result<Vec<T>, ControllerError> {
    let h = ctx.hierarchy;
    let restricted: Vec<Vec<T>> = slot.fine.u.iter().map(|v| h.restrict(v)).collect();
    let tau = fas_from_restricted(&slot.fine, &restricted, h, ctx.settings.dt)?;
    let coarse = slot.coarse.as_mut().ok_or_else(|| {
        ControllerError::InvalidArgument("coarse sweep needs a coarse level".into())
    })?;
    coarse.u = restricted.clone();
    coarse.tau = Some(tau);
    coarse.u0 = received.to_vec();
    slot.restricted = restricted;
    sweep_level(
        coarse,
        &mut slot.coarse_jac,
        &mut slot.coarse_counters,
        slot.index,
        ctx,
    )?;
    Ok(coarse.last().to_vec())
}

/// `u^{k+½}_m = uᵏ_m + T(ũ^{k+1}_m − R uᵏ_m)` at every node.
pub fn cgc_update<T: Real, P: Problem<T>>(
    fine: &mut StepState<T>,
    coarse_after: &StepState<T>,
    restricted_before: &[Vec<T>],
    hierarchy: &LevelHierarchy<T, P>,
) {
    for ((u, new), old) in fine
        .u
        .iter_mut()
        .zip(&coarse_after.u)
        .zip(restricted_before)
    {
        let inc: Vec<T> = new.iter().zip(old).map(|(&a, &b)| a - b).collect();
        for (ui, ti) in u.iter_mut().zip(hierarchy.interpolate(&inc)) {
            *ui += ti;
        }
    }
}

/// Coarse-grid correction (including the initial value when the left
/// neighbour is still iterating) followed by the fine sweep; returns the
/// fine end value to forward.
pub fn fine_sweep_step<T: Real, P: Problem<T>>(
    slot: &mut StepSlot<T, P>,
    left_active: bool,
    ctx: &IterationContext<'_, T, P>,
) -> Result<Vec<T>, ControllerError> {
    let h = ctx.hierarchy;
    if let Some(coarse) = slot.coarse.as_ref().filter(|_| ctx.multilevel()) {
        cgc_update(&mut slot.fine, coarse, &slot.restricted, h);
        if left_active {
            // the stored u0 is uᵏ_{l−1,M}, so this reproduces u^{k+½}_{l−1,M}
            let r0 = h.restrict(&slot.fine.u0);
            let inc: Vec<T> = coarse.u0.iter().zip(&r0).map(|(&a, &b)| a - b).collect();
            for (u, t) in slot.fine.u0.iter_mut().zip(h.interpolate(&inc)) {
                *u += t;
            }
        }
    }
    sweep_level(
        &mut slot.fine,
        &mut slot.fine_jac,
        &mut slot.fine_counters,
        slot.index,
        ctx,
    )?;
    Ok(slot.fine.last().to_vec())
}

/// Installs the freshly received fine initial value and records the fine
/// collocation residual of the step.
pub fn finish_iteration<T: Real, P: Problem<T>>(
    slot: &mut StepSlot<T, P>,
    received: Option<Vec<T>>,
    ctx: &IterationContext<'_, T, P>,
) -> Result<T, ControllerError> {
    if let Some(u0) = received {
        slot.fine.u0 = u0;
    }
    let sctx = ctx.sweep_ctx(LevelTag::Fine);
    let (_, norm) =
        collocation_residual(&slot.fine, &sctx).map_err(|source| ControllerError::Sweep {
            step: slot.index,
            level: LevelTag::Fine,
            source,
        })?;
    slot.iterations += 1;
    slot.residual = norm;
    slot.residual_history.push(norm);
    Ok(norm)
}

/// Freezing rule: converged and the left neighbour frozen.
pub(crate) fn update_frozen<T: Real>(frozen: &mut [bool], residuals: &[T], tol: T, locking: bool) {
    if !locking {
        return;
    }
    for l in 0..frozen.len() {
        let left = l == 0 || frozen[l - 1];
        if !frozen[l] && left && residuals[l] <= tol {
            frozen[l] = true;
        }
    }
}

/// The steps of one block after the outer iteration stopped.
pub struct CompositeState<T: Real, P: Problem<T>> {
    pub slots: Vec<StepSlot<T, P>>,
    pub iterations: usize,
    pub converged: bool,
    /// Max residual over the block after every iteration.
    pub residual_history: Vec<T>,
    pub messages: MessageCounters,
}

/// Sequential execution of one block: the schedule every executor must reproduce.
pub fn run_block_reference<T: Real, P: Problem<T>>(
    mut slots: Vec<StepSlot<T, P>>,
    block_u0: &[T],
    ctx: &IterationContext<'_, T, P>,
) -> Result<CompositeState<T, P>, ControllerError> {
    let n = slots.len();
    let settings = ctx.settings;
    let multilevel = ctx.multilevel();
    let coarse_first = if multilevel {
        ctx.hierarchy.restrict(block_u0)
    } else {
        Vec::new()
    };
    let mut coarse_in: Vec<Vec<T>> = vec![Vec::new(); n];
    let mut frozen = vec![false; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_outer {
        if multilevel {
            for l in 0..n {
                if frozen[l] {
                    continue;
                }
                let received = if l == 0 {
                    coarse_first.clone()
                } else {
                    coarse_in[l].clone()
                };
                let out = coarse_sweep_step(&mut slots[l], &received, ctx)?;
                if l + 1 < n {
                    coarse_in[l + 1] = out;
                }
            }
        }
        let mut fine_out: Vec<Option<Vec<T>>> = vec![None; n];
        for l in 0..n {
            if frozen[l] {
                continue;
            }
            let left_active = l > 0 && !frozen[l - 1];
            fine_out[l] = Some(fine_sweep_step(&mut slots[l], left_active, ctx)?);
        }
        for l in 0..n {
            if frozen[l] {
                continue;
            }
            let received = if l > 0 && !frozen[l - 1] {
                fine_out[l - 1].clone()
            } else {
                None
            };
            finish_iteration(&mut slots[l], received, ctx)?;
        }
        iterations += 1;
        let residuals: Vec<T> = slots.iter().map(|s| s.residual).collect();
        history.push(residuals.iter().copied().fold(T::zero(), T::max));
        converged = residuals.iter().all(|&r| r <= settings.tol);
        update_frozen(&mut frozen, &residuals, settings.tol, settings.locking);
        for (s, &f) in slots.iter_mut().zip(&frozen) {
            s.frozen = f;
        }
        if converged {
            break;
        }
    }
    let mut messages = MessageCounters::default();
    for s in &slots {
        messages.node_gathers += s.fine_counters.node_gathers + s.coarse_counters.node_gathers;
    }
    Ok(CompositeState {
        slots,
        iterations,
        converged,
        residual_history: history,
        messages,
    })
}

/// Result of [`run`].
pub struct RunOutcome<T> {
    /// Fine solution at the final time.
    pub final_value: Vec<T>,
    /// Fine node values of every step, `nodes[l][m]`.
    pub nodes: Vec<Vec<Vec<T>>>,
    pub stats: RunStats,
}

fn invalid(msg: impl Into<String>) -> ControllerError {
    ControllerError::InvalidArgument(msg.into())
}

pub fn validate<T: Real, P: Problem<T>>(
    hierarchy: &LevelHierarchy<T, P>,
    settings: &ControllerSettings<T>,
    grid: &WorkerGrid,
) -> Result<(), ControllerError> {
    let m = hierarchy.num_nodes();
    if settings.l_total == 0 {
        return Err(invalid("l_total must be positive"));
    }
    if !(settings.dt > T::zero()) {
        return Err(invalid("dt must be positive"));
    }
    if settings.mode.is_multilevel() && hierarchy.coarse.is_none() {
        return Err(invalid(format!(
            "mode {} needs a coarse level",
            settings.mode
        )));
    }
    if settings.max_outer == 0 {
        return Err(invalid("max_outer must be positive"));
    }
    if grid.node_group.len() != m {
        return Err(invalid(format!(
            "worker grid maps {} nodes, rule has {m}",
            grid.node_group.len()
        )));
    }
    if grid.p_nodes == 0 || grid.p_nodes > m {
        return Err(invalid(format!(
            "p_nodes = {} must lie in 1..={m}",
            grid.p_nodes
        )));
    }
    if grid.p_nodes > 1 && settings.mode.qn_variant().is_none() {
        return Err(invalid(format!(
            "mode {} has no node-parallel sweep; p_nodes must be 1",
            settings.mode
        )));
    }
    let block = settings.effective_block();
    if block == 0 {
        return Err(invalid("block_steps must be positive"));
    }
    if grid.p_steps == 0 || grid.p_steps > block {
        return Err(invalid(format!(
            "p_steps = {} must lie in 1..={block} (steps per block)",
            grid.p_steps
        )));
    }
    Ok(())
}

/// Runs `l_total` steps as consecutive blocks, each iterated to tolerance.
pub fn run<T: Real, P: Problem<T>>(
    hierarchy: &LevelHierarchy<T, P>,
    settings: &ControllerSettings<T>,
    grid: &WorkerGrid,
) -> Result<RunOutcome<T>, ControllerError> {
    validate(hierarchy, settings, grid)?;
    let groups = grid.groups();
    let ctx = IterationContext {
        hierarchy,
        settings,
        groups: &groups,
    };
    let mut u0 = hierarchy.fine.problem.initial_condition();
    let mut stats = RunStats::new(
        settings.mode,
        grid.p_steps,
        grid.p_nodes,
        settings.effective_block(),
    );
    let mut nodes = Vec::with_capacity(settings.l_total);
    let block = settings.effective_block();
    let mut start = 0;
    while start < settings.l_total {
        let len = block.min(settings.l_total - start);
        let slots: Vec<StepSlot<T, P>> = (start..start + len)
            .map(|l| StepSlot::spread(l, &u0, hierarchy))
            .collect();
        let workers = grid.p_steps.min(len);
        let outcome = exec::execute(slots, &u0, &ctx, workers)?;
        stats.record_block(&outcome);
        u0 = outcome
            .slots
            .last()
            .expect("non-empty block")
            .fine
            .last()
            .to_vec();
        nodes.extend(outcome.slots.into_iter().map(|s| s.fine.u));
        start += len;
    }
    stats.finalize();
    Ok(RunOutcome {
        final_value: u0,
        nodes,
        stats,
    })
}
