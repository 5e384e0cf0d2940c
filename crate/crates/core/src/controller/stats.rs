use serde::{Deserialize, Serialize};

use crate::controller::{CompositeState, Mode};
use crate::problems::Problem;
use crate::scalar::Real;
use crate::sweeps::LevelCounters;

/// Communication volume of a run.
///
/// Forwards count only transfers that cross a worker boundary; steps owned by
/// the same worker hand values over in memory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounters {
    pub coarse_forwards: usize,
    pub fine_forwards: usize,
    pub node_gathers: usize,
    /// Converged flags reported to the coordinator (one per active step and iteration).
    pub converged_flags: usize,
}

impl MessageCounters {
    /// Data messages: forwards plus node gathers.
    pub fn total(&self) -> usize {
        self.coarse_forwards + self.fine_forwards + self.node_gathers
    }

    pub fn merge(&mut self, other: &Self) {
        self.coarse_forwards += other.coarse_forwards;
        self.fine_forwards += other.fine_forwards;
        self.node_gathers += other.node_gathers;
        self.converged_flags += other.converged_flags;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub iterations: usize,
    pub fine: LevelCounters,
    pub coarse: LevelCounters,
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub mode: Mode,
    pub p_steps: usize,
    pub p_nodes: usize,
    pub block_steps: usize,
    /// Sum over blocks of the outer iterations each block needed.
    pub outer_iters: usize,
    pub block_iters: Vec<usize>,
    pub linear_solves_total: usize,
    pub gmres_iters_total: usize,
    /// Fine-level GMRES iterations per node (or eigenvalue index), summed over steps.
    pub per_node_gmres: Vec<usize>,
    pub messages: MessageCounters,
    pub converged: bool,
    /// Max fine residual over the block after each outer iteration, blocks concatenated.
    pub residual_history: Vec<f64>,
    pub steps: Vec<StepStats>,
}

impl RunStats {
    pub(crate) fn new(mode: Mode, p_steps: usize, p_nodes: usize, block_steps: usize) -> Self {
        Self {
            mode,
            p_steps,
            p_nodes,
            block_steps,
            outer_iters: 0,
            block_iters: Vec::new(),
            linear_solves_total: 0,
            gmres_iters_total: 0,
            per_node_gmres: Vec::new(),
            messages: MessageCounters::default(),
            converged: true,
            residual_history: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub(crate) fn record_block<T: Real, P: Problem<T>>(&mut self, block: &CompositeState<T, P>) {
        self.outer_iters += block.iterations;
        self.block_iters.push(block.iterations);
        self.converged &= block.converged;
        self.messages.merge(&block.messages);
        self.residual_history
            .extend(block.residual_history.iter().map(|r| r.to_f64_lossy()));
        for s in &block.slots {
            self.steps.push(StepStats {
                step: s.index,
                iterations: s.iterations,
                fine: s.fine_counters.clone(),
                coarse: s.coarse_counters.clone(),
                residual_history: s
                    .residual_history
                    .iter()
                    .map(|r| r.to_f64_lossy())
                    .collect(),
                final_residual: s.residual.to_f64_lossy(),
            });
        }
    }

    pub(crate) fn finalize(&mut self) {
        let mut fine = LevelCounters::default();
        let mut coarse = LevelCounters::default();
        for s in &self.steps {
            fine.merge(&s.fine);
            coarse.merge(&s.coarse);
        }
        self.linear_solves_total = fine.linear_solves + coarse.linear_solves;
        self.gmres_iters_total = fine.gmres_iters + coarse.gmres_iters;
        self.per_node_gmres = fine.per_node_gmres;
    }

    /// Work counters of one level summed over all steps.
    pub fn level_totals(&self, coarse: bool) -> LevelCounters {
        let mut total = LevelCounters::default();
        for s in &self.steps {
            total.merge(if coarse { &s.coarse } else { &s.fine });
        }
        total
    }
}
