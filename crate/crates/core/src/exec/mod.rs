//! Threaded execution of one block on a `P_steps × P_nodes` worker grid.
//!
//! Each step-worker thread owns a contiguous range of steps and talks to its
//! right neighbour through one FIFO channel carrying iteration-tagged
//! forwards. Because every worker emits its coarse and fine forwards in the
//! same order the neighbour consumes them, a single channel per link keeps
//! the schedule deterministic. Converged flags go to a coordinator, which
//! runs in the calling thread and broadcasts freeze/stop decisions.
//!
//! Node groups (`P_nodes > 1`) are spawned per diagonalized sweep inside
//! [`crate::sweeps::qn_sweep_diag`]; this module only owns their mapping.

use std::ops::Range;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;

use thiserror::Error;

use crate::controller::{
    coarse_sweep_step, fine_sweep_step, finish_iteration, update_frozen, CompositeState,
    ControllerError, ControllerSettings, IterationContext, MessageCounters, StepSlot,
};
use crate::problems::Problem;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("{who} made no progress waiting for {waiting_for}; pending: {pending:?}")]
    Deadlock {
        who: String,
        waiting_for: String,
        pending: Vec<String>,
    },
    #[error("{who}: peer disconnected while waiting for {waiting_for}")]
    Disconnected { who: String, waiting_for: String },
    #[error("{who}: expected {expected}, received {found}")]
    Protocol {
        who: String,
        expected: String,
        found: String,
    },
}

/// Assignment of time steps and collocation nodes to workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerGrid {
    pub p_steps: usize,
    pub p_nodes: usize,
    /// Node group of every eigen-index.
    pub node_group: Vec<usize>,
}

impl WorkerGrid {
    pub fn new(p_steps: usize, p_nodes: usize, m: usize) -> Result<Self, ExecError> {
        if p_steps == 0 {
            return Err(ExecError::InvalidLayout("p_steps must be positive".into()));
        }
        Ok(Self {
            p_steps,
            p_nodes,
            node_group: map_nodes_to_groups(m, p_nodes)?,
        })
    }

    pub fn serial(m: usize) -> Self {
        Self::new(1, 1, m).expect("a single worker is always valid")
    }

    /// Eigen-indices of every node group.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.p_nodes];
        for (m, &w) in self.node_group.iter().enumerate() {
            g[w].push(m);
        }
        g
    }
}

/// Round-robin `m ↦ m mod p_nodes`.
pub fn map_nodes_to_groups(m: usize, p_nodes: usize) -> Result<Vec<usize>, ExecError> {
    if p_nodes == 0 || p_nodes > m {
        return Err(ExecError::InvalidLayout(format!(
            "p_nodes = {p_nodes} must lie in 1..={m}"
        )));
    }
    Ok((0..m).map(|i| i % p_nodes).collect())
}

/// Contiguous step range of every worker.
pub fn step_ranges(steps: usize, workers: usize) -> Vec<Range<usize>> {
    (0..workers)
        .map(|w| w * steps / workers..(w + 1) * steps / workers)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message<T> {
    CoarseForward {
        iteration: usize,
        source: usize,
        target: usize,
        payload: Vec<T>,
    },
    FineForward {
        iteration: usize,
        source: usize,
        target: usize,
        payload: Vec<T>,
    },
    ConvergedFlag {
        iteration: usize,
        step: usize,
        converged: bool,
        residual: T,
    },
}

impl<T> Message<T> {
    fn describe(&self) -> String {
        match self {
            Message::CoarseForward {
                iteration,
                source,
                target,
                ..
            } => format!("coarse forward {source}→{target} (iteration {iteration})"),
            Message::FineForward {
                iteration,
                source,
                target,
                ..
            } => format!("fine forward {source}→{target} (iteration {iteration})"),
            Message::ConvergedFlag {
                iteration, step, ..
            } => {
                format!("converged flag of step {step} (iteration {iteration})")
            }
        }
    }
}

enum Report<T> {
    Iteration {
        worker: usize,
        iteration: usize,
        flags: Vec<Message<T>>,
        forwards: MessageCounters,
    },
    Failed(ControllerError),
}

#[derive(Debug, Clone)]
struct Decision {
    iteration: usize,
    frozen: Vec<bool>,
    stop: bool,
}

struct Worker<'a, 'c, T: Real, P> {
    id: usize,
    range: Range<usize>,
    block_len: usize,
    coarse_first: &'a [T],
    ctx: &'a IterationContext<'c, T, P>,
    inbox: Option<Receiver<Message<T>>>,
    outbox: Option<Sender<Message<T>>>,
    reports: Sender<Report<T>>,
    decisions: Receiver<Decision>,
}

impl<T: Real, P: Problem<T>> Worker<'_, '_, T, P> {
    fn who(&self) -> String {
        format!("worker {}", self.id)
    }

    fn receive_forward(
        &self,
        fine: bool,
        iteration: usize,
        target: usize,
    ) -> Result<Vec<T>, ExecError> {
        let kind = if fine { "fine" } else { "coarse" };
        let waiting_for = format!("{kind} forward to step {target} (iteration {iteration})");
        let inbox = self.inbox.as_ref().ok_or_else(|| ExecError::Protocol {
            who: self.who(),
            expected: waiting_for.clone(),
            found: "no left neighbour".into(),
        })?;
        let msg = match inbox.recv_timeout(self.ctx.settings.timeout) {
            Ok(m) => m,
            Err(RecvTimeoutError::Timeout) => {
                return Err(ExecError::Deadlock {
                    who: self.who(),
                    waiting_for,
                    pending: self
                        .decisions
                        .try_iter()
                        .map(|d| format!("{d:?}"))
                        .collect(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ExecError::Disconnected {
                    who: self.who(),
                    waiting_for,
                })
            }
        };
        match msg {
            Message::CoarseForward {
                iteration: i,
                target: t,
                payload,
                ..
            } if !fine && i == iteration && t == target => Ok(payload),
            Message::FineForward {
                iteration: i,
                target: t,
                payload,
                ..
            } if fine && i == iteration && t == target => Ok(payload),
            other => Err(ExecError::Protocol {
                who: self.who(),
                expected: waiting_for,
                found: other.describe(),
            }),
        }
    }

    fn send_forward(&self, msg: Message<T>) -> Result<(), ExecError> {
        let outbox = self.outbox.as_ref().expect("right neighbour exists");
        let what = msg.describe();
        outbox.send(msg).map_err(|_| ExecError::Disconnected {
            who: self.who(),
            waiting_for: format!("delivery of {what}"),
        })
    }

    fn run(&self, slots: &mut [StepSlot<T, P>]) -> Result<(), ControllerError> {
        let ctx = self.ctx;
        let multilevel = ctx.multilevel();
        let lo = self.range.start;
        let local = slots.len();
        let mut frozen = vec![false; self.block_len];
        // coarse value handed to each local step, kept while the left neighbour is frozen
        let mut coarse_in: Vec<Option<Vec<T>>> = vec![None; local];
        let mut iteration = 0;
        loop {
            let mut forwards = MessageCounters::default();
            if multilevel {
                for i in 0..local {
                    let l = lo + i;
                    if frozen[l] {
                        continue;
                    }
                    let received = if l == 0 {
                        self.coarse_first.to_vec()
                    } else if i == 0 && !frozen[l - 1] {
                        let v = self.receive_forward(false, iteration, l)?;
                        coarse_in[0] = Some(v.clone());
                        v
                    } else {
                        coarse_in[i].clone().expect("coarse value from the left")
                    };
                    let out = coarse_sweep_step(&mut slots[i], &received, ctx)?;
                    if i + 1 < local {
                        coarse_in[i + 1] = Some(out);
                    } else if l + 1 < self.block_len {
                        self.send_forward(Message::CoarseForward {
                            iteration,
                            source: l,
                            target: l + 1,
                            payload: out,
                        })?;
                        forwards.coarse_forwards += 1;
                    }
                }
            }
            let mut fine_out: Vec<Option<Vec<T>>> = vec![None; local];
            for i in 0..local {
                let l = lo + i;
                if frozen[l] {
                    continue;
                }
                let left_active = l > 0 && !frozen[l - 1];
                let out = fine_sweep_step(&mut slots[i], left_active, ctx)?;
                if i + 1 < local {
                    fine_out[i] = Some(out);
                } else if l + 1 < self.block_len {
                    self.send_forward(Message::FineForward {
                        iteration,
                        source: l,
                        target: l + 1,
                        payload: out,
                    })?;
                    forwards.fine_forwards += 1;
                }
            }
            let mut flags = Vec::new();
            for i in 0..local {
                let l = lo + i;
                if frozen[l] {
                    continue;
                }
                let received = if l > 0 && !frozen[l - 1] {
                    Some(if i == 0 {
                        self.receive_forward(true, iteration, l)?
                    } else {
                        fine_out[i - 1].take().expect("fine value from the left")
                    })
                } else {
                    None
                };
                let residual = finish_iteration(&mut slots[i], received, ctx)?;
                flags.push(Message::ConvergedFlag {
                    iteration,
                    step: l,
                    converged: residual <= ctx.settings.tol,
                    residual,
                });
            }
            self.reports
                .send(Report::Iteration {
                    worker: self.id,
                    iteration,
                    flags,
                    forwards,
                })
                .map_err(|_| ExecError::Disconnected {
                    who: self.who(),
                    waiting_for: "coordinator".into(),
                })?;
            let decision = match self.decisions.recv_timeout(ctx.settings.timeout) {
                Ok(d) => d,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(ExecError::Deadlock {
                        who: self.who(),
                        waiting_for: format!("decision for iteration {iteration}"),
                        pending: self
                            .inbox
                            .iter()
                            .flat_map(|r| r.try_iter())
                            .map(|m| m.describe())
                            .collect(),
                    }
                    .into())
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ExecError::Disconnected {
                        who: self.who(),
                        waiting_for: format!("decision for iteration {iteration}"),
                    }
                    .into())
                }
            };
            if decision.iteration != iteration {
                return Err(ExecError::Protocol {
                    who: self.who(),
                    expected: format!("decision for iteration {iteration}"),
                    found: format!("decision for iteration {}", decision.iteration),
                }
                .into());
            }
            frozen = decision.frozen;
            for (s, &f) in slots.iter_mut().zip(&frozen[lo..]) {
                s.frozen = f;
            }
            if decision.stop {
                return Ok(());
            }
            iteration += 1;
        }
    }
}

/// Outgoing and incoming channel ends of one step-worker.
type Link<T> = (Option<Sender<Message<T>>>, Option<Receiver<Message<T>>>);

/// Runs the outer iteration of one block on `workers` step-workers.
///
/// Produces bitwise the same iterates as
/// [`crate::controller::run_block_reference`] for any worker count.
pub fn execute<T: Real, P: Problem<T>>(
    mut slots: Vec<StepSlot<T, P>>,
    block_u0: &[T],
    ctx: &IterationContext<'_, T, P>,
    workers: usize,
) -> Result<CompositeState<T, P>, ControllerError> {
    let n = slots.len();
    if workers == 0 || workers > n {
        return Err(ExecError::InvalidLayout(format!("{workers} workers for {n} steps")).into());
    }
    let settings = ctx.settings;
    if settings.max_outer == 0 {
        return Err(ExecError::InvalidLayout("max_outer must be positive".into()).into());
    }
    let coarse_first = if ctx.multilevel() {
        ctx.hierarchy.restrict(block_u0)
    } else {
        Vec::new()
    };
    let ranges = step_ranges(n, workers);
    let mut chunks = Vec::with_capacity(workers);
    for r in ranges.iter().rev() {
        chunks.push(slots.split_off(r.start));
    }
    chunks.reverse();

    let mut links: Vec<Link<T>> = (0..workers).map(|_| (None, None)).collect();
    for w in 1..workers {
        let (tx, rx) = mpsc::channel();
        links[w - 1].0 = Some(tx);
        links[w].1 = Some(rx);
    }
    let (report_tx, report_rx) = mpsc::channel::<Report<T>>();

    thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        let mut decision_txs = Vec::with_capacity(workers);
        for (id, ((chunk, range), (outbox, inbox))) in chunks
            .into_iter()
            .zip(ranges.iter().cloned())
            .zip(links)
            .enumerate()
        {
            let (dtx, drx) = mpsc::channel();
            decision_txs.push(dtx);
            let worker = Worker {
                id,
                range,
                block_len: n,
                coarse_first: &coarse_first,
                ctx,
                inbox,
                outbox,
                reports: report_tx.clone(),
                decisions: drx,
            };
            handles.push(scope.spawn(move || {
                let mut chunk = chunk;
                let result = worker.run(&mut chunk);
                if let Err(error) = &result {
                    let _ = worker.reports.send(Report::Failed(error.clone()));
                }
                // senders drop here, after the failure report, so the root cause arrives first
                drop(worker);
                result.map(|()| chunk)
            }));
        }
        drop(report_tx);

        let outcome = coordinate(n, workers, settings, &report_rx, &decision_txs);
        drop(decision_txs);
        drop(report_rx);
        let mut out_slots = Vec::with_capacity(n);
        let mut worker_error = None;
        for h in handles {
            match h.join().expect("worker thread panicked") {
                Ok(chunk) => out_slots.extend(chunk),
                Err(e) => {
                    worker_error.get_or_insert(e);
                }
            }
        }
        let (iterations, converged, history, mut messages) = outcome?;
        if let Some(e) = worker_error {
            return Err(e);
        }
        for s in &out_slots {
            messages.node_gathers += s.fine_counters.node_gathers + s.coarse_counters.node_gathers;
        }
        Ok(CompositeState {
            slots: out_slots,
            iterations,
            converged,
            residual_history: history,
            messages,
        })
    })
}

type Coordination<T> = (usize, bool, Vec<T>, MessageCounters);

fn coordinate<T: Real>(
    n: usize,
    workers: usize,
    settings: &ControllerSettings<T>,
    reports: &Receiver<Report<T>>,
    decisions: &[Sender<Decision>],
) -> Result<Coordination<T>, ControllerError> {
    let (tol, timeout) = (settings.tol, settings.timeout);
    let mut residuals = vec![T::infinity(); n];
    let mut frozen = vec![false; n];
    let mut history = Vec::new();
    let mut messages = MessageCounters::default();
    let mut iteration = 0;
    loop {
        let mut seen = vec![false; workers];
        for _ in 0..workers {
            let report = match reports.recv_timeout(timeout) {
                Ok(r) => r,
                Err(e) => {
                    let missing: Vec<String> = seen
                        .iter()
                        .enumerate()
                        .filter(|(_, &s)| !s)
                        .map(|(w, _)| format!("worker {w}"))
                        .collect();
                    let waiting_for = format!("reports for iteration {iteration} from {missing:?}");
                    let pending = seen
                        .iter()
                        .enumerate()
                        .filter(|(_, &s)| s)
                        .map(|(w, _)| format!("report of worker {w}"))
                        .collect();
                    return Err(match e {
                        RecvTimeoutError::Timeout => ExecError::Deadlock {
                            who: "coordinator".into(),
                            waiting_for,
                            pending,
                        },
                        RecvTimeoutError::Disconnected => ExecError::Disconnected {
                            who: "coordinator".into(),
                            waiting_for,
                        },
                    }
                    .into());
                }
            };
            match report {
                Report::Failed(error) => return Err(error),
                Report::Iteration {
                    worker,
                    iteration: it,
                    flags,
                    forwards,
                } => {
                    if it != iteration || seen[worker] {
                        return Err(ExecError::Protocol {
                            who: "coordinator".into(),
                            expected: format!("one report per worker for iteration {iteration}"),
                            found: format!("worker {worker}, iteration {it}"),
                        }
                        .into());
                    }
                    seen[worker] = true;
                    messages.merge(&forwards);
                    messages.converged_flags += flags.len();
                    for f in flags {
                        if let Message::ConvergedFlag { step, residual, .. } = f {
                            residuals[step] = residual;
                        }
                    }
                }
            }
        }
        history.push(residuals.iter().copied().fold(T::zero(), T::max));
        let converged = residuals.iter().all(|&r| r <= tol);
        update_frozen(&mut frozen, &residuals, tol, settings.locking);
        let stop = converged || iteration + 1 >= settings.max_outer;
        for d in decisions {
            // a worker that already failed shows up as a Failed report next round
            let _ = d.send(Decision {
                iteration,
                frozen: frozen.clone(),
                stop,
            });
        }
        if stop {
            return Ok((iteration + 1, converged, history, messages));
        }
        iteration += 1;
    }
}
