use std::fmt::Write as _;
use std::time::Duration;

use num_complex::Complex;
use serde::Serialize;

use crate::cli::{CliError, ConfigError, ProblemKind, RunConfig};
use crate::controller::{
    self, ControllerError, ControllerSettings, Level, LevelHierarchy, Mode, RunOutcome, RunStats,
};
use crate::exec::WorkerGrid;
use crate::linsolve::GmresSettings;
use crate::problems::{AllenCahn, AllenCahnParams, Dahlquist, GrayScott, GrayScottParams, Problem};
use crate::quadrature::QuadratureRule;
use crate::scalar::norm_inf;
use crate::spatial::{IdentityTransfer, Mesh2D, MeshTransfer};
use crate::sweeps::{NewtonSettings, QnSettings};

/// Column order of the CSV output.
pub const CSV_HEADER: &str =
    "mode,p_steps,p_nodes,outer_iters,linear_solves_total,gmres_iters_total,messages,converged";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub mode: Mode,
    pub p_steps: usize,
    pub p_nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    #[serde(flatten)]
    pub cell: Cell,
    /// ∞-norm of the fine solution at the final time.
    pub final_norm: f64,
    pub stats: RunStats,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub records: Vec<CellRecord>,
}

impl Experiment {
    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.stats.converged)
    }
}

/// Cross-product of modes and layouts, without the cells a mode cannot use.
///
/// Serial-in-time modes take only `(1, 1)`; the Newton-based PFASST sweep has
/// no node parallelism.
pub fn admissible_cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &mode in &cfg.modes {
        for &p_steps in &cfg.p_steps {
            for &p_nodes in &cfg.p_nodes {
                if mode.is_serial_in_time() && (p_steps > 1 || p_nodes > 1) {
                    continue;
                }
                if mode.qn_variant().is_none() && p_nodes > 1 {
                    continue;
                }
                let cell = Cell {
                    mode,
                    p_steps,
                    p_nodes,
                };
                if !out.contains(&cell) {
                    out.push(cell);
                }
            }
        }
    }
    out
}

fn config_error(key: &'static str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: e.to_string(),
    }
}

fn rule(cfg: &RunConfig) -> Result<QuadratureRule<f64>, ConfigError> {
    QuadratureRule::radau_right(cfg.nodes, cfg.q_delta).map_err(|e| config_error("nodes", e))
}

fn meshes(
    cfg: &RunConfig,
    domain: (f64, f64, f64, f64),
) -> Result<(Mesh2D<f64>, Mesh2D<f64>), ConfigError> {
    let fine = Mesh2D::periodic(cfg.n_fine, domain).map_err(|e| config_error("n_fine", e))?;
    let coarse = Mesh2D::periodic(cfg.n_coarse, domain).map_err(|e| config_error("n_coarse", e))?;
    Ok((fine, coarse))
}

fn mesh_hierarchy<P: Problem<f64>>(
    cfg: &RunConfig,
    fine: Mesh2D<f64>,
    coarse: Mesh2D<f64>,
    components: usize,
    make: impl Fn(Mesh2D<f64>) -> P,
) -> Result<LevelHierarchy<f64, P>, ConfigError> {
    let transfer =
        MeshTransfer::new(fine, coarse, components).map_err(|e| config_error("n_coarse", e))?;
    LevelHierarchy::new(
        Level {
            problem: make(fine),
            rule: rule(cfg)?,
        },
        Some(Level {
            problem: make(coarse),
            rule: rule(cfg)?,
        }),
        Box::new(transfer),
    )
    .map_err(|e| config_error("n_coarse", e))
}

pub fn ac_hierarchy(cfg: &RunConfig) -> Result<LevelHierarchy<f64, AllenCahn<f64>>, ConfigError> {
    let (fine, coarse) = meshes(cfg, (-0.5, 0.5, -0.5, 0.5))?;
    let params = AllenCahnParams {
        eps: cfg.ac_eps,
        r0: cfg.ac_r0,
        reaction: cfg.ac_reaction,
        initial: cfg.ac_initial,
    };
    mesh_hierarchy(cfg, fine, coarse, 1, |m| AllenCahn::new(m, params))
}

pub fn gs_hierarchy(cfg: &RunConfig) -> Result<LevelHierarchy<f64, GrayScott<f64>>, ConfigError> {
    let (fine, coarse) = meshes(cfg, (0.0, 1.0, 0.0, 1.0))?;
    let params = GrayScottParams {
        du: cfg.gs_du,
        dv: cfg.gs_dv,
        feed: cfg.gs_feed,
        kill: cfg.gs_kill,
        coupling: cfg.gs_coupling,
    };
    mesh_hierarchy(cfg, fine, coarse, 2, |m| GrayScott::new(m, params))
}

/// Both levels share the scalar problem; transfers are the identity.
pub fn dahlquist_hierarchy(
    cfg: &RunConfig,
) -> Result<LevelHierarchy<f64, Dahlquist<f64>>, ConfigError> {
    let p = Dahlquist::new(Complex::new(cfg.lambda_re, cfg.lambda_im));
    let dim = p.dim();
    LevelHierarchy::new(
        Level {
            problem: p,
            rule: rule(cfg)?,
        },
        Some(Level {
            problem: p,
            rule: rule(cfg)?,
        }),
        Box::new(IdentityTransfer(dim)),
    )
    .map_err(|e| config_error("problem", e))
}

pub fn controller_settings(cfg: &RunConfig, mode: Mode, p_steps: usize) -> ControllerSettings<f64> {
    ControllerSettings {
        mode,
        dt: cfg.dt,
        l_total: cfg.l_total,
        block_steps: cfg.block_steps.unwrap_or(p_steps),
        tol: cfg.tol,
        max_outer: cfg.max_outer,
        locking: cfg.locking,
        newton: NewtonSettings::to_tolerance(cfg.tol_newton, cfg.newton_max),
        qn: QnSettings {
            n_qn: cfg.n_qn,
            guess: cfg.qn_guess,
        },
        gmres: GmresSettings {
            rel_tol: cfg.gmres_tol,
            max_iter: cfg.gmres_max_iter,
            restart: cfg.gmres_restart,
        },
        timeout: Duration::from_secs(cfg.timeout_s),
    }
}

fn run_on<P: Problem<f64>>(
    h: &LevelHierarchy<f64, P>,
    cfg: &RunConfig,
    cell: Cell,
) -> Result<RunOutcome<f64>, ControllerError> {
    let grid = WorkerGrid::new(cell.p_steps, cell.p_nodes, cfg.nodes)?;
    controller::run(h, &controller_settings(cfg, cell.mode, cell.p_steps), &grid)
}

/// Runs a single cell and returns the full outcome, including node values.
pub fn run_cell(cfg: &RunConfig, cell: Cell) -> Result<RunOutcome<f64>, CliError> {
    let out = match cfg.problem {
        ProblemKind::AllenCahn => run_on(&ac_hierarchy(cfg)?, cfg, cell),
        ProblemKind::GrayScott => run_on(&gs_hierarchy(cfg)?, cfg, cell),
        ProblemKind::Dahlquist => run_on(&dahlquist_hierarchy(cfg)?, cfg, cell),
    };
    out.map_err(|source| CliError::Run {
        mode: cell.mode,
        p_steps: cell.p_steps,
        p_nodes: cell.p_nodes,
        config: cfg.emit(),
        source,
    })
}

/// Runs every admissible cell in order.
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment, CliError> {
    let mut records = Vec::new();
    for cell in admissible_cells(cfg) {
        let out = run_cell(cfg, cell)?;
        records.push(CellRecord {
            cell,
            final_norm: norm_inf(&out.final_value),
            stats: out.stats,
        });
    }
    Ok(Experiment {
        config: cfg.clone(),
        records,
    })
}

/// One row per cell under [`CSV_HEADER`]; `messages` counts forwards and node gathers.
pub fn emit_csv(exp: &Experiment) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &exp.records {
        let st = &r.stats;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.cell.mode,
            r.cell.p_steps,
            r.cell.p_nodes,
            st.outer_iters,
            st.linear_solves_total,
            st.gmres_iters_total,
            st.messages.total(),
            st.converged
        );
    }
    s
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    config: serde_json::Map<String, serde_json::Value>,
    cells: &'a [CellRecord],
}

/// Single JSON object with the effective config and per-step detail of every cell.
pub fn emit_json(exp: &Experiment) -> String {
    let config = exp
        .config
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
        .collect();
    let doc = JsonDoc {
        config,
        cells: &exp.records,
    };
    serde_json::to_string_pretty(&doc).expect("stats serialize") + "\n"
}
