//! Exit criteria, one line each. Runs without the libtest harness so every
//! line is printed; the process fails if any criterion fails.

#![allow(clippy::needless_range_loop)]

use std::process::{Command, ExitCode};
use std::time::Instant;

use pfasst::cli::{run_cell, Cell, RunConfig};
use pfasst::controller::Mode;
use pfasst::linsolve::{dense_solve, DenseMatrix};
use pfasst::problems::{Dahlquist, Problem};
use pfasst::quadrature::{build_q_delta_lu, lu_no_pivot, QDeltaKind, QuadratureRule};
use pfasst::sweeps::{
    qn_sweep_diag, sdc_sweep_serial, LevelCounters, LevelTag, NewtonSettings, QnSettings,
    QnVariant, StepState, SweepContext,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn nodes_diff(a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(sa, sb)| sa.iter().zip(sb))
        .map(|(x, y)| max_diff(x, y))
        .fold(0.0, f64::max)
}

fn config(text: &str) -> Result<RunConfig, String> {
    RunConfig::parse(text).map_err(|e| e.to_string())
}

fn run(
    cfg: &RunConfig,
    mode: Mode,
    p_steps: usize,
    p_nodes: usize,
) -> Result<pfasst::controller::RunOutcome<f64>, String> {
    run_cell(
        cfg,
        Cell {
            mode,
            p_steps,
            p_nodes,
        },
    )
    .map_err(|e| e.to_string())
}

/// Dense collocation solution of `u' = λu` over `steps` steps of size `dt`.
fn dense_collocation_steps(rule: &QuadratureRule<f64>, lambda: f64, dt: f64, steps: usize) -> f64 {
    let m = rule.num_nodes();
    let a = DenseMatrix::from_fn(m, m, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) - dt * lambda * rule.q.get(i, j)
    });
    let mut u0 = 1.0;
    for _ in 0..steps {
        let u = dense_solve(&a, &vec![u0; m]).expect("nonsingular collocation matrix");
        u0 = u[m - 1];
    }
    u0
}

fn quadrature_exactness() -> Outcome {
    let rule = QuadratureRule::<f64>::radau_right(4, QDeltaKind::Lu).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for d in 0..=6 {
        let approx: f64 = (0..4)
            .map(|j| rule.q.get(3, j) * rule.nodes[j].powi(d))
            .sum();
        worst = worst.max((approx - 1.0 / (d as f64 + 1.0)).abs());
    }
    check(
        worst <= 1e-13,
        format!("max error over degrees 0..=6 is {worst:.2e} (bound 1e-13)"),
    )
}

fn collocation_order() -> Outcome {
    let rule = QuadratureRule::<f64>::radau_right(4, QDeltaKind::Lu).map_err(|e| e.to_string())?;
    let exact = (-1.0f64).exp();
    let dts = [0.5, 0.25, 0.125, 0.0625];
    let errors: Vec<f64> = dts
        .iter()
        .map(|&dt| (dense_collocation_steps(&rule, -1.0, dt, (1.0 / dt) as usize) - exact).abs())
        .collect();
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let listed: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
    check(
        slope >= 6.5,
        format!(
            "fitted order {slope:.3} (bound 6.5), errors [{}]",
            listed.join(", ")
        ),
    )
}

fn lu_trick() -> Outcome {
    let mut worst = 0.0f64;
    for m in 2..=5 {
        let rule =
            QuadratureRule::<f64>::radau_right(m, QDeltaKind::Lu).map_err(|e| e.to_string())?;
        let qt = rule.q.transpose();
        let (l, u) = lu_no_pivot(&qt).map_err(|e| e.to_string())?;
        worst = worst.max(l.matmul(&u).sub(&qt).norm_inf::<f64>());
    }
    let rule = QuadratureRule::<f64>::radau_right(2, QDeltaKind::Lu).map_err(|e| e.to_string())?;
    let qd = build_q_delta_lu(&rule.q).map_err(|e| e.to_string())?;
    let hand = DenseMatrix::from_rows(&[vec![5.0 / 24.0, 0.0], vec![0.75, 0.4]]);
    let hand_err = qd.sub(&hand).norm_inf::<f64>();
    check(
        worst <= 1e-13 && hand_err <= 1e-15,
        format!(
            "max ‖LU − Qᵀ‖ over M=2..5 is {worst:.2e} (bound 1e-13); M=2 Q_Δ = [[{:.6}, 0], [{:.6}, {:.6}]] differs from [[5/24, 0], [3/4, 2/5]] by {hand_err:.2e} (bound 1e-15)",
            qd.get(0, 0),
            qd.get(1, 0),
            qd.get(1, 1)
        ),
    )
}

fn single_sweep_equivalence() -> Outcome {
    let rule = QuadratureRule::<f64>::radau_right(4, QDeltaKind::Lu).map_err(|e| e.to_string())?;
    let groups = vec![vec![0, 1, 2, 3]];
    let mut serial_err = 0.0f64;
    let mut dense_err = 0.0f64;
    for (lambda, dt) in [(-1.0, 0.1), (-10.0, 0.25), (-100.0, 0.05)] {
        let p = Dahlquist::real(lambda);
        let ctx = SweepContext {
            problem: &p,
            rule: &rule,
            dt,
            gmres: Default::default(),
        };
        let mut start = StepState::spread(LevelTag::Fine, &[1.0], 4);
        start.u = vec![vec![0.9], vec![1.3], vec![-0.2], vec![0.5]];
        let jac = p.jacobian_at(&start.u0);

        let mut serial = start.clone();
        sdc_sweep_serial(
            &mut serial,
            &ctx,
            &NewtonSettings::single(),
            &mut LevelCounters::default(),
        )
        .map_err(|e| e.to_string())?;
        let mut qd = start.clone();
        qn_sweep_diag(
            &mut qd,
            &ctx,
            QnVariant::QDelta,
            &jac,
            &QnSettings::default(),
            &groups,
            &mut LevelCounters::default(),
        )
        .map_err(|e| e.to_string())?;
        let mut q = start.clone();
        qn_sweep_diag(
            &mut q,
            &ctx,
            QnVariant::Q,
            &jac,
            &QnSettings::default(),
            &groups,
            &mut LevelCounters::default(),
        )
        .map_err(|e| e.to_string())?;

        let a = DenseMatrix::from_fn(4, 4, |i, j| {
            (if i == j { 1.0 } else { 0.0 }) - dt * lambda * rule.q.get(i, j)
        });
        let oracle = dense_solve(&a, &[1.0; 4]).map_err(|e| e.to_string())?;
        for m in 0..4 {
            serial_err = serial_err.max((qd.u[m][0] - serial.u[m][0]).abs());
            dense_err = dense_err.max((q.u[m][0] - oracle[m]).abs());
        }
    }
    check(
        serial_err <= 1e-12 && dense_err <= 1e-11,
        format!("Q_Δ variant vs serial sweep {serial_err:.2e} (bound 1e-12); Q variant vs dense solve {dense_err:.2e} (bound 1e-11)"),
    )
}

fn composite_oracle() -> Outcome {
    let (lambda, dt, m, l) = (-2.0, 0.25, 2usize, 3usize);
    let cfg = config(&format!(
        "problem = dahlquist\nlambda_re = {lambda}\ndt = {dt}\nnodes = {m}\nl_total = {l}\nblock_steps = {l}\ntol = 1e-13"
    ))?;
    let rule = QuadratureRule::<f64>::radau_right(m, QDeltaKind::Lu).map_err(|e| e.to_string())?;
    let n = l * m;
    // block bidiagonal: (I − ΔtλQ) on the diagonal, −H (ones in the last column) below
    let a = DenseMatrix::from_fn(n, n, |r, c| {
        let (br, i) = (r / m, r % m);
        let (bc, j) = (c / m, c % m);
        if br == bc {
            (if i == j { 1.0 } else { 0.0 }) - dt * lambda * rule.q.get(i, j)
        } else if bc + 1 == br && j == m - 1 {
            -1.0
        } else {
            0.0
        }
    });
    let mut b = vec![0.0; n];
    b[..m].fill(1.0);
    let oracle = dense_solve(&a, &b).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut all_converged = true;
    for mode in [Mode::Pfasst, Mode::PfasstErQdelta, Mode::PfasstErQ] {
        let out = run(&cfg, mode, l, 1)?;
        all_converged &= out.stats.converged;
        for (s, step) in out.nodes.iter().enumerate() {
            for (k, v) in step.iter().enumerate() {
                worst = worst.max((v[0] - oracle[s * m + k]).abs());
            }
        }
    }
    check(
        all_converged && worst <= 1e-10,
        format!("max node error over PFASST, ER-Qdelta, ER-Q is {worst:.2e} (bound 1e-10), converged {all_converged}"),
    )
}

const AC_DESK: &str = "problem = allen-cahn\nn_fine = 64\nn_coarse = 32\nac_eps = 0.04\ndt = 1e-3\nl_total = 8\nblock_steps = 8\ntol = 1e-10";

fn grid_independence() -> Outcome {
    let cfg = config(AC_DESK)?;
    let mut worst = 0.0f64;
    let mut mismatched = Vec::new();
    let mut layouts = 0;
    for mode in [Mode::PfasstErQdelta, Mode::PfasstErQ] {
        let base = run(&cfg, mode, 1, 1)?;
        if !base.stats.converged {
            return Err(format!("{mode} (1,1) did not converge"));
        }
        for p_steps in 1..=8 {
            for p_nodes in 1..=4 {
                if (p_steps, p_nodes) == (1, 1) {
                    continue;
                }
                let out = run(&cfg, mode, p_steps, p_nodes)?;
                layouts += 1;
                worst = worst.max(nodes_diff(&out.nodes, &base.nodes));
                if out.stats.outer_iters != base.stats.outer_iters
                    || out.stats.linear_solves_total != base.stats.linear_solves_total
                {
                    mismatched.push(format!("{mode} ({p_steps},{p_nodes})"));
                }
            }
        }
    }
    check(
        worst <= 1e-12 && mismatched.is_empty(),
        format!("{layouts} layouts vs (1,1): max node difference {worst:.2e} (bound 1e-12), counter mismatches {mismatched:?}"),
    )
}

fn variant_ordering() -> Outcome {
    let cfg = config(AC_DESK)?;
    let newton_n = config(&format!("{AC_DESK}\ntol_newton = 1e-11\nnewton_max = 20"))?;
    let solves = |cfg: &RunConfig, mode| -> Result<usize, String> {
        let out = run(cfg, mode, 8, 1)?;
        if !out.stats.converged {
            return Err(format!("{mode} did not converge"));
        }
        Ok(out.stats.linear_solves_total)
    };
    let er_q = solves(&cfg, Mode::PfasstErQ)?;
    let er_qd = solves(&cfg, Mode::PfasstErQdelta)?;
    let one = solves(&cfg, Mode::Pfasst)?;
    let many = solves(&newton_n, Mode::Pfasst)?;
    check(
        er_q < er_qd && many >= one,
        format!("linear solves: ER-Q {er_q} < ER-Qdelta {er_qd}; PFASST N iter {many} ≥ PFASST 1 iter {one}"),
    )
}

/// Runs all five modes; returns the modes that failed and the max pairwise
/// difference among the converged ones (`None` with fewer than two).
fn gray_scott_modes(coupling: &str) -> Result<(Vec<String>, Option<f64>), String> {
    let cfg = config(&format!(
        "problem = gray-scott\nn_fine = 64\nn_coarse = 32\ndt = 1\nl_total = 8\nblock_steps = 8\ntol = 1e-12\nmax_outer = 100\ngs_coupling = {coupling}"
    ))?;
    let mut finals: Vec<Vec<f64>> = Vec::new();
    let mut failed = Vec::new();
    for mode in Mode::ALL {
        let p_steps = if mode.is_serial_in_time() { 1 } else { 8 };
        match run(&cfg, mode, p_steps, 1) {
            Ok(out) if out.stats.converged => finals.push(out.final_value),
            Ok(out) => failed.push(format!(
                "{mode} (unconverged after {} outer iterations)",
                out.stats.outer_iters
            )),
            Err(e) => {
                let first = e.lines().next().unwrap_or_default();
                failed.push(format!(
                    "{mode} ({})",
                    first.split_once("failed: ").map_or(first, |(_, r)| r)
                ));
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..finals.len() {
        for j in i + 1..finals.len() {
            worst = worst.max(max_diff(&finals[i], &finals[j]));
        }
    }
    Ok((failed, (finals.len() > 1).then_some(worst)))
}

fn gray_scott_convergence() -> Outcome {
    let (failed, worst) = gray_scott_modes("bilinear")?;
    let show = |w: Option<f64>| w.map_or("n/a".to_string(), |w| format!("{w:.2e}"));
    let verdict = failed.is_empty() && worst.is_some_and(|w| w <= 1e-9);
    let mut detail = format!(
        "bilinear 2uv coupling: failed {failed:?}; max pairwise difference {} (bound 1e-9)",
        show(worst)
    );
    if !verdict {
        let (c_failed, c_worst) = gray_scott_modes("classical")?;
        detail += &format!(
            "; for reference, classical uv² coupling: failed {c_failed:?}, max pairwise difference {}",
            show(c_worst)
        );
    }
    check(verdict, detail)
}

fn node_imbalance() -> Outcome {
    let cfg = config(AC_DESK)?;
    let out = run(&cfg, Mode::PfasstErQdelta, 8, 2)?;
    let per_node = &out.stats.per_node_gmres;
    if per_node.len() != 4 {
        return Err(format!("expected 4 per-node counts, found {per_node:?}"));
    }
    let max = *per_node.iter().max().unwrap();
    let min = *per_node.iter().min().unwrap();
    let groups: Vec<usize> = (0..2)
        .map(|g| (g..4).step_by(2).map(|m| per_node[m]).sum())
        .collect();
    let group_gap = groups[0].abs_diff(groups[1]);
    let spread = max - min;
    check(
        min > 0 && max > min && group_gap < spread,
        format!(
            "per-node GMRES iterations {per_node:?}, max/min {:.3}; group totals {groups:?} differ by {group_gap} < node spread {spread}",
            max as f64 / min.max(1) as f64
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "problem = allen-cahn\nmode = all\nl_total = 4\nblock_steps = 4\np_steps = 1,4\np_nodes = 1,2\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for k in 0..2 {
        let csv = dir.path().join(format!("out{k}.csv"));
        let json = dir.path().join(format!("out{k}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_pfasst"))
            .arg("--config")
            .arg(&cfg_path)
            .arg("--csv")
            .arg(&csv)
            .arg("--json")
            .arg(&json)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run {k} exited with {status}"));
        }
        outputs.push((
            std::fs::read(&csv).map_err(|e| e.to_string())?,
            std::fs::read(&json).map_err(|e| e.to_string())?,
        ));
    }
    let rows = String::from_utf8_lossy(&outputs[0].0).lines().count() - 1;
    check(
        outputs[0] == outputs[1],
        format!(
            "{rows} CSV rows; CSV identical {}, JSON identical {}",
            outputs[0].0 == outputs[1].0,
            outputs[0].1 == outputs[1].1
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("quadrature exactness", quadrature_exactness),
        ("collocation order", collocation_order),
        ("LU trick", lu_trick),
        ("single-sweep equivalence", single_sweep_equivalence),
        ("composite-system oracle", composite_oracle),
        ("grid independence", grid_independence),
        ("variant ordering", variant_ordering),
        ("Gray-Scott convergence", gray_scott_convergence),
        ("node imbalance", node_imbalance),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
