//! Experiment configuration, driver and stats emission.
//!
//! Config files hold one `key = value` pair per line; `#` starts a comment.
//! `problem` and `profile` are applied before every other key so that later
//! keys override the per-problem defaults regardless of their position.

mod driver;

pub use driver::{
    ac_hierarchy, admissible_cells, controller_settings, dahlquist_hierarchy, emit_csv, emit_json,
    gs_hierarchy, run_cell, run_experiment, Cell, CellRecord, Experiment, CSV_HEADER,
};

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

use crate::controller::{ControllerError, Mode};
use crate::problems::{AcInitial, AcReaction, GsCoupling};
use crate::quadrature::QDeltaKind;
use crate::sweeps::QnGuess;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cell {mode} p_steps={p_steps} p_nodes={p_nodes} failed: {source}\neffective config:\n{config}")]
    Run {
        mode: Mode,
        p_steps: usize,
        p_nodes: usize,
        config: String,
        source: ControllerError,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    AllenCahn,
    GrayScott,
    Dahlquist,
}

impl ProblemKind {
    fn name(self) -> &'static str {
        match self {
            ProblemKind::AllenCahn => "allen-cahn",
            ProblemKind::GrayScott => "gray-scott",
            ProblemKind::Dahlquist => "dahlquist",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Full,
}

/// Fully resolved experiment configuration.
///
/// `modes`, `p_steps` and `p_nodes` are lists; the experiment runs every
/// admissible cell of their cross-product.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub profile: Profile,
    pub modes: Vec<Mode>,
    pub l_total: usize,
    /// `None` iterates `p_steps` steps per block.
    pub block_steps: Option<usize>,
    pub dt: f64,
    pub nodes: usize,
    pub q_delta: QDeltaKind,
    pub n_fine: usize,
    pub n_coarse: usize,
    pub p_steps: Vec<usize>,
    pub p_nodes: Vec<usize>,
    pub tol: f64,
    pub max_outer: usize,
    pub locking: bool,
    pub tol_newton: f64,
    pub newton_max: usize,
    pub n_qn: usize,
    pub qn_guess: QnGuess,
    pub gmres_tol: f64,
    pub gmres_max_iter: usize,
    pub gmres_restart: usize,
    pub ac_eps: f64,
    pub ac_r0: f64,
    pub ac_reaction: AcReaction,
    pub ac_initial: AcInitial,
    pub gs_du: f64,
    pub gs_dv: f64,
    pub gs_feed: f64,
    pub gs_kill: f64,
    pub gs_coupling: GsCoupling,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub timeout_s: u64,
}

impl RunConfig {
    pub fn defaults(problem: ProblemKind) -> Self {
        let (dt, tol, l_total) = match problem {
            ProblemKind::AllenCahn => (1e-3, 1e-10, 8),
            ProblemKind::GrayScott => (1.0, 1e-12, 8),
            ProblemKind::Dahlquist => (0.1, 1e-12, 4),
        };
        Self {
            problem,
            profile: Profile::Desk,
            modes: vec![Mode::PfasstErQ],
            l_total,
            block_steps: None,
            dt,
            nodes: 4,
            q_delta: QDeltaKind::Lu,
            n_fine: 64,
            n_coarse: 32,
            p_steps: vec![1],
            p_nodes: vec![1],
            tol,
            max_outer: 100,
            locking: true,
            tol_newton: 0.0,
            newton_max: 1,
            n_qn: 1,
            qn_guess: QnGuess::Warm,
            gmres_tol: 1e-12,
            gmres_max_iter: 200,
            gmres_restart: 30,
            ac_eps: 0.04,
            ac_r0: 0.25,
            // the logistic reaction u(1−u) blows up from u = −1; see `ac_reaction`
            ac_reaction: AcReaction::Cubic,
            ac_initial: AcInitial::Literal,
            gs_du: 1e-4,
            gs_dv: 1e-5,
            gs_feed: 0.0367,
            gs_kill: 0.0649,
            gs_coupling: GsCoupling::Bilinear,
            lambda_re: -1.0,
            lambda_im: 0.0,
            timeout_s: 600,
        }
    }

    fn apply_profile(&mut self, profile: Profile) {
        self.profile = profile;
        match profile {
            Profile::Desk => {
                self.n_fine = 64;
                self.l_total = if self.problem == ProblemKind::Dahlquist {
                    4
                } else {
                    8
                };
            }
            Profile::Full => {
                self.n_fine = 256;
                self.l_total = 24;
            }
        }
        self.n_coarse = self.n_fine / 2;
    }

    /// Resolves a config from `key = value` pairs; later pairs win.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            if map.insert(k, v).is_none() {
                order.push(k);
            }
        }
        let problem = match map.get("problem") {
            None => ProblemKind::AllenCahn,
            Some(v) => parse_problem(v)?,
        };
        let mut cfg = Self::defaults(problem);
        if let Some(v) = map.get("profile") {
            let p = match *v {
                "desk" => Profile::Desk,
                "full" => Profile::Full,
                other => {
                    return Err(invalid(
                        "profile",
                        format!("expected desk|full, found {other:?}"),
                    ))
                }
            };
            cfg.apply_profile(p);
        }
        // list keys accept `all`, which depends on l_total and nodes
        let (lists, scalars): (Vec<&str>, Vec<&str>) = order
            .into_iter()
            .partition(|k| *k == "p_steps" || *k == "p_nodes");
        for k in scalars.into_iter().chain(lists) {
            if k != "problem" && k != "profile" && k != "n_coarse" {
                cfg.set(k, map[k])?;
            }
        }
        cfg.n_coarse = match map.get("n_coarse") {
            Some(v) => parse_num("n_coarse", v)?,
            None => cfg.n_fine / 2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses the config file format.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_pairs(parse_lines(text)?)
    }

    /// Config file text with `overrides` (`key=value`) applied on top.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut pairs = parse_lines(text)?;
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: o.clone(),
            })?;
            pairs.push((k.trim(), v.trim()));
        }
        Self::from_pairs(pairs)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "mode" => self.modes = parse_modes(v)?,
            "l_total" => self.l_total = parse_num("l_total", v)?,
            "block_steps" => {
                self.block_steps = match v {
                    "auto" => None,
                    _ => Some(parse_num("block_steps", v)?),
                }
            }
            "dt" => self.dt = parse_num("dt", v)?,
            "nodes" => self.nodes = parse_num("nodes", v)?,
            "q_delta" => {
                self.q_delta = match v {
                    "lu" => QDeltaKind::Lu,
                    "implicit-euler" => QDeltaKind::ImplicitEuler,
                    _ => {
                        return Err(invalid(
                            "q_delta",
                            format!("expected lu|implicit-euler, found {v:?}"),
                        ))
                    }
                }
            }
            "n_fine" => self.n_fine = parse_num("n_fine", v)?,
            "p_steps" => self.p_steps = parse_list("p_steps", v, self.l_total)?,
            "p_nodes" => self.p_nodes = parse_list("p_nodes", v, self.nodes)?,
            "tol" => self.tol = parse_num("tol", v)?,
            "max_outer" => self.max_outer = parse_num("max_outer", v)?,
            "locking" => self.locking = parse_num("locking", v)?,
            "tol_newton" => self.tol_newton = parse_num("tol_newton", v)?,
            "newton_max" => self.newton_max = parse_num("newton_max", v)?,
            "n_qn" => self.n_qn = parse_num("n_qn", v)?,
            "qn_guess" => {
                self.qn_guess = match v {
                    "warm" => QnGuess::Warm,
                    "spread" => QnGuess::Spread,
                    _ => {
                        return Err(invalid(
                            "qn_guess",
                            format!("expected warm|spread, found {v:?}"),
                        ))
                    }
                }
            }
            "gmres_tol" => self.gmres_tol = parse_num("gmres_tol", v)?,
            "gmres_max_iter" => self.gmres_max_iter = parse_num("gmres_max_iter", v)?,
            "gmres_restart" => self.gmres_restart = parse_num("gmres_restart", v)?,
            "ac_eps" => self.ac_eps = parse_num("ac_eps", v)?,
            "ac_r0" => self.ac_r0 = parse_num("ac_r0", v)?,
            "ac_reaction" => {
                self.ac_reaction = match v {
                    "logistic" => AcReaction::Logistic,
                    "cubic" => AcReaction::Cubic,
                    _ => {
                        return Err(invalid(
                            "ac_reaction",
                            format!("expected logistic|cubic, found {v:?}"),
                        ))
                    }
                }
            }
            "ac_initial" => {
                self.ac_initial = match v {
                    "literal" => AcInitial::Literal,
                    "radial" => AcInitial::Radial,
                    _ => {
                        return Err(invalid(
                            "ac_initial",
                            format!("expected literal|radial, found {v:?}"),
                        ))
                    }
                }
            }
            "gs_du" => self.gs_du = parse_num("gs_du", v)?,
            "gs_dv" => self.gs_dv = parse_num("gs_dv", v)?,
            "gs_feed" => self.gs_feed = parse_num("gs_feed", v)?,
            "gs_kill" => self.gs_kill = parse_num("gs_kill", v)?,
            "gs_coupling" => {
                self.gs_coupling = match v {
                    "bilinear" => GsCoupling::Bilinear,
                    "classical" => GsCoupling::Classical,
                    _ => {
                        return Err(invalid(
                            "gs_coupling",
                            format!("expected bilinear|classical, found {v:?}"),
                        ))
                    }
                }
            }
            "lambda_re" => self.lambda_re = parse_num("lambda_re", v)?,
            "lambda_im" => self.lambda_im = parse_num("lambda_im", v)?,
            "timeout_s" => self.timeout_s = parse_num("timeout_s", v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &'static str, v: usize| {
            if v == 0 {
                Err(invalid(key, "must be positive".into()))
            } else {
                Ok(())
            }
        };
        positive("l_total", self.l_total)?;
        positive("max_outer", self.max_outer)?;
        positive("n_qn", self.n_qn)?;
        positive("gmres_restart", self.gmres_restart)?;
        if self.nodes < 2 {
            return Err(invalid(
                "nodes",
                "at least 2 collocation nodes are required".into(),
            ));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(invalid("tol", "must be non-negative".into()));
        }
        if let Some(b) = self.block_steps {
            positive("block_steps", b)?;
        }
        if self.modes.is_empty() {
            return Err(invalid("mode", "at least one mode is required".into()));
        }
        for &p in &self.p_nodes {
            if p == 0 || p > self.nodes {
                return Err(invalid(
                    "p_nodes",
                    format!("{p} must lie in 1..={}", self.nodes),
                ));
            }
        }
        for &p in &self.p_steps {
            if p == 0 || p > self.l_total {
                return Err(invalid(
                    "p_steps",
                    format!("{p} must lie in 1..={}", self.l_total),
                ));
            }
            if let Some(b) = self.block_steps {
                if p > b {
                    return Err(invalid("p_steps", format!("{p} exceeds block_steps = {b}")));
                }
            }
        }
        if self.problem != ProblemKind::Dahlquist {
            if self.n_fine < 8 || !self.n_fine.is_multiple_of(4) {
                return Err(invalid(
                    "n_fine",
                    "must be a multiple of 4 and at least 8".into(),
                ));
            }
            if self.n_coarse * 2 != self.n_fine {
                return Err(invalid(
                    "n_coarse",
                    format!("must equal n_fine/2 = {}", self.n_fine / 2),
                ));
            }
        }
        if self.ac_eps <= 0.0 {
            return Err(invalid("ac_eps", "must be positive".into()));
        }
        for (key, v) in [
            ("gs_du", self.gs_du),
            ("gs_dv", self.gs_dv),
            ("gs_feed", self.gs_feed),
            ("gs_kill", self.gs_kill),
        ] {
            if v < 0.0 {
                return Err(invalid(key, "must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Every key with its value, in the documented order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("problem", self.problem.name().into()),
            (
                "profile",
                match self.profile {
                    Profile::Desk => "desk".into(),
                    Profile::Full => "full".into(),
                },
            ),
            (
                "mode",
                self.modes
                    .iter()
                    .map(|m| m.name())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("l_total", self.l_total.to_string()),
            (
                "block_steps",
                self.block_steps.map_or("auto".into(), |b| b.to_string()),
            ),
            ("dt", self.dt.to_string()),
            ("nodes", self.nodes.to_string()),
            (
                "q_delta",
                match self.q_delta {
                    QDeltaKind::Lu => "lu".into(),
                    QDeltaKind::ImplicitEuler => "implicit-euler".into(),
                },
            ),
            ("n_fine", self.n_fine.to_string()),
            ("n_coarse", self.n_coarse.to_string()),
            ("p_steps", list(&self.p_steps)),
            ("p_nodes", list(&self.p_nodes)),
            ("tol", self.tol.to_string()),
            ("max_outer", self.max_outer.to_string()),
            ("locking", self.locking.to_string()),
            ("tol_newton", self.tol_newton.to_string()),
            ("newton_max", self.newton_max.to_string()),
            ("n_qn", self.n_qn.to_string()),
            (
                "qn_guess",
                match self.qn_guess {
                    QnGuess::Warm => "warm".into(),
                    QnGuess::Spread => "spread".into(),
                },
            ),
            ("gmres_tol", self.gmres_tol.to_string()),
            ("gmres_max_iter", self.gmres_max_iter.to_string()),
            ("gmres_restart", self.gmres_restart.to_string()),
            ("ac_eps", self.ac_eps.to_string()),
            ("ac_r0", self.ac_r0.to_string()),
            (
                "ac_reaction",
                match self.ac_reaction {
                    AcReaction::Logistic => "logistic".into(),
                    AcReaction::Cubic => "cubic".into(),
                },
            ),
            (
                "ac_initial",
                match self.ac_initial {
                    AcInitial::Literal => "literal".into(),
                    AcInitial::Radial => "radial".into(),
                },
            ),
            ("gs_du", self.gs_du.to_string()),
            ("gs_dv", self.gs_dv.to_string()),
            ("gs_feed", self.gs_feed.to_string()),
            ("gs_kill", self.gs_kill.to_string()),
            (
                "gs_coupling",
                match self.gs_coupling {
                    GsCoupling::Bilinear => "bilinear".into(),
                    GsCoupling::Classical => "classical".into(),
                },
            ),
            ("lambda_re", self.lambda_re.to_string()),
            ("lambda_im", self.lambda_im.to_string()),
            ("timeout_s", self.timeout_s.to_string()),
        ]
    }

    /// Config file text that parses back to `self`.
    pub fn emit(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Recognised config keys.
pub const KEYS: &[&str] = &[
    "problem",
    "profile",
    "mode",
    "l_total",
    "block_steps",
    "dt",
    "nodes",
    "q_delta",
    "n_fine",
    "n_coarse",
    "p_steps",
    "p_nodes",
    "tol",
    "max_outer",
    "locking",
    "tol_newton",
    "newton_max",
    "n_qn",
    "qn_guess",
    "gmres_tol",
    "gmres_max_iter",
    "gmres_restart",
    "ac_eps",
    "ac_r0",
    "ac_reaction",
    "ac_initial",
    "gs_du",
    "gs_dv",
    "gs_feed",
    "gs_kill",
    "gs_coupling",
    "lambda_re",
    "lambda_im",
    "timeout_s",
];

fn invalid(key: &'static str, message: String) -> ConfigError {
    ConfigError::Invalid { key, message }
}

fn parse_lines(text: &str) -> Result<Vec<(&str, &str)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        out.push((k.trim(), v.trim()));
    }
    Ok(out)
}

fn parse_num<N: FromStr>(key: &'static str, v: &str) -> Result<N, ConfigError>
where
    N::Err: Display,
{
    v.parse()
        .map_err(|e: N::Err| invalid(key, format!("{v:?}: {e}")))
}

fn parse_problem(v: &str) -> Result<ProblemKind, ConfigError> {
    [
        ProblemKind::AllenCahn,
        ProblemKind::GrayScott,
        ProblemKind::Dahlquist,
    ]
    .into_iter()
    .find(|p| p.name() == v)
    .ok_or_else(|| {
        invalid(
            "problem",
            format!("expected allen-cahn|gray-scott|dahlquist, found {v:?}"),
        )
    })
}

fn parse_modes(v: &str) -> Result<Vec<Mode>, ConfigError> {
    if v == "all" {
        return Ok(Mode::ALL.to_vec());
    }
    v.split(',')
        .map(|s| {
            let s = s.trim();
            Mode::parse(s).ok_or_else(|| invalid("mode", format!("unknown mode {s:?}")))
        })
        .collect()
}

/// Comma list of integers; `all` means `1..=max`.
fn parse_list(key: &'static str, v: &str, max: usize) -> Result<Vec<usize>, ConfigError> {
    if v == "all" {
        return Ok((1..=max).collect());
    }
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}
