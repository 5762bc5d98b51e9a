//! `key=value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::cell::SigmaConvention;
use crate::error::{HomogError, Result};
use crate::grid::CellGeometry;
use crate::init::InitialCondition;
use crate::macroscale::Orientation;
use crate::micro::Exponents;
use crate::unfolding::Extension;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Cell,
    Micro,
    Macro,
    Unfold,
    Sweep,
}

impl Command {
    pub fn parse(text: &str) -> Option<Self> {
        Some(match text {
            "cell" => Command::Cell,
            "micro" => Command::Micro,
            "macro" => Command::Macro,
            "unfold" => Command::Unfold,
            "sweep" => Command::Sweep,
            _ => return None,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Micro => "micro",
            Command::Macro => "macro",
            Command::Unfold => "unfold",
            Command::Sweep => "sweep",
        }
    }
}

/// Which unfolded field the `unfold` command compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldChoice {
    C,
    W,
}

/// Validated experiment description. `out` is not serialised so manifests
/// do not depend on where a run was written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub geometry: CellGeometry,
    /// Reciprocals `k` of the eps levels, in the order given.
    pub eps: Vec<usize>,
    /// Cell-problem resolution.
    pub n: usize,
    pub n_cell: usize,
    pub n_macro: usize,
    pub lambda: f64,
    pub mu: f64,
    pub stabilization: f64,
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub stride: usize,
    pub convention: SigmaConvention,
    pub orientation: Orientation,
    pub seed: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub c0: String,
    pub force_zero_velocity: bool,
    pub sigma_bar: Option<f64>,
    pub coefficients: Option<PathBuf>,
    pub snapshots: Vec<PathBuf>,
    pub field: FieldChoice,
    pub extension: Extension,
    pub tol: f64,
    pub uzawa_tol: f64,
    pub jacobi: bool,
    pub exponents: Exponents,
    pub override_exponents: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: Command::Cell,
            geometry: CellGeometry::Disc { radius: 0.25 },
            eps: Vec::new(),
            n: 64,
            n_cell: 16,
            n_macro: 32,
            lambda: 1.0,
            mu: 1.0,
            stabilization: 2.0,
            dt: 1e-3,
            t_final: 0.0,
            steps: 0,
            stride: 1,
            convention: SigmaConvention::FluxBalance,
            orientation: Orientation::GradientFlow,
            seed: 0,
            out: None,
            c0: "random".into(),
            force_zero_velocity: false,
            sigma_bar: None,
            coefficients: None,
            snapshots: Vec::new(),
            field: FieldChoice::C,
            extension: Extension::Zero,
            tol: 1e-10,
            uzawa_tol: 1e-9,
            jacobi: false,
            exponents: Exponents::DEFAULT,
            override_exponents: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "command",
    "geometry",
    "eps",
    "N",
    "N_cell",
    "N_macro",
    "lambda",
    "mu",
    "S",
    "dt",
    "T",
    "steps",
    "stride",
    "convention",
    "orientation",
    "seed",
    "out",
    "c0",
    "force_zero_velocity",
    "sigma_bar",
    "coefficients",
    "snapshots",
    "field",
    "extension",
    "tol",
    "uzawa_tol",
    "jacobi",
    "alpha",
    "beta",
    "gamma",
    "override_exponents",
];

fn bad(line: usize, msg: impl Into<String>) -> HomogError {
    HomogError::Config { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| bad(line, format!("malformed value for {key}: '{v}'")))
}

fn positive(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(line, key, v)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(bad(line, format!("{key} must be positive, got {v}")));
    }
    Ok(x)
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(line, format!("malformed value for {key}: '{v}' (expected true/false)"))),
    }
}

/// Parses `1/4` (or `0.25`) into the lattice count `k = 4`.
fn eps_level(line: usize, v: &str) -> Result<usize> {
    let k = if let Some(d) = v.strip_prefix("1/") {
        num::<usize>(line, "eps", d.trim())?
    } else {
        let e: f64 = num(line, "eps", v)?;
        let k = (1.0 / e).round();
        if !(e > 0.0) || (1.0 / e - k).abs() > 1e-9 * k {
            return Err(bad(line, format!("eps entry '{v}' is not the reciprocal of an integer")));
        }
        k as usize
    };
    if k == 0 {
        return Err(bad(line, format!("eps entry '{v}' is not the reciprocal of a positive integer")));
    }
    Ok(k)
}

impl ExperimentConfig {
    /// Parses and validates a configuration. Errors name the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut command = None;
        let mut t_final = None;
        let mut steps = None;
        let mut seen: Vec<&str> = Vec::new();
        let mut geometry_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected key=value, got '{content}'")))?;
            let (key, v) = (key.trim(), value.trim());
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| bad(line, format!("unknown key: {key}")))?;
            if seen.contains(known) {
                return Err(bad(line, format!("duplicate key: {key}")));
            }
            seen.push(known);
            match key {
                "command" => {
                    command = Some(Command::parse(v).ok_or_else(|| {
                        bad(line, format!("unknown command '{v}' (expected cell, micro, macro, unfold or sweep)"))
                    })?)
                }
                "geometry" => {
                    geometry_line = line;
                    cfg.geometry = CellGeometry::parse(v).map_err(|e| bad(line, e.to_string()))?
                }
                "eps" => {
                    cfg.eps = v
                        .split(',')
                        .map(|e| eps_level(line, e.trim()))
                        .collect::<Result<Vec<_>>>()?
                }
                "N" => cfg.n = num(line, key, v)?,
                "N_cell" => cfg.n_cell = num(line, key, v)?,
                "N_macro" => cfg.n_macro = num(line, key, v)?,
                "lambda" => cfg.lambda = positive(line, key, v)?,
                "mu" => cfg.mu = positive(line, key, v)?,
                "S" => {
                    let s: f64 = num(line, key, v)?;
                    if !(s >= 0.0) {
                        return Err(bad(line, format!("S must be >= 0, got {v}")));
                    }
                    cfg.stabilization = s;
                }
                "dt" => cfg.dt = positive(line, key, v)?,
                "T" => {
                    let t: f64 = num(line, key, v)?;
                    if !(t >= 0.0) {
                        return Err(bad(line, format!("T must be >= 0, got {v}")));
                    }
                    t_final = Some((line, t));
                }
                "steps" => steps = Some(num::<usize>(line, key, v)?),
                "stride" => {
                    cfg.stride = num(line, key, v)?;
                    if cfg.stride == 0 {
                        return Err(bad(line, "stride must be >= 1"));
                    }
                }
                "convention" => cfg.convention = SigmaConvention::parse(v).map_err(|e| bad(line, e.to_string()))?,
                "orientation" => cfg.orientation = Orientation::parse(v).map_err(|e| bad(line, e.to_string()))?,
                "seed" => cfg.seed = num(line, key, v)?,
                "out" => cfg.out = Some(PathBuf::from(v)),
                "c0" => {
                    InitialCondition::parse(v, 0).map_err(|e| bad(line, e.to_string()))?;
                    cfg.c0 = v.to_string();
                }
                "force_zero_velocity" => cfg.force_zero_velocity = boolean(line, key, v)?,
                "sigma_bar" => cfg.sigma_bar = Some(num(line, key, v)?),
                "coefficients" => cfg.coefficients = Some(PathBuf::from(v)),
                "snapshots" => cfg.snapshots = v.split(',').map(|s| PathBuf::from(s.trim())).collect(),
                "field" => {
                    cfg.field = match v {
                        "c" => FieldChoice::C,
                        "w" => FieldChoice::W,
                        _ => return Err(bad(line, format!("field must be c or w, got '{v}'"))),
                    }
                }
                "extension" => {
                    cfg.extension = match v {
                        "zero" => Extension::Zero,
                        "cell_average" => Extension::CellAverage,
                        _ => return Err(bad(line, format!("extension must be zero or cell_average, got '{v}'"))),
                    }
                }
                "tol" => cfg.tol = positive(line, key, v)?,
                "uzawa_tol" => cfg.uzawa_tol = positive(line, key, v)?,
                "jacobi" => cfg.jacobi = boolean(line, key, v)?,
                "alpha" => cfg.exponents.alpha = num(line, key, v)?,
                "beta" => cfg.exponents.beta = num(line, key, v)?,
                "gamma" => cfg.exponents.gamma = num(line, key, v)?,
                "override_exponents" => cfg.override_exponents = boolean(line, key, v)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        cfg.command = command.ok_or_else(|| HomogError::ConfigMissing("missing required key: command".into()))?;
        match (t_final, steps) {
            (Some((line, _)), Some(_)) => return Err(bad(line, "give either T or steps, not both")),
            (Some((line, t)), None) => {
                let s = (t / cfg.dt).round();
                if (s * cfg.dt - t).abs() > 1e-9 * t.max(cfg.dt) {
                    return Err(bad(line, format!("T = {t} is not a whole number of dt = {} steps", cfg.dt)));
                }
                cfg.steps = s as usize;
                cfg.t_final = t;
            }
            (None, Some(s)) => {
                cfg.steps = s;
                cfg.t_final = s as f64 * cfg.dt;
            }
            (None, None) => {}
        }
        if cfg.exponents != Exponents::DEFAULT && !cfg.override_exponents {
            return Err(HomogError::ConfigMissing(
                "exponents differ from alpha=2, beta=1, gamma=0; set override_exponents=true".into(),
            ));
        }
        cfg.check_command(geometry_line)?;
        Ok(cfg)
    }

    fn check_command(&self, geometry_line: usize) -> Result<()> {
        let need = |cond: bool, msg: &str| {
            if cond {
                Ok(())
            } else {
                Err(HomogError::ConfigMissing(msg.to_string()))
            }
        };
        match self.command {
            Command::Cell => need(self.n >= 4, "N must be at least 4"),
            Command::Micro => {
                need(self.eps.len() == 1, "micro needs exactly one eps level (eps=1/k)")?;
                need(self.n_cell >= 4, "N_cell must be at least 4")
            }
            Command::Macro => {
                if self.coefficients.is_none() && self.geometry == CellGeometry::Empty {
                    return Err(bad(geometry_line, "macro on the empty cell has no permeability"));
                }
                need(self.n_macro >= 2, "N_macro must be at least 2")
            }
            Command::Unfold => need(!self.snapshots.is_empty(), "unfold needs snapshots=<path>[,<path>...]"),
            Command::Sweep => {
                need(self.eps.len() >= 3, "sweep needs ≥ 3 levels")?;
                need(self.n_cell >= 4, "N_cell must be at least 4")
            }
        }
    }

    pub fn initial_condition(&self) -> InitialCondition {
        InitialCondition::parse(&self.c0, self.seed).expect("validated while parsing")
    }

    /// Canonical `key=value` text that parses back to this configuration
    /// (without `out`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("command", self.command.label().into());
        put("geometry", self.geometry.label());
        if !self.eps.is_empty() {
            put(
                "eps",
                self.eps.iter().map(|k| format!("1/{k}")).collect::<Vec<_>>().join(","),
            );
        }
        put("N", self.n.to_string());
        put("N_cell", self.n_cell.to_string());
        put("N_macro", self.n_macro.to_string());
        put("lambda", format!("{:e}", self.lambda));
        put("mu", format!("{:e}", self.mu));
        put("S", format!("{:e}", self.stabilization));
        put("dt", format!("{:e}", self.dt));
        put("steps", self.steps.to_string());
        put("stride", self.stride.to_string());
        put("convention", self.convention.label().into());
        put("orientation", self.orientation.label().into());
        put("seed", self.seed.to_string());
        put("c0", self.c0.clone());
        put("force_zero_velocity", self.force_zero_velocity.to_string());
        if let Some(sb) = self.sigma_bar {
            put("sigma_bar", format!("{sb:e}"));
        }
        if let Some(p) = &self.coefficients {
            put("coefficients", p.display().to_string());
        }
        if !self.snapshots.is_empty() {
            put(
                "snapshots",
                self.snapshots.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
            );
        }
        put(
            "field",
            match self.field {
                FieldChoice::C => "c",
                FieldChoice::W => "w",
            }
            .into(),
        );
        put(
            "extension",
            match self.extension {
                Extension::Zero => "zero",
                Extension::CellAverage => "cell_average",
            }
            .into(),
        );
        put("tol", format!("{:e}", self.tol));
        put("uzawa_tol", format!("{:e}", self.uzawa_tol));
        put("jacobi", self.jacobi.to_string());
        if self.override_exponents {
            put("alpha", format!("{:e}", self.exponents.alpha));
            put("beta", format!("{:e}", self.exponents.beta));
            put("gamma", format!("{:e}", self.exponents.gamma));
            put("override_exponents", "true".into());
        }
        s
    }
}
