//! TOML run configuration with defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Sweep,
    Continue,
    QpSweep,
    Backbone,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Continue => "continue",
            Command::QpSweep => "qp-sweep",
            Command::Backbone => "backbone",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qp: Option<QpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<BackboneConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative matrix paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    TwoDof {
        #[serde(default = "one")]
        m: f64,
        #[serde(default = "one")]
        k: f64,
        c: f64,
        #[serde(default)]
        nonlinearity: NonlinearityConfig,
    },
    Chain {
        n: usize,
        #[serde(default = "one")]
        m: f64,
        #[serde(default = "one")]
        k: f64,
        c: f64,
        kappa: f64,
    },
    Matrices {
        mass: MatrixSource,
        damping: MatrixSource,
        stiffness: MatrixSource,
        #[serde(default)]
        nonlinearity: NonlinearityConfig,
    },
}

/// Inline row-major rows or a Matrix Market file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Path(String),
    Inline(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    #[default]
    None,
    /// coeff * x[dof]^3 on one dof.
    Cubic {
        coeff: f64,
        #[serde(default)]
        dof: usize,
    },
    /// alpha * sign(x)(|x| - beta) outside the play band, on one dof.
    Play {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        dof: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    /// a_i sin(Omega t) on dof i; for qp-sweep every tone carries these amplitudes.
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    /// Forcing frequency of a single solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Picard,
    Newton,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteChoice {
    /// Position route when damping is proportional and S depends on x only.
    Auto,
    Full,
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureChoice {
    Trapezoid,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_method")]
    pub method: MethodChoice,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Picard iteration budget.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_newton_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_route")]
    pub route: RouteChoice,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureChoice,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            m: default_m(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            newton_max_iter: default_newton_iter(),
            route: default_route(),
            quadrature: default_quadrature(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub omega_start: f64,
    pub omega_end: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "yes")]
    pub warm_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationConfig {
    pub omega_start: f64,
    pub omega_end: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    #[serde(default = "default_corrector_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpConfig {
    /// [start, end] of the first base frequency.
    pub omega1: [f64; 2],
    pub omega2: [f64; 2],
    #[serde(default = "default_qp_points")]
    pub points1: usize,
    #[serde(default = "default_qp_points")]
    pub points2: usize,
    #[serde(default = "default_kmax")]
    pub kmax: i32,
    #[serde(default = "yes")]
    pub adaptive: bool,
    #[serde(default = "default_tail")]
    pub tail_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    #[serde(default)]
    pub mode: usize,
    #[serde(default)]
    pub phase_dof: usize,
    #[serde(default = "default_seed")]
    pub seed_amplitude: f64,
    #[serde(default = "one")]
    pub max_amplitude: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub path: String,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { path: default_out(), format: default_format() }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_method() -> MethodChoice {
    MethodChoice::Hybrid
}
fn default_m() -> usize {
    128
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200
}
fn default_newton_iter() -> usize {
    50
}
fn default_route() -> RouteChoice {
    RouteChoice::Auto
}
fn default_quadrature() -> QuadratureChoice {
    QuadratureChoice::Trapezoid
}
fn default_points() -> usize {
    100
}
fn default_step() -> f64 {
    0.05
}
fn default_max_points() -> usize {
    400
}
fn default_corrector_tol() -> f64 {
    1e-9
}
fn default_qp_points() -> usize {
    20
}
fn default_kmax() -> i32 {
    3
}
fn default_tail() -> f64 {
    1e-3
}
fn default_seed() -> f64 {
    1e-3
}
fn default_out() -> String {
    "ssr_out.csv".into()
}
fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg = parse_str(&text, &base)?;
    let problems = cfg.violations(None);
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(problems))
    }
}

/// Parses without validation; matrix paths resolve against `base_dir`.
pub fn parse_str(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.base_dir = base_dir.to_path_buf();
    Ok(cfg)
}

fn check(out: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        out.push(msg());
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn check_range(out: &mut Vec<String>, name: &str, start: f64, end: f64) {
    check(out, positive(start) && positive(end), || format!("{name}: frequencies must be positive, got {start} and {end}"));
    check(out, start != end, || format!("{name}: start and end frequency coincide ({start})"));
}

impl RunConfig {
    /// Echo with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Number of degrees of freedom, when it can be known without reading files.
    fn declared_dofs(&self) -> Option<usize> {
        match &self.system {
            SystemConfig::TwoDof { .. } => Some(2),
            SystemConfig::Chain { n, .. } => Some(*n),
            SystemConfig::Matrices { mass, .. } => match mass {
                MatrixSource::Inline(rows) => Some(rows.len()),
                MatrixSource::Path(p) => crate::mtx::read_matrix_market(&self.resolve(p)).ok().map(|m| m.nrows()),
            },
        }
    }

    /// Every violated constraint; `command` adds the requirements of one subcommand.
    pub fn violations(&self, command: Option<Command>) -> Vec<String> {
        let mut v = Vec::new();
        match &self.system {
            SystemConfig::TwoDof { m, k, c, nonlinearity } => {
                check(&mut v, positive(*m) && positive(*k), || format!("system: m and k must be positive, got m={m}, k={k}"));
                check(&mut v, c.is_finite() && *c >= 0.0, || format!("system: c must be non-negative, got {c}"));
                match nonlinearity {
                    NonlinearityConfig::Cubic { dof, .. } | NonlinearityConfig::Play { dof, .. } => {
                        check(&mut v, *dof == 0, || format!("system: the two-dof model carries its nonlinearity on dof 0, got {dof}"))
                    }
                    NonlinearityConfig::None => {}
                }
            }
            SystemConfig::Chain { n, m, k, c, kappa } => {
                check(&mut v, *n >= 2, || format!("system: chain needs n >= 2, got {n}"));
                check(&mut v, positive(*m) && positive(*k), || format!("system: m and k must be positive, got m={m}, k={k}"));
                check(&mut v, c.is_finite() && *c >= 0.0, || format!("system: c must be non-negative, got {c}"));
                check(&mut v, kappa.is_finite(), || format!("system: kappa must be finite, got {kappa}"));
            }
            SystemConfig::Matrices { mass, damping, stiffness, nonlinearity } => {
                let mut sizes = Vec::new();
                for (name, src) in [("mass", mass), ("damping", damping), ("stiffness", stiffness)] {
                    match src {
                        MatrixSource::Path(p) => {
                            let full = self.resolve(p);
                            if !full.is_file() {
                                v.push(format!("system.{name}: file not found: {}", full.display()));
                                continue;
                            }
                            match crate::mtx::read_matrix_market(&full) {
                                Ok(a) => sizes.push((name, a.nrows(), a.ncols())),
                                Err(e) => v.push(format!("system.{name}: {e}")),
                            }
                        }
                        MatrixSource::Inline(rows) => {
                            let r = rows.len();
                            if rows.iter().any(|row| row.len() != r) {
                                v.push(format!("system.{name}: inline matrix must be square with {r} entries per row"));
                            } else {
                                sizes.push((name, r, r));
                            }
                        }
                    }
                }
                for (name, r, c) in &sizes {
                    check(&mut v, r == c && *r > 0, || format!("system.{name}: matrix must be square and non-empty, got {r}x{c}"));
                }
                if let Some((_, n0, _)) = sizes.first() {
                    for (name, r, _) in &sizes[1..] {
                        check(&mut v, r == n0, || format!("system.{name}: size {r} differs from mass size {n0}"));
                    }
                    match nonlinearity {
                        NonlinearityConfig::Cubic { dof, .. } | NonlinearityConfig::Play { dof, .. } => {
                            check(&mut v, dof < n0, || format!("system.nonlinearity: dof {dof} out of range for {n0} dofs"))
                        }
                        NonlinearityConfig::None => {}
                    }
                }
            }
        }
        let nl = match &self.system {
            SystemConfig::TwoDof { nonlinearity, .. } | SystemConfig::Matrices { nonlinearity, .. } => Some(nonlinearity),
            SystemConfig::Chain { .. } => None,
        };
        if let Some(NonlinearityConfig::Play { beta, .. }) = nl {
            check(&mut v, positive(*beta), || format!("system.nonlinearity: play width beta must be positive, got {beta}"));
        }

        let s = &self.solver;
        check(&mut v, s.m >= 8, || format!("solver.m must be at least 8, got {}", s.m));
        check(&mut v, positive(s.tol), || format!("solver.tol must be positive, got {}", s.tol));
        check(&mut v, s.max_iter >= 1, || "solver.max_iter must be at least 1".into());
        check(&mut v, s.newton_max_iter >= 1, || "solver.newton_max_iter must be at least 1".into());

        let forced = !matches!(command, Some(Command::Backbone));
        if forced && command.is_some() {
            if let Some(n) = self.declared_dofs() {
                check(&mut v, self.forcing.amplitudes.len() == n, || {
                    format!("forcing.amplitudes must list {n} values, got {}", self.forcing.amplitudes.len())
                });
            }
        }
        check(&mut v, self.forcing.amplitudes.iter().all(|a| a.is_finite()), || "forcing.amplitudes must be finite".into());
        if let Some(w) = self.forcing.omega {
            check(&mut v, positive(w), || format!("forcing.omega must be positive, got {w}"));
        }

        if let Some(sw) = &self.sweep {
            check_range(&mut v, "sweep", sw.omega_start, sw.omega_end);
            check(&mut v, sw.points >= 2, || format!("sweep.points must be at least 2, got {}", sw.points));
        }
        if let Some(c) = &self.continuation {
            check_range(&mut v, "continuation", c.omega_start, c.omega_end);
            check(&mut v, positive(c.step), || format!("continuation.step must be positive, got {}", c.step));
            check(&mut v, positive(c.tol), || format!("continuation.tol must be positive, got {}", c.tol));
            check(&mut v, c.max_points >= 2, || "continuation.max_points must be at least 2".into());
        }
        if let Some(q) = &self.qp {
            check_range(&mut v, "qp.omega1", q.omega1[0], q.omega1[1]);
            check_range(&mut v, "qp.omega2", q.omega2[0], q.omega2[1]);
            check(&mut v, q.points1 >= 1 && q.points2 >= 1, || "qp.points1 and qp.points2 must be at least 1".into());
            check(&mut v, q.kmax >= 1, || format!("qp.kmax must be at least 1, got {}", q.kmax));
            check(&mut v, positive(q.tail_tol), || format!("qp.tail_tol must be positive, got {}", q.tail_tol));
        }
        if let Some(b) = &self.backbone {
            check(&mut v, positive(b.seed_amplitude), || "backbone.seed_amplitude must be positive".into());
            check(&mut v, b.max_amplitude > b.seed_amplitude, || "backbone.max_amplitude must exceed the seed amplitude".into());
            check(&mut v, positive(b.step), || format!("backbone.step must be positive, got {}", b.step));
            if let Some(n) = self.declared_dofs() {
                check(&mut v, b.phase_dof < n, || format!("backbone.phase_dof {} out of range for {n} dofs", b.phase_dof));
                check(&mut v, b.mode < n, || format!("backbone.mode {} out of range for {n} dofs", b.mode));
            }
        }

        match command {
            Some(Command::Solve) => check(&mut v, self.forcing.omega.is_some(), || "solve needs forcing.omega".into()),
            Some(Command::Sweep) => check(&mut v, self.sweep.is_some(), || "sweep needs a [sweep] section".into()),
            Some(Command::Continue) => {
                check(&mut v, self.continuation.is_some(), || "continue needs a [continuation] section".into())
            }
            Some(Command::QpSweep) => check(&mut v, self.qp.is_some(), || "qp-sweep needs a [qp] section".into()),
            Some(Command::Backbone) => check(&mut v, self.backbone.is_some(), || "backbone needs a [backbone] section".into()),
            None => {}
        }
        v
    }
}
