//! Subcommand drivers.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use ssr_core::bench::{build_chain, build_two_dof, TwoDofNonlinearity};
use ssr_core::continuation::{
    backbone_continue, continue_branch, sequential_sweep, BackboneSettings, BranchPoint, BranchSettings, ContinuationBranch,
    SolverChoice, SweepSettings,
};
use ssr_core::discretization::fourier::FrequencyIndexSet;
use ssr_core::discretization::Quadrature;
use ssr_core::forcing::ForcingSpec;
use ssr_core::model::{check_proportional_damping, MechanicalSystem};
use ssr_core::newton::{hybrid_solve_periodic, newton_solve_periodic, newton_solve_quasiperiodic, Budgets};
use ssr_core::nonlinear::{CubicSpring, Linear, Nonlinearity, PlaySpring};
use ssr_core::picard::{picard_periodic, picard_periodic_reduced, picard_quasiperiodic, QuasiPeriodicSettings};
use ssr_core::discretization::Basis;
use ssr_core::problem::{basis_for, PeriodicProblem, PeriodicSolution, QuasiPeriodicProblem, Route};
use ssr_core::SsrError;

use crate::config::*;
use crate::mtx::{read_matrix_market, MtxError};
use crate::output::{fmt_f64, sibling, PointSummary, Summary, Table, Timings};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Matrix(#[from] MtxError),
    #[error("solver: {0}")]
    Solver(#[from] SsrError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub method: Option<MethodChoice>,
    pub nt: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.out {
            cfg.output.path = p.to_string_lossy().into_owned();
        }
        if let Some(m) = self.method {
            cfg.solver.method = m;
        }
        if let Some(m) = self.nt {
            cfg.solver.m = m;
        }
        if let Some(t) = self.tol {
            cfg.solver.tol = t;
        }
        if let Some(k) = self.max_iter {
            cfg.solver.max_iter = k;
        }
    }
}

/// Reads, overrides and validates a configuration for one subcommand.
pub fn load(path: &Path, overrides: &Overrides, command: Command) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let mut cfg = parse_str(&text, path.parent().unwrap_or(Path::new("")))?;
    overrides.apply(&mut cfg);
    let v = cfg.violations(Some(command));
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub result: PathBuf,
    pub summary: PathBuf,
    pub warnings: Vec<String>,
    pub rows: usize,
}

fn matrix(cfg: &RunConfig, src: &MatrixSource) -> Result<DMatrix<f64>, RunError> {
    Ok(match src {
        MatrixSource::Path(p) => read_matrix_market(&cfg.resolve(p))?,
        MatrixSource::Inline(rows) => {
            let n = rows.len();
            DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied())
        }
    })
}

pub fn build_system(cfg: &RunConfig) -> Result<MechanicalSystem, RunError> {
    Ok(match &cfg.system {
        SystemConfig::TwoDof { m, k, c, nonlinearity } => {
            let nl = match *nonlinearity {
                NonlinearityConfig::None => TwoDofNonlinearity::None,
                NonlinearityConfig::Cubic { coeff, .. } => TwoDofNonlinearity::Cubic(coeff),
                NonlinearityConfig::Play { alpha, beta, .. } => TwoDofNonlinearity::Play { alpha, beta },
            };
            build_two_dof(*m, *k, *c, nl)?
        }
        SystemConfig::Chain { n, m, k, c, kappa } => build_chain(*n, *m, *k, *c, *kappa)?,
        SystemConfig::Matrices { mass, damping, stiffness, nonlinearity } => {
            let mass = matrix(cfg, mass)?;
            let n = mass.nrows();
            let nl: Arc<dyn Nonlinearity> = match *nonlinearity {
                NonlinearityConfig::None => Arc::new(Linear { n }),
                NonlinearityConfig::Cubic { coeff, dof } => Arc::new(CubicSpring { n, dof, coeff }),
                NonlinearityConfig::Play { alpha, beta, dof } => Arc::new(PlaySpring { n, dof, alpha, beta }),
            };
            MechanicalSystem::new(mass, matrix(cfg, damping)?, matrix(cfg, stiffness)?, nl)?
        }
    })
}

fn route_for(cfg: &RunConfig, sys: &MechanicalSystem) -> Result<Route, RunError> {
    Ok(match cfg.solver.route {
        RouteChoice::Full => Route::Full,
        RouteChoice::Position => Route::Position,
        RouteChoice::Auto => {
            if sys.position_only() && check_proportional_damping(sys)? {
                Route::Position
            } else {
                Route::Full
            }
        }
    })
}

fn quadrature(cfg: &RunConfig) -> Quadrature {
    match cfg.solver.quadrature {
        QuadratureChoice::Trapezoid => Quadrature::SplitTrapezoid,
        QuadratureChoice::Spectral => Quadrature::Spectral,
    }
}

fn budgets(cfg: &RunConfig) -> Budgets {
    Budgets { picard: cfg.solver.max_iter, newton: cfg.solver.newton_max_iter }
}

fn sweep_settings(cfg: &RunConfig, warm_start: bool) -> SweepSettings {
    let solver = match cfg.solver.method {
        MethodChoice::Picard => SolverChoice::Picard,
        MethodChoice::Newton => SolverChoice::Newton,
        MethodChoice::Hybrid => SolverChoice::Hybrid,
    };
    SweepSettings { solver, tol: cfg.solver.tol, budgets: budgets(cfg), warm_start }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn method_name(m: MethodChoice) -> &'static str {
    match m {
        MethodChoice::Picard => "picard",
        MethodChoice::Newton => "newton",
        MethodChoice::Hybrid => "hybrid",
    }
}

fn model_name(cfg: &RunConfig) -> String {
    match &cfg.system {
        SystemConfig::TwoDof { m, k, c, nonlinearity } => format!("two-dof m={m} k={k} c={c} nonlinearity={nonlinearity:?}"),
        SystemConfig::Chain { n, m, k, c, kappa } => format!("chain n={n} m={m} k={k} c={c} kappa={kappa}"),
        SystemConfig::Matrices { nonlinearity, .. } => format!("matrices nonlinearity={nonlinearity:?}"),
    }
}

fn header(table: &mut Table, cfg: &RunConfig, command: Command, route: Option<Route>) {
    table.meta("command", command.name());
    table.meta("model", model_name(cfg));
    if let Some(r) = route {
        table.meta("route", format!("{r:?}").to_lowercase());
    }
    table.meta("method", method_name(cfg.solver.method));
    table.meta("m", cfg.solver.m);
    table.meta("quadrature", format!("{:?}", cfg.solver.quadrature).to_lowercase());
    table.meta("tol", fmt_f64(cfg.solver.tol));
    if command != Command::Backbone {
        let a: Vec<String> = cfg.forcing.amplitudes.iter().map(|v| fmt_f64(*v)).collect();
        table.meta("forcing_amplitudes", format!("[{}]", a.join(" ")));
    }
}

fn sweep_columns(n: usize) -> Vec<String> {
    let mut c = vec!["omega".to_string(), "T".to_string()];
    c.extend((1..=n).map(|i| format!("amp_dof{i}")));
    c.extend(["converged", "method", "iterations", "residual"].map(String::from));
    c
}

fn solution_cells(sol: Option<&PeriodicSolution>, n: usize) -> Vec<String> {
    match sol {
        Some(s) => {
            let mut r: Vec<String> = s.amplitudes().into_iter().map(fmt_f64).collect();
            r.extend([
                "true".to_string(),
                s.meta.method.to_string(),
                s.meta.iterations.to_string(),
                fmt_f64(s.meta.residual),
            ]);
            r
        }
        None => {
            let mut r = vec![fmt_f64(f64::NAN); n];
            r.extend(["false", "none", "0"].map(String::from));
            r.push(fmt_f64(f64::NAN));
            r
        }
    }
}

fn point_row(p: &BranchPoint, n: usize) -> Vec<String> {
    let mut r = vec![fmt_f64(p.frequency()), fmt_f64(p.period)];
    r.extend(solution_cells(p.solution.as_ref(), n));
    r
}

fn point_summary(index: usize, p: &BranchPoint) -> PointSummary {
    let meta = p.solution.as_ref().map(|s| s.meta);
    PointSummary {
        index,
        omega: vec![p.frequency()],
        converged: meta.is_some(),
        method: meta.map(|m| m.method.to_string()).unwrap_or_else(|| "none".into()),
        iterations: meta.map(|m| m.iterations).unwrap_or(0),
        residual: meta.map(|m| m.residual).unwrap_or(f64::NAN),
    }
}

/// Sign of the period component of the branch tangent.
fn tangent_t_sign(p: &BranchPoint) -> i32 {
    let idx = p.solution.as_ref().map(|s| s.samples.len());
    match (p.tangent.as_ref(), idx) {
        (Some(t), Some(i)) if i < t.len() => {
            if t[i] > 0.0 {
                1
            } else if t[i] < 0.0 {
                -1
            } else {
                0
            }
        }
        _ => 0,
    }
}

fn branch_table(branch: &ContinuationBranch, n: usize, backbone: bool) -> Table {
    let mut cols = sweep_columns(n);
    cols.extend(["arc_param", "tangent_T_sign", "fold"].map(String::from));
    if backbone {
        cols.push("damping".into());
    }
    let mut t = Table::new(cols);
    for p in &branch.points {
        let mut r = point_row(p, n);
        r.extend([fmt_f64(p.arc_param), tangent_t_sign(p).to_string(), p.fold.to_string()]);
        if backbone {
            r.push(fmt_f64(p.damping.unwrap_or(f64::NAN)));
        }
        t.push(r);
    }
    t
}

struct Emitted {
    table: Table,
    points: Vec<PointSummary>,
    warnings: Vec<String>,
    per_point: Vec<f64>,
}

fn base_problem(cfg: &RunConfig, sys: &MechanicalSystem, route: Route, omega: f64) -> Result<PeriodicProblem, RunError> {
    let forcing = ForcingSpec::harmonic_sine(&cfg.forcing.amplitudes, omega)?;
    Ok(PeriodicProblem::new(sys, route, &forcing, 2.0 * PI / omega, cfg.solver.m, quadrature(cfg))?)
}

fn run_solve(cfg: &RunConfig, sys: &MechanicalSystem, out: &Path) -> Result<Emitted, RunError> {
    let route = route_for(cfg, sys)?;
    let omega = cfg.forcing.omega.expect("validated");
    let p = base_problem(cfg, sys, route, omega)?;
    let tol = cfg.solver.tol;
    let (s, _) = match cfg.solver.method {
        MethodChoice::Picard if route == Route::Full => picard_periodic(&p, None, tol, cfg.solver.max_iter)?,
        MethodChoice::Picard => picard_periodic_reduced(&p, None, tol, cfg.solver.max_iter)?,
        MethodChoice::Newton => newton_solve_periodic(&p, None, tol, cfg.solver.newton_max_iter)?,
        MethodChoice::Hybrid => {
            let (s, trace, _) = hybrid_solve_periodic(&p, None, tol, budgets(cfg))?;
            (s, trace)
        }
    };
    let n = sys.n();
    let mut table = Table::new(sweep_columns(n));
    header(&mut table, cfg, Command::Solve, Some(route));
    let mut row = vec![fmt_f64(omega), fmt_f64(p.period())];
    row.extend(solution_cells(Some(&s), n));
    table.push(row);

    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    let mut samples = Table::new(cols);
    header(&mut samples, cfg, Command::Solve, Some(route));
    samples.meta("omega", fmt_f64(omega));
    let x = s.positions();
    for (j, xs) in x.chunks(n).enumerate() {
        let mut r = vec![fmt_f64(s.grid.node(j))];
        r.extend(xs.iter().map(|v| fmt_f64(*v)));
        samples.push(r);
    }
    samples.write(&sibling(out, "samples.csv"))?;

    let point = PointSummary {
        index: 0,
        omega: vec![omega],
        converged: true,
        method: s.meta.method.to_string(),
        iterations: s.meta.iterations,
        residual: s.meta.residual,
    };
    Ok(Emitted { table, points: vec![point], warnings: Vec::new(), per_point: Vec::new() })
}

fn failure_warning(branch: &ContinuationBranch) -> Vec<String> {
    let mut w = Vec::new();
    if branch.failures() > 0 {
        let at: Vec<String> = branch.points.iter().filter(|p| p.failed).map(|p| format!("{:.6}", p.frequency())).collect();
        w.push(format!("{} of {} points failed to converge (omega = {})", branch.failures(), branch.points.len(), at.join(", ")));
    }
    if let Some(r) = &branch.stop_reason {
        w.push(format!("branch stopped early: {r}"));
    }
    w
}

fn run_sweep(cfg: &RunConfig, sys: &MechanicalSystem) -> Result<Emitted, RunError> {
    let sw = cfg.sweep.as_ref().expect("validated");
    let route = route_for(cfg, sys)?;
    let omegas = linspace(sw.omega_start, sw.omega_end, sw.points);
    let base = base_problem(cfg, sys, route, omegas[0])?;
    let branch = sequential_sweep(&base, &omegas, &sweep_settings(cfg, sw.warm_start))?;
    let n = sys.n();
    let mut table = Table::new(sweep_columns(n));
    header(&mut table, cfg, Command::Sweep, Some(route));
    for p in &branch.points {
        table.push(point_row(p, n));
    }
    let points = branch.points.iter().enumerate().map(|(i, p)| point_summary(i, p)).collect();
    Ok(Emitted { table, points, warnings: failure_warning(&branch), per_point: Vec::new() })
}

fn run_continue(cfg: &RunConfig, sys: &MechanicalSystem) -> Result<Emitted, RunError> {
    let c = cfg.continuation.as_ref().expect("validated");
    let route = route_for(cfg, sys)?;
    let base = base_problem(cfg, sys, route, c.omega_start)?;
    let settings = BranchSettings { step: c.step, tol: c.tol, max_points: c.max_points, ..Default::default() };
    let branch = continue_branch(&base, c.omega_start, c.omega_end, None, &sweep_settings(cfg, true), &settings)?;
    let mut table = branch_table(&branch, sys.n(), false);
    header(&mut table, cfg, Command::Continue, Some(route));
    table.meta("folds", branch.folds());
    let points = branch.points.iter().enumerate().map(|(i, p)| point_summary(i, p)).collect();
    Ok(Emitted { table, points, warnings: failure_warning(&branch), per_point: Vec::new() })
}

fn run_backbone(cfg: &RunConfig, sys: &MechanicalSystem) -> Result<Emitted, RunError> {
    let b = cfg.backbone.as_ref().expect("validated");
    let settings = BackboneSettings {
        mode: b.mode,
        seed_amplitude: b.seed_amplitude,
        m: cfg.solver.m,
        quadrature: quadrature(cfg),
        max_amplitude: b.max_amplitude,
        branch: BranchSettings { step: b.step, tol: cfg.solver.tol, max_points: b.max_points, ..Default::default() },
    };
    let branch = backbone_continue(sys, b.phase_dof, &settings)?;
    let mut table = branch_table(&branch, sys.n(), true);
    header(&mut table, cfg, Command::Backbone, Some(Route::Full));
    table.meta("mode", b.mode);
    table.meta("phase_dof", b.phase_dof);
    let points = branch.points.iter().enumerate().map(|(i, p)| point_summary(i, p)).collect();
    Ok(Emitted { table, points, warnings: failure_warning(&branch), per_point: Vec::new() })
}

struct QpOutcome {
    max_amp: f64,
    converged: bool,
    method: &'static str,
    iterations: usize,
    residual: f64,
    seconds: f64,
}

fn qp_point(cfg: &RunConfig, sys: &MechanicalSystem, basis: &Basis, route: Route, w1: f64, w2: f64) -> Result<QpOutcome, RunError> {
    let q = cfg.qp.as_ref().expect("validated");
    let start = Instant::now();
    let forcing = ForcingSpec::multi_sine(&cfg.forcing.amplitudes, vec![w1, w2])?;
    let settings = QuasiPeriodicSettings { route, kmax: q.kmax, adaptive: q.adaptive, tail_tol: q.tail_tol, ..Default::default() };
    let tol = cfg.solver.tol;
    let n = sys.n();
    let dofs: Vec<usize> = match route {
        Route::Full => (n..2 * n).collect(),
        Route::Position => (0..n).collect(),
    };
    let newton = || -> Result<_, SsrError> {
        let set = FrequencyIndexSet::box_set(forcing.omegas.clone(), q.kmax)?;
        let problem = QuasiPeriodicProblem::new(sys, route, basis.clone(), &forcing, set, settings.torus(q.kmax, 2))?;
        newton_solve_quasiperiodic(&problem, None, tol, cfg.solver.newton_max_iter)
    };
    let picard = || picard_quasiperiodic(sys, basis, &forcing, &settings, None, tol, cfg.solver.max_iter);
    let (result, method) = match cfg.solver.method {
        MethodChoice::Picard => (picard(), "picard"),
        MethodChoice::Newton => (newton(), "newton"),
        MethodChoice::Hybrid => match picard() {
            Ok(r) => (Ok(r), "picard"),
            Err(_) => (newton(), "newton"),
        },
    };
    Ok(match result {
        Ok((u, trace)) => QpOutcome {
            max_amp: u.max_abs(&dofs, 32)?,
            converged: true,
            method,
            iterations: trace.iterations,
            residual: trace.last(),
            seconds: start.elapsed().as_secs_f64(),
        },
        Err(_) => QpOutcome {
            max_amp: f64::NAN,
            converged: false,
            method: "none",
            iterations: 0,
            residual: f64::NAN,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}

fn run_qp(cfg: &RunConfig, sys: &MechanicalSystem, jobs: usize) -> Result<Emitted, RunError> {
    let q = cfg.qp.as_ref().expect("validated");
    let route = route_for(cfg, sys)?;
    let basis = basis_for(sys, route)?;
    let w1 = linspace(q.omega1[0], q.omega1[1], q.points1);
    let w2 = linspace(q.omega2[0], q.omega2[1], q.points2);
    let grid: Vec<(f64, f64)> = w1.iter().flat_map(|a| w2.iter().map(move |b| (*a, *b))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(std::io::Error::other)?;
    // collect keeps grid order regardless of completion order
    let outcomes: Vec<Result<QpOutcome, RunError>> =
        pool.install(|| grid.par_iter().map(|&(a, b)| qp_point(cfg, sys, &basis, route, a, b)).collect());

    let cols = ["omega1", "omega2", "max_amp", "converged", "method", "iterations", "residual"];
    let mut table = Table::new(cols.map(String::from).to_vec());
    header(&mut table, cfg, Command::QpSweep, Some(route));
    table.meta("kmax", q.kmax);
    table.meta("adaptive", q.adaptive);
    let mut points = Vec::new();
    let mut per_point = Vec::new();
    let mut failed = 0;
    for (i, (o, &(a, b))) in outcomes.into_iter().zip(&grid).enumerate() {
        let o = o?;
        if !o.converged {
            failed += 1;
        }
        table.push(vec![
            fmt_f64(a),
            fmt_f64(b),
            fmt_f64(o.max_amp),
            o.converged.to_string(),
            o.method.to_string(),
            o.iterations.to_string(),
            fmt_f64(o.residual),
        ]);
        points.push(PointSummary {
            index: i,
            omega: vec![a, b],
            converged: o.converged,
            method: o.method.to_string(),
            iterations: o.iterations,
            residual: o.residual,
        });
        per_point.push(o.seconds);
    }
    let warnings =
        if failed > 0 { vec![format!("{failed} of {} grid points failed to converge", grid.len())] } else { Vec::new() };
    Ok(Emitted { table, points, warnings, per_point })
}

/// Runs one subcommand and writes the result CSV and its summary next to it.
pub fn run_command(cfg: &RunConfig, command: Command, jobs: usize) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let sys = build_system(cfg)?;
    let out = PathBuf::from(&cfg.output.path);
    let emitted = match command {
        Command::Solve => run_solve(cfg, &sys, &out)?,
        Command::Sweep => run_sweep(cfg, &sys)?,
        Command::Continue => run_continue(cfg, &sys)?,
        Command::QpSweep => run_qp(cfg, &sys, jobs)?,
        Command::Backbone => run_backbone(cfg, &sys)?,
    };
    emitted.table.write(&out)?;
    let summary_path = sibling(&out, "summary.toml");
    let summary = Summary {
        command: command.name().into(),
        status: if emitted.warnings.is_empty() { "ok".into() } else { "ok-with-warnings".into() },
        result_file: out.display().to_string(),
        warnings: emitted.warnings.clone(),
        timings: Timings { total_s: start.elapsed().as_secs_f64(), per_point_s: emitted.per_point },
        points: emitted.points,
        config: cfg.clone(),
    };
    summary.write(&summary_path)?;
    Ok(RunReport { result: out, summary: summary_path, warnings: emitted.warnings, rows: emitted.table.rows.len() })
}
