//! Frequency sweeps, pseudo-arc-length continuation in the period and backbone continuation of
//! conservative systems through a fictitious damping parameter.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::discretization::{
    assemble_convolution_operator, assemble_period_derivative, modal_weights, operator_from_weights, Basis,
    CirculantOperator, Quadrature, WeightKind,
};
use crate::error::{Result, SsrError};
use crate::forcing::ForcingSpec;
use crate::kernels::KernelKind;
use crate::linalg::{solve_dense, sup_norm};
use crate::model::{modal_decompose_second_order, MechanicalSystem, ModalBasisSecondOrder};
use crate::newton::{hybrid_solve, newton_solve, Budgets};
use crate::picard::{run_picard, trace_error, Status};
use crate::problem::{
    ForcingContract, Method, PeriodicProblem, PeriodicSolution, ResidualProblem, Route, SolveMeta,
};

/// A corrected point may sit at most this many step lengths from its predecessor.
const MAX_DISTANCE_RATIO: f64 = 2.0;
/// Minimum cosine between consecutive tangents.
const MIN_TANGENT_COS: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    Picard,
    Newton,
    #[default]
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub solver: SolverChoice,
    pub tol: f64,
    pub budgets: Budgets,
    /// Start each point from the previous converged solution instead of zero.
    pub warm_start: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { solver: SolverChoice::Hybrid, tol: 1e-8, budgets: Budgets::default(), warm_start: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSettings {
    /// Arc-length step in the combined norm.
    pub step: f64,
    /// Residual tolerance of the corrector (sup norm over nodes).
    pub tol: f64,
    pub max_points: usize,
    pub corrector_iter: usize,
    pub max_halvings: usize,
}

impl Default for BranchSettings {
    fn default() -> Self {
        Self { step: 0.05, tol: 1e-9, max_points: 400, corrector_iter: 12, max_halvings: 6 }
    }
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    /// None for a failed sweep point.
    pub solution: Option<PeriodicSolution>,
    pub period: f64,
    /// Fictitious damping parameter on backbone branches.
    pub damping: Option<f64>,
    /// Unit tangent in the scaled combined space (state block first, then the parameters).
    pub tangent: Option<Vec<f64>>,
    pub arc_param: f64,
    pub fold: bool,
    pub failed: bool,
}

impl BranchPoint {
    pub fn frequency(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn amplitude(&self, dof: usize) -> Option<f64> {
        self.solution.as_ref().map(|s| s.amplitude(dof))
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationBranch {
    pub points: Vec<BranchPoint>,
    pub settings: BranchSettings,
    /// Why the branch ended early, if it did.
    pub stop_reason: Option<String>,
}

impl ContinuationBranch {
    pub fn folds(&self) -> usize {
        self.points.iter().filter(|p| p.fold).count()
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.failed).count()
    }
}

fn solve_with(problem: &PeriodicProblem, z0: &[f64], s: &SweepSettings) -> Result<(Vec<f64>, SolveMeta)> {
    match s.solver {
        SolverChoice::Picard => {
            let run = run_picard(problem, z0, s.tol, s.budgets.picard);
            if run.trace.status != Status::Converged {
                return Err(trace_error(&run.trace));
            }
            let meta = SolveMeta { method: Method::Picard, iterations: run.trace.iterations, residual: run.trace.last() };
            Ok((run.z, meta))
        }
        SolverChoice::Newton => {
            let (z, trace) = newton_solve(problem, z0, s.tol, s.budgets.newton)?;
            Ok((z, SolveMeta { method: Method::Newton, iterations: trace.iterations, residual: trace.last() }))
        }
        SolverChoice::Hybrid => {
            let out = hybrid_solve(problem, z0, s.tol, s.budgets)?;
            let meta = SolveMeta { method: out.method, iterations: out.trace.iterations, residual: out.trace.last() };
            Ok((out.z, meta))
        }
    }
}

/// Solves at each frequency in `omegas` (monotone), warm-starting from the last converged point.
/// Failed points are flagged and the sweep goes on.
pub fn sequential_sweep(base: &PeriodicProblem, omegas: &[f64], settings: &SweepSettings) -> Result<ContinuationBranch> {
    let increasing = omegas.windows(2).all(|w| w[1] > w[0]);
    let decreasing = omegas.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) || omegas.iter().any(|w| !(*w > 0.0)) {
        return Err(SsrError::Discretization("sweep frequencies must be positive and strictly monotone".into()));
    }
    let m = base.grid.m as f64;
    let mut points = Vec::with_capacity(omegas.len());
    let mut last: Option<(Vec<f64>, f64)> = None;
    let mut arc = 0.0;
    for &omega in omegas {
        let period = 2.0 * PI / omega;
        let problem = base.at_frequency(omega)?;
        let zero = vec![0.0; problem.len()];
        let z0 = match (&last, settings.warm_start) {
            (Some((z, _)), true) => z.as_slice(),
            _ => zero.as_slice(),
        };
        match solve_with(&problem, z0, settings) {
            Ok((z, meta)) => {
                if let Some((zp, tp)) = &last {
                    let ds: f64 = z.iter().zip(zp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m;
                    let dt = (period - tp) / period;
                    arc += (ds + dt * dt).sqrt();
                }
                points.push(BranchPoint {
                    solution: Some(problem.solution(z.clone(), meta)),
                    period,
                    damping: None,
                    tangent: None,
                    arc_param: arc,
                    fold: false,
                    failed: false,
                });
                last = Some((z, period));
            }
            Err(_) => points.push(BranchPoint {
                solution: None,
                period,
                damping: None,
                tangent: None,
                arc_param: arc,
                fold: false,
                failed: true,
            }),
        }
    }
    Ok(ContinuationBranch { points, settings: BranchSettings::default(), stop_reason: None })
}

/// dN/dT of the residual N(z, T) = z - W(T)(F - R(z)) at fixed unit-circle nodes.
pub fn jacobian_wrt_t(problem: &PeriodicProblem, z: &[f64]) -> Result<Vec<f64>> {
    problem.residual_period_derivative(z)
}

/// A square-minus-one nonlinear system N(u) = 0 with n unknowns and n - 1 equations.
pub trait Family {
    fn unknowns(&self) -> usize;
    /// Residual, and the (n-1) x n Jacobian when requested.
    fn evaluate(&self, u: &[f64], jacobian: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)>;
    /// Metric scaling w such that the combined norm of du is |w * du|.
    fn weights(&self, u: &[f64]) -> Vec<f64>;
    /// Index of the period in u.
    fn period_index(&self) -> usize;
}

/// Unit null vector of J diag(1/w), oriented by `reference` (scaled coordinates).
pub fn branch_tangent(jac: &DMatrix<f64>, weights: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    let n = jac.ncols();
    let mut a = DMatrix::zeros(n, n);
    for c in 0..n {
        for r in 0..n - 1 {
            a[(r, c)] = jac[(r, c)] / weights[c];
        }
        a[(n - 1, c)] = reference[c];
    }
    let mut e = DVector::zeros(n);
    e[n - 1] = 1.0;
    let tau = solve_dense(a, &e)
        .map_err(|_| SsrError::BranchPoint("bordered tangent system is singular (corank above one)".into()))?;
    let norm = tau.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(SsrError::BranchPoint("degenerate tangent".into()));
    }
    let mut t: Vec<f64> = tau.iter().map(|v| v / norm).collect();
    let dot: f64 = t.iter().zip(reference).map(|(a, b)| a * b).sum();
    if dot < 0.0 {
        t.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(t)
}

/// Result of one predictor-corrector step.
#[derive(Debug, Clone)]
pub struct Step {
    pub u: Vec<f64>,
    pub tangent: Vec<f64>,
    pub step: f64,
    pub halvings: usize,
}

fn correct<F: Family + ?Sized>(
    family: &F,
    u0: &[f64],
    t0: &[f64],
    w0: &[f64],
    dp: f64,
    settings: &BranchSettings,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = u0.len();
    let mut u: Vec<f64> = (0..n).map(|i| u0[i] + dp * t0[i] / w0[i]).collect();
    for _ in 0..=settings.corrector_iter {
        let (r, jac) = family.evaluate(&u, true)?;
        let jac = jac.ok_or_else(|| SsrError::Internal("family returned no Jacobian".into()))?;
        let c: f64 = (0..n).map(|i| w0[i] * (u[i] - u0[i]) * t0[i]).sum::<f64>() - dp;
        let rn = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !rn.is_finite() {
            break;
        }
        if rn <= settings.tol && c.abs() <= 1e-10 * (1.0 + dp.abs()) {
            return Ok((u, jac));
        }
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n - 1, n)).copy_from(&jac);
        for i in 0..n {
            a[(n - 1, i)] = w0[i] * t0[i];
        }
        let mut rhs = DVector::zeros(n);
        for i in 0..n - 1 {
            rhs[i] = -r[i];
        }
        rhs[n - 1] = -c;
        let du = solve_dense(a, &rhs)?;
        u.iter_mut().zip(du.iter()).for_each(|(a, b)| *a += b);
    }
    Err(SsrError::Diverged { iterations: settings.corrector_iter })
}

/// One pseudo-arc-length step from (u0, t0): solves {N(u) = 0, <w0 (u - u0), t0> = dp} with the
/// bordered Jacobian, halving dp on failure.
pub fn pseudo_arclength_step<F: Family + ?Sized>(
    family: &F,
    u0: &[f64],
    t0: &[f64],
    dp: f64,
    settings: &BranchSettings,
) -> Result<Step> {
    let w0 = family.weights(u0);
    let mut h = dp;
    for halvings in 0..=settings.max_halvings {
        if let Ok((u, jac)) = correct(family, u0, t0, &w0, h, settings) {
            let w = family.weights(&u);
            // orient against the previous tangent expressed in the new scaling
            let reference: Vec<f64> = (0..u.len()).map(|i| t0[i] / w0[i] * w[i]).collect();
            if let Ok(tangent) = branch_tangent(&jac, &w, &reference) {
                // reject corrector jumps to another part of the branch and sharp turns
                let dist = combined_distance(&w0, &u, u0);
                let rn = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
                let cos = tangent.iter().zip(&reference).map(|(a, b)| a * b).sum::<f64>() / rn;
                if dist <= MAX_DISTANCE_RATIO * h.abs() && cos >= MIN_TANGENT_COS {
                    return Ok(Step { u, tangent, step: h, halvings });
                }
            }
        }
        h *= 0.5;
    }
    Err(SsrError::StepFailed { halvings: settings.max_halvings })
}

fn combined_distance(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), s)| (s * (x - y)).powi(2)).sum::<f64>().sqrt()
}

/// Drives pseudo-arc-length steps from a corrected start point until `stop` says so,
/// the point budget is spent or a step fails. Returns points as (u, tangent, arc, fold).
fn trace_branch<F, S>(
    family: &F,
    u_start: Vec<f64>,
    t_start: Vec<f64>,
    settings: &BranchSettings,
    mut stop: S,
) -> (Vec<(Vec<f64>, Vec<f64>, f64, bool)>, Option<String>)
where
    F: Family + ?Sized,
    S: FnMut(&[f64]) -> bool,
{
    let k = family.period_index();
    let mut out = vec![(u_start, t_start, 0.0, false)];
    let mut h = settings.step;
    let mut accepts = 0;
    while out.len() < settings.max_points {
        let (u0, t0, arc0, _) = out.last().unwrap().clone();
        match pseudo_arclength_step(family, &u0, &t0, h, settings) {
            Ok(s) => {
                let fold = s.tangent[k].signum() != t0[k].signum() && t0[k] != 0.0;
                let arc = arc0 + combined_distance(&family.weights(&u0), &s.u, &u0);
                let done = stop(&s.u);
                out.push((s.u, s.tangent, arc, fold));
                if s.halvings > 0 {
                    h = s.step;
                    accepts = 0;
                } else {
                    accepts += 1;
                    if accepts >= 3 {
                        h = (h * 1.3).min(settings.step);
                        accepts = 0;
                    }
                }
                if done {
                    return (out, None);
                }
            }
            Err(e) => return (out, Some(e.to_string())),
        }
    }
    (out, Some("point budget exhausted".into()))
}

/// Forced periodic family with unknowns (z, T).
pub struct ForcedFamily {
    pub base: PeriodicProblem,
}

impl ForcedFamily {
    fn problem(&self, period: f64) -> Result<PeriodicProblem> {
        self.base.at_period(period)
    }
}

impl Family for ForcedFamily {
    fn unknowns(&self) -> usize {
        self.base.len() + 1
    }

    fn evaluate(&self, u: &[f64], jacobian: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        let n = self.base.len();
        let period = u[n];
        if !(period > 0.0) || !period.is_finite() {
            return Err(SsrError::Discretization(format!("invalid period {period}")));
        }
        let p = self.problem(period)?;
        let z = &u[..n];
        let r = p.residual(z);
        if !jacobian {
            return Ok((r, None));
        }
        let mut jac = DMatrix::zeros(n, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&p.newton_matrix(z));
        let dt = jacobian_wrt_t(&p, z)?;
        for i in 0..n {
            jac[(i, n)] = dt[i];
        }
        Ok((r, Some(jac)))
    }

    fn weights(&self, u: &[f64]) -> Vec<f64> {
        let n = self.base.len();
        let mut w = vec![1.0 / (self.base.grid.m as f64).sqrt(); n + 1];
        w[n] = 1.0 / u[n];
        w
    }

    fn period_index(&self) -> usize {
        self.base.len()
    }
}

/// Pseudo-arc-length continuation in the forcing frequency from `omega_start` towards
/// `omega_end`; stops once the branch leaves the interval between them.
pub fn continue_branch(
    base: &PeriodicProblem,
    omega_start: f64,
    omega_end: f64,
    z0: Option<&[f64]>,
    sweep: &SweepSettings,
    settings: &BranchSettings,
) -> Result<ContinuationBranch> {
    if !(omega_start > 0.0 && omega_end > 0.0) || omega_start == omega_end {
        return Err(SsrError::Discretization("continuation needs two distinct positive frequencies".into()));
    }
    let start = base.at_frequency(omega_start)?;
    let zero = vec![0.0; start.len()];
    let (z, _) = solve_with(&start, z0.unwrap_or(&zero), sweep)?;
    let family = ForcedFamily { base: start.clone() };
    let n = start.len();
    let mut u = z;
    u.push(2.0 * PI / omega_start);
    let (_, jac) = family.evaluate(&u, true)?;
    let w = family.weights(&u);
    let mut reference = vec![0.0; n + 1];
    // increasing frequency means decreasing period
    reference[n] = if omega_end > omega_start { -1.0 } else { 1.0 };
    let tangent = branch_tangent(&jac.unwrap(), &w, &reference)?;
    let (lo, hi) = (omega_start.min(omega_end), omega_start.max(omega_end));
    let stop = |u: &[f64]| {
        let omega = 2.0 * PI / u[n];
        omega < lo || omega > hi
    };
    let (raw, stop_reason) = trace_branch(&family, u, tangent, settings, stop);
    let mut points = Vec::with_capacity(raw.len());
    for (u, t, arc, fold) in raw {
        let period = u[n];
        let p = family.problem(period)?;
        let r = sup_norm(&p.residual(&u[..n]), p.point_dim());
        let meta = SolveMeta { method: Method::Newton, iterations: 0, residual: r };
        points.push(BranchPoint {
            solution: Some(p.solution(u[..n].to_vec(), meta)),
            period,
            damping: None,
            tangent: Some(t),
            arc_param: arc,
            fold,
            failed: false,
        });
    }
    Ok(ContinuationBranch { points, settings: *settings, stop_reason })
}

/// Conservative system with fictitious damping d K x' and a phase condition x'_k(0) = 0;
/// unknowns (x samples, T, d).
pub struct BackboneFamily {
    pub system: MechanicalSystem,
    pub modes: ModalBasisSecondOrder,
    pub m: usize,
    pub quadrature: Quadrature,
    pub phase_dof: usize,
}

struct BackboneOps {
    problem: PeriodicProblem,
    velocity: CirculantOperator,
}

impl BackboneFamily {
    pub fn new(system: &MechanicalSystem, phase_dof: usize, m: usize, quadrature: Quadrature) -> Result<Self> {
        if system.damping.iter().any(|v| *v != 0.0) {
            return Err(SsrError::Model("backbone continuation needs an undamped system".into()));
        }
        if phase_dof >= system.n() {
            return Err(SsrError::Model(format!("phase dof {phase_dof} out of range")));
        }
        if !system.position_only() {
            return Err(SsrError::Model("backbone continuation needs a velocity-independent nonlinearity".into()));
        }
        let modes = modal_decompose_second_order(system)?;
        Ok(Self { system: system.clone(), modes, m, quadrature, phase_dof })
    }

    fn basis(&self, d: f64) -> Basis {
        let zeta: Vec<f64> = self.modes.omega0().iter().map(|w| 0.5 * d * w).collect();
        Basis::Second(self.modes.with_zeta(&zeta))
    }

    fn ops(&self, period: f64, d: f64) -> Result<BackboneOps> {
        if !(period > 0.0) || !period.is_finite() || !d.is_finite() {
            return Err(SsrError::Discretization(format!("invalid backbone parameters T={period}, d={d}")));
        }
        let basis = self.basis(d);
        let forcing = ForcingSpec::zero(self.system.n(), vec![2.0 * PI / period]);
        let problem = PeriodicProblem::with_basis(
            &self.system,
            Route::Position,
            basis.clone(),
            &forcing,
            period,
            self.m,
            self.quadrature,
            ForcingContract::PhaseLocked,
        )?;
        let velocity = assemble_convolution_operator(&basis, &problem.grid, KernelKind::J, self.quadrature)?;
        Ok(BackboneOps { problem, velocity })
    }

    /// Operator derivative with respect to d through zeta_j = d w0_j / 2.
    fn damping_derivative(&self, ops: &BackboneOps, kernel: KernelKind) -> Result<CirculantOperator> {
        let basis = &ops.problem.basis;
        let mut w = modal_weights(basis, &ops.problem.grid, kernel, self.quadrature, WeightKind::DampingDerivative)?;
        for (wj, w0) in w.iter_mut().zip(self.modes.omega0()) {
            wj.iter_mut().for_each(|c| *c *= 0.5 * w0);
        }
        Ok(operator_from_weights(basis, &w, vec![self.m]))
    }

    /// Nodal velocities of a position solution at parameters (T, d).
    pub fn velocities(&self, x: &[f64], period: f64, d: f64) -> Result<Vec<f64>> {
        let ops = self.ops(period, d)?;
        Ok(ops.velocity.apply(&ops.problem.load(x)))
    }

    /// Total energy 1/2 v'Mv + 1/2 x'Kx + V(x) at every node.
    pub fn energy(&self, x: &[f64], period: f64, d: f64) -> Result<Vec<f64>> {
        let v = self.velocities(x, period, d)?;
        let n = self.system.n();
        let mut out = Vec::with_capacity(self.m);
        for (xp, vp) in x.chunks(n).zip(v.chunks(n)) {
            let xv = DVector::from_column_slice(xp);
            let vv = DVector::from_column_slice(vp);
            let pot = self
                .system
                .nonlinearity
                .potential(xp)
                .ok_or_else(|| SsrError::Model("nonlinearity has no potential".into()))?;
            out.push(0.5 * vv.dot(&(&self.system.mass * &vv)) + 0.5 * xv.dot(&(&self.system.stiffness * &xv)) + pot);
        }
        Ok(out)
    }

    /// Residual (N, phase) and optionally the Jacobian in (x, T, d), plus the extra row
    /// x_k(0) - a used by the seed corrector when `seed_amplitude` is set.
    fn eval_full(
        &self,
        u: &[f64],
        jacobian: bool,
        seed_amplitude: Option<f64>,
    ) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        let nx = self.m * self.system.n();
        let (period, d) = (u[nx], u[nx + 1]);
        let ops = self.ops(period, d)?;
        let x = &u[..nx];
        let k = self.phase_dof;
        let load = ops.problem.load(x);
        let mut r = ops.problem.residual(x);
        r.push(ops.velocity.apply(&load)[k]);
        if let Some(a) = seed_amplitude {
            r.push(x[k] - a);
        }
        if !jacobian {
            return Ok((r, None));
        }
        let rows = r.len();
        let mut jac = DMatrix::zeros(rows, nx + 2);
        jac.view_mut((0, 0), (nx, nx)).copy_from(&ops.problem.newton_matrix(x));
        let dt = ops.problem.residual_period_derivative(x)?;
        let ld = self.damping_derivative(&ops, KernelKind::L)?.apply(&load);
        for i in 0..nx {
            jac[(i, nx)] = dt[i];
            jac[(i, nx + 1)] = -ld[i];
        }
        // phase row: v_k(0) = sum_q Jblock(-q)[k, :] load_q
        let n = self.system.n();
        let m = self.m;
        for q in 0..m {
            let b = &ops.velocity.blocks()[(m - q) % m];
            let ds = ops.problem.dr(&x[q * n..(q + 1) * n]);
            let row = -(b.row(k) * ds);
            for c in 0..n {
                jac[(nx, q * n + c)] = row[c];
            }
        }
        let jt = assemble_period_derivative(&ops.problem.basis, &ops.problem.grid, KernelKind::J, self.quadrature)?;
        jac[(nx, nx)] = jt.apply(&load)[k];
        jac[(nx, nx + 1)] = self.damping_derivative(&ops, KernelKind::J)?.apply(&load)[k];
        if seed_amplitude.is_some() {
            jac[(nx + 1, k)] = 1.0;
        }
        Ok((r, Some(jac)))
    }

    /// Small-amplitude seed on mode `mode`: an ellipse of amplitude `a` in dof k with the period
    /// corrected by the first-harmonic projection of the nonlinearity.
    pub fn seed(&self, mode: usize, a: f64) -> Result<Vec<f64>> {
        let n = self.system.n();
        let k = self.phase_dof;
        let phi = self.modes.u.column(mode);
        if phi[k].abs() < 1e-12 {
            return Err(SsrError::SeedRejected(format!("mode {mode} has a node at dof {k}")));
        }
        let w0 = self.modes.modes[mode].omega0;
        let scale = a / phi[k];
        let mut x = vec![0.0; self.m * n];
        let mut s = vec![0.0; n];
        let mut s1 = 0.0;
        for j in 0..self.m {
            let c = (2.0 * PI * j as f64 / self.m as f64).cos();
            for i in 0..n {
                x[j * n + i] = scale * phi[i] * c;
            }
            self.system.nonlinearity.eval(&x[j * n..(j + 1) * n], &vec![0.0; n], &mut s);
            s1 += 2.0 / self.m as f64 * c * (0..n).map(|i| phi[i] * s[i]).sum::<f64>();
        }
        let w2 = w0 * w0 + s1 / scale;
        if !(w2 > 0.0) {
            return Err(SsrError::SeedRejected("softening pushes the seed frequency below zero".into()));
        }
        let mut period = 2.0 * PI / w2.sqrt();
        // the undamped kernel is singular exactly at resonance
        if ((period * w0 / (2.0 * PI)) - 1.0).abs() < 1e-12 {
            period *= 1.0 - 1e-9;
        }
        x.push(period);
        x.push(0.0);
        Ok(x)
    }

    /// Newton on the seed with the amplitude row x_k(0) = a appended.
    pub fn correct_seed(&self, u0: &[f64], a: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let mut u = u0.to_vec();
        for _ in 0..=max_iter {
            let (r, jac) = self.eval_full(&u, true, Some(a))?;
            let rn = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if !rn.is_finite() {
                return Err(SsrError::SeedRejected("non-finite residual".into()));
            }
            if rn <= tol {
                return Ok(u);
            }
            let rhs = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
            let du = solve_dense(jac.unwrap(), &rhs).map_err(|e| SsrError::SeedRejected(e.to_string()))?;
            u.iter_mut().zip(du.iter()).for_each(|(a, b)| *a += b);
        }
        Err(SsrError::SeedRejected(format!("corrector did not converge in {max_iter} iterations")))
    }
}

impl Family for BackboneFamily {
    fn unknowns(&self) -> usize {
        self.m * self.system.n() + 2
    }

    fn evaluate(&self, u: &[f64], jacobian: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        self.eval_full(u, jacobian, None)
    }

    fn weights(&self, u: &[f64]) -> Vec<f64> {
        let nx = self.m * self.system.n();
        let mut w = vec![1.0 / (self.m as f64).sqrt(); nx + 2];
        w[nx] = 1.0 / u[nx];
        w[nx + 1] = 1.0;
        w
    }

    fn period_index(&self) -> usize {
        self.m * self.system.n()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneSettings {
    pub mode: usize,
    pub seed_amplitude: f64,
    pub m: usize,
    pub quadrature: Quadrature,
    /// Stop once the phase dof amplitude exceeds this.
    pub max_amplitude: f64,
    pub branch: BranchSettings,
}

impl Default for BackboneSettings {
    fn default() -> Self {
        Self {
            mode: 0,
            seed_amplitude: 1e-3,
            m: 128,
            quadrature: Quadrature::Spectral,
            max_amplitude: 1.0,
            branch: BranchSettings::default(),
        }
    }
}

/// Backbone of mode `settings.mode` of an undamped, unforced system, from the linear seed
/// upwards in amplitude.
pub fn backbone_continue(
    system: &MechanicalSystem,
    phase_dof: usize,
    settings: &BackboneSettings,
) -> Result<ContinuationBranch> {
    let family = BackboneFamily::new(system, phase_dof, settings.m, settings.quadrature)?;
    let seed = family.seed(settings.mode, settings.seed_amplitude)?;
    let u0 = family.correct_seed(&seed, settings.seed_amplitude, settings.branch.tol, 30)?;
    let nx = settings.m * system.n();
    let (_, jac) = family.evaluate(&u0, true)?;
    let w = family.weights(&u0);
    // grow the amplitude of the seed shape
    let reference: Vec<f64> = u0.iter().zip(&w).enumerate().map(|(i, (v, s))| if i < nx { v * s } else { 0.0 }).collect();
    let tangent = branch_tangent(&jac.unwrap(), &w, &reference)?;
    let n = system.n();
    let stop = |u: &[f64]| {
        let amp = (0..settings.m).fold(0.0f64, |a, j| a.max(u[j * n + phase_dof].abs()));
        amp > settings.max_amplitude
    };
    let (raw, stop_reason) = trace_branch(&family, u0, tangent, &settings.branch, stop);
    let mut points = Vec::with_capacity(raw.len());
    for (u, t, arc, fold) in raw {
        let (period, d) = (u[nx], u[nx + 1]);
        let ops = family.ops(period, d)?;
        let r = sup_norm(&ops.problem.residual(&u[..nx]), n);
        let meta = SolveMeta { method: Method::Newton, iterations: 0, residual: r };
        points.push(BranchPoint {
            solution: Some(ops.problem.solution(u[..nx].to_vec(), meta)),
            period,
            damping: Some(d),
            tangent: Some(t),
            arc_param: arc,
            fold,
            failed: false,
        });
    }
    Ok(ContinuationBranch { points, settings: settings.branch, stop_reason })
}
