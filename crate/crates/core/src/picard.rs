//! Picard successive approximation and the a-priori convergence certificate.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::fourier::{FourierSolution, FrequencyIndexSet, TorusGrid};
use crate::discretization::{modal_weights, Basis, WeightKind};
use crate::error::{Result, SsrError};
use crate::forcing::ForcingSpec;
use crate::kernels::{gamma_t, h_max, sup_amp_factor_position, KernelKind};
use crate::linalg::{sup_diff, sup_norm};
use crate::model::MechanicalSystem;
use crate::problem::{
    Method, PeriodicProblem, PeriodicSolution, QuasiPeriodicProblem, ResidualProblem, Route, SolveMeta,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Diverged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Picard: sup-norm steps ||z_{l+1} - z_l||. Newton: residual sup-norms, starting at z0.
    pub residual_norms: Vec<f64>,
    pub status: Status,
    /// Picard counts map applications, excluding the final confirming one when an earlier
    /// application was needed; Newton counts linear solves.
    pub iterations: usize,
}

impl IterationTrace {
    pub fn last(&self) -> f64 {
        self.residual_norms.last().copied().unwrap_or(f64::NAN)
    }
}

/// Outcome of a Picard run including the iterate with the smallest step.
#[derive(Debug, Clone)]
pub struct PicardRun {
    pub z: Vec<f64>,
    pub best: Vec<f64>,
    pub trace: IterationTrace,
}

pub fn run_picard<P: ResidualProblem + ?Sized>(p: &P, z0: &[f64], tol: f64, max_iter: usize) -> PicardRun {
    let d = p.point_dim();
    let mut z = z0.to_vec();
    let mut best = z.clone();
    let mut min_step = f64::INFINITY;
    let mut norms = Vec::new();
    for app in 1..=max_iter.max(1) {
        let zn = p.map(&z);
        let step = sup_diff(&zn, &z, d);
        norms.push(step);
        let finite = step.is_finite() && zn.iter().all(|v| v.is_finite());
        if !finite || step > 1e6 * min_step {
            return PicardRun {
                z: zn,
                best,
                trace: IterationTrace { residual_norms: norms, status: Status::Diverged, iterations: app },
            };
        }
        if step < min_step {
            min_step = step;
            best = zn.clone();
        }
        z = zn;
        if step <= tol {
            let iterations = if app > 1 { app - 1 } else { 1 };
            return PicardRun {
                z,
                best,
                trace: IterationTrace { residual_norms: norms, status: Status::Converged, iterations },
            };
        }
    }
    PicardRun {
        z,
        best,
        trace: IterationTrace { residual_norms: norms, status: Status::MaxIter, iterations: max_iter },
    }
}

pub(crate) fn trace_error(trace: &IterationTrace) -> SsrError {
    match trace.status {
        Status::Diverged => SsrError::Diverged { iterations: trace.iterations },
        _ => SsrError::MaxIter { iterations: trace.iterations, last: trace.last() },
    }
}

fn periodic_picard(
    problem: &PeriodicProblem,
    z0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(PeriodicSolution, IterationTrace)> {
    let zero = vec![0.0; problem.len()];
    let z0 = z0.unwrap_or(&zero);
    if z0.len() != problem.len() {
        return Err(SsrError::Discretization("initial guess has the wrong length".into()));
    }
    let run = run_picard(problem, z0, tol, max_iter);
    if run.trace.status != Status::Converged {
        return Err(trace_error(&run.trace));
    }
    let meta = SolveMeta { method: Method::Picard, iterations: run.trace.iterations, residual: run.trace.last() };
    Ok((problem.solution(run.z, meta), run.trace))
}

/// Picard iteration for the periodic problem on the first-order (full-state) route.
pub fn picard_periodic(
    problem: &PeriodicProblem,
    z0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(PeriodicSolution, IterationTrace)> {
    if problem.route() != Route::Full {
        return Err(SsrError::Internal("picard_periodic expects the full-state route".into()));
    }
    periodic_picard(problem, z0, tol, max_iter)
}

/// Picard iteration on displacements only, for proportionally damped position-dependent systems.
pub fn picard_periodic_reduced(
    problem: &PeriodicProblem,
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(PeriodicSolution, IterationTrace)> {
    if problem.route() != Route::Position {
        return Err(SsrError::Internal("picard_periodic_reduced expects the position route".into()));
    }
    periodic_picard(problem, x0, tol, max_iter)
}

/// Index-set policy for quasi-periodic runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiPeriodicSettings {
    pub route: Route,
    /// Initial box half-width |kappa_i| <= kmax.
    pub kmax: i32,
    /// Grow the box until the relative tail norm is below `tail_tol`.
    pub adaptive: bool,
    pub tail_tol: f64,
    pub kmax_limit: i32,
    /// Torus nodes per angle; defaults to 2 kmax + 2.
    pub torus_n: Option<usize>,
}

impl Default for QuasiPeriodicSettings {
    fn default() -> Self {
        Self { route: Route::Position, kmax: 3, adaptive: true, tail_tol: 1e-3, kmax_limit: 15, torus_n: None }
    }
}

impl QuasiPeriodicSettings {
    pub fn torus(&self, kmax: i32, k: usize) -> TorusGrid {
        let n = match self.torus_n {
            Some(n) if kmax == self.kmax => n,
            _ => 2 * kmax as usize + 2,
        };
        TorusGrid { k, n }
    }
}

/// Relative norm of the coefficients in the outer two shells of a box index set.
pub fn fourier_tail(u: &FourierSolution) -> f64 {
    let kmax = u.index_set.max_abs();
    let mut tail = 0.0;
    let mut total = 0.0;
    for (kappa, c) in u.index_set.indices.iter().zip(&u.coeffs) {
        let e = c.norm_squared();
        total += e;
        if kappa.iter().map(|v| v.abs()).max().unwrap_or(0) >= kmax - 1 {
            tail += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (tail / total).sqrt()
    }
}

pub(crate) fn project_guess(problem: &QuasiPeriodicProblem, u0: Option<&FourierSolution>) -> Result<Vec<f64>> {
    let len = problem.len();
    match u0 {
        None => Ok(vec![0.0; len]),
        Some(u) => {
            let mut coeffs = Vec::new();
            for kappa in &problem.index_set.indices {
                coeffs.push(match u.index_set.position(kappa) {
                    Some(i) => u.coeffs[i].clone(),
                    None => DVector::zeros(problem.point_dim()),
                });
            }
            let full = FourierSolution { index_set: problem.index_set.clone(), coeffs, torus: problem.torus };
            full.samples(&problem.torus)
        }
    }
}

/// Picard iteration in the Fourier-Galerkin form on a torus grid, growing the index set
/// adaptively when requested.
pub fn picard_quasiperiodic(
    system: &MechanicalSystem,
    basis: &Basis,
    forcing: &ForcingSpec,
    settings: &QuasiPeriodicSettings,
    u0: Option<&FourierSolution>,
    tol: f64,
    max_iter: usize,
) -> Result<(FourierSolution, IterationTrace)> {
    let k = forcing.k();
    let mut kmax = settings.kmax;
    let mut guess = u0.cloned();
    let mut norms = Vec::new();
    let mut iterations = 0;
    loop {
        let set = FrequencyIndexSet::box_set(forcing.omegas.clone(), kmax)?;
        let problem =
            QuasiPeriodicProblem::new(system, settings.route, basis.clone(), forcing, set, settings.torus(kmax, k))?;
        let z0 = project_guess(&problem, guess.as_ref())?;
        let run = run_picard(&problem, &z0, tol, max_iter);
        norms.extend_from_slice(&run.trace.residual_norms);
        iterations += run.trace.iterations;
        let trace = IterationTrace { residual_norms: norms.clone(), status: run.trace.status, iterations };
        if run.trace.status != Status::Converged {
            return Err(trace_error(&trace));
        }
        let u = problem.to_fourier(&run.z)?;
        if !settings.adaptive || kmax >= settings.kmax_limit || fourier_tail(&u) <= settings.tail_tol {
            return Ok((u, trace));
        }
        kmax += 2;
        guess = Some(u);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCertificate {
    /// Gamma(T) for periodic runs, the amplification supremum for quasi-periodic runs.
    pub gamma_or_hmax: f64,
    pub cond_product: f64,
    pub lipschitz_estimate: f64,
    pub delta: f64,
    pub a: f64,
    pub initial_error_norm: f64,
    pub contraction_ok: bool,
    pub ball_ok: bool,
    /// The same tests without the factor 2 of the contraction estimate.
    pub theorem_contraction_ok: bool,
    pub theorem_ball_ok: bool,
}

impl ConvergenceCertificate {
    pub fn satisfied(&self) -> bool {
        self.contraction_ok && self.ball_ok
    }

    pub fn contraction_constant(&self) -> f64 {
        2.0 * self.cond_product * self.lipschitz_estimate * self.gamma_or_hmax
    }
}

/// Fills the certificate from its ingredients.
pub fn certify(
    gamma_or_hmax: f64,
    cond_product: f64,
    lipschitz_estimate: f64,
    initial_error_norm: f64,
    delta: f64,
    a: f64,
) -> ConvergenceCertificate {
    let q = cond_product * lipschitz_estimate * gamma_or_hmax;
    let ball = |k: f64| k < 1.0 && delta >= initial_error_norm / (1.0 - k);
    ConvergenceCertificate {
        gamma_or_hmax,
        cond_product,
        lipschitz_estimate,
        delta,
        a,
        initial_error_norm,
        contraction_ok: 2.0 * q < 1.0 / a,
        ball_ok: ball(2.0 * q),
        theorem_contraction_ok: q < 1.0 / a,
        theorem_ball_ok: ball(q),
    }
}

/// Max finite-difference slope of S over `samples` random pairs in the ball of radius `radius`
/// around `center` (displacement then velocity arguments), times a safety factor 1.2.
pub fn sampled_lipschitz(system: &MechanicalSystem, center_x: &[f64], radius: f64, samples: usize, seed: u64) -> f64 {
    let n = system.n();
    let nl = system.nonlinearity.as_ref();
    let vel = !nl.position_only();
    let dim = if vel { 2 * n } else { n };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= 1.0 && r > 0.0 {
                return p.iter().enumerate().map(|(i, v)| v * radius + if i < n { center_x[i] } else { 0.0 }).collect();
            }
        }
    };
    let zero = vec![0.0; n];
    let mut sa = vec![0.0; n];
    let mut sb = vec![0.0; n];
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let a = point(&mut rng);
        let b = point(&mut rng);
        let (va, vb) = if vel { (&a[n..], &b[n..]) } else { (&zero[..], &zero[..]) };
        nl.eval(&a[..n], va, &mut sa);
        nl.eval(&b[..n], vb, &mut sb);
        let num: f64 = sa.iter().zip(&sb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let den: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    1.2 * best
}

/// Lipschitz constant of S over the ball: analytic when the nonlinearity provides one.
pub fn lipschitz_over_ball(system: &MechanicalSystem, center_radius: f64, delta: f64) -> f64 {
    let r = center_radius + delta;
    match system.nonlinearity.lipschitz_bound(r) {
        Some(l) => l,
        None => sampled_lipschitz(system, &vec![0.0; system.n()], r, 1000, 7),
    }
}

/// Discrete kernel bound sum_r max_j |w_j[r]| of an assembled periodic operator.
pub fn discrete_kernel_bound(problem: &PeriodicProblem) -> Result<f64> {
    let kernel = match problem.route() {
        Route::Full => KernelKind::G,
        Route::Position => KernelKind::L,
    };
    let w = modal_weights(&problem.basis, &problem.grid, kernel, problem.quadrature, WeightKind::Value)?;
    let m = problem.grid.m;
    Ok((0..m).map(|r| w.iter().map(|wj| wj[r].norm()).fold(0.0, f64::max)).sum())
}

fn auto_delta(initial_error: f64, a: f64, center: f64) -> f64 {
    let d = a * initial_error / (a - 1.0);
    if d > 0.0 {
        d
    } else {
        // any positive radius works when z0 is already a fixed point
        1e-12 * (1.0 + center)
    }
}

/// Certificate for Picard from `z0` on a periodic problem. `delta` defaults to a ||E|| / (a - 1).
pub fn certify_periodic(
    problem: &PeriodicProblem,
    z0: Option<&[f64]>,
    delta: Option<f64>,
    a: f64,
) -> Result<ConvergenceCertificate> {
    let d = problem.point_dim();
    let zero = vec![0.0; problem.len()];
    let z0 = z0.unwrap_or(&zero);
    let e = sup_diff(&problem.map(z0), z0, d);
    let center = sup_norm(z0, d);
    let delta = delta.unwrap_or_else(|| auto_delta(e, a, center));
    let gamma = match problem.route() {
        Route::Full => match &problem.basis {
            Basis::First(b) => gamma_t(&b.lambdas, problem.period())?,
            _ => unreachable!(),
        },
        Route::Position => discrete_kernel_bound(problem)?,
    };
    let lip = lipschitz_over_ball(problem.system(), center, delta);
    Ok(certify(gamma, problem.basis.cond_product(), lip, e, delta, a))
}

/// Certificate for Picard from `z0` on a torus problem, using the amplification supremum.
pub fn certify_quasiperiodic(
    problem: &QuasiPeriodicProblem,
    z0: Option<&[f64]>,
    delta: Option<f64>,
    a: f64,
) -> Result<ConvergenceCertificate> {
    let d = problem.point_dim();
    let zero = vec![0.0; problem.len()];
    let z0 = z0.unwrap_or(&zero);
    let e = sup_diff(&problem.map(z0), z0, d);
    let center = sup_norm(z0, d);
    let delta = delta.unwrap_or_else(|| auto_delta(e, a, center));
    let bound = match &problem.basis {
        Basis::First(b) => h_max(&b.lambdas)?,
        Basis::Second(b) => {
            let mut s: f64 = 0.0;
            for m in &b.modes {
                s = s.max(sup_amp_factor_position(m)?);
            }
            s
        }
    };
    let lip = lipschitz_over_ball(problem.system(), center, delta);
    Ok(certify(bound, problem.basis.cond_product(), lip, e, delta, a))
}
