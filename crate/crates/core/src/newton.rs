//! Newton-Raphson on the discretized residual z - W(F - R(z)) and the hybrid Picard/Newton driver.

use nalgebra::DVector;

use crate::discretization::fourier::FourierSolution;
use crate::error::{Result, SsrError};
use crate::linalg::{solve_dense, sup_norm};
use crate::picard::{project_guess, run_picard, trace_error, IterationTrace, Status};
use crate::problem::{Method, PeriodicProblem, PeriodicSolution, QuasiPeriodicProblem, SolveMeta};

pub use crate::problem::ResidualProblem;

/// Residual z - W(F - R(z)) at nodal samples.
pub fn residual_periodic(problem: &PeriodicProblem, z: &[f64]) -> Vec<f64> {
    problem.residual(z)
}

/// Damped Newton: step halving (up to 8 times) whenever the full step increases the residual.
pub fn newton_solve<P: ResidualProblem + ?Sized>(
    p: &P,
    z0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, IterationTrace)> {
    let d = p.point_dim();
    let mut z = z0.to_vec();
    let mut r = p.residual(&z);
    let mut rn = sup_norm(&r, d);
    let mut norms = vec![rn];
    let mut min_norm = rn;
    let mut steps = 0;
    while rn > tol {
        if steps >= max_iter {
            let trace = IterationTrace { residual_norms: norms, status: Status::MaxIter, iterations: steps };
            return Err(trace_error(&trace));
        }
        let jac = p.newton_matrix(&z);
        let rhs = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let mu = solve_dense(jac, &rhs)?;
        let mut lambda = 1.0;
        let mut trial: Vec<f64>;
        let mut tr: Vec<f64>;
        let mut tn: f64;
        let mut halvings = 0;
        loop {
            trial = z.iter().zip(mu.iter()).map(|(a, b)| a + lambda * b).collect();
            tr = p.residual(&trial);
            tn = sup_norm(&tr, d);
            if (tn.is_finite() && tn < rn) || halvings == 8 {
                break;
            }
            lambda *= 0.5;
            halvings += 1;
        }
        steps += 1;
        norms.push(tn);
        if !tn.is_finite() || tn > 1e6 * min_norm.max(tol) {
            let trace = IterationTrace { residual_norms: norms, status: Status::Diverged, iterations: steps };
            return Err(trace_error(&trace));
        }
        min_norm = min_norm.min(tn);
        z = trial;
        r = tr;
        rn = tn;
    }
    Ok((z, IterationTrace { residual_norms: norms, status: Status::Converged, iterations: steps }))
}

pub fn newton_solve_periodic(
    problem: &PeriodicProblem,
    z0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(PeriodicSolution, IterationTrace)> {
    let zero = vec![0.0; problem.len()];
    let z0 = z0.unwrap_or(&zero);
    let (z, trace) = newton_solve(problem, z0, tol, max_iter)?;
    let meta = SolveMeta { method: Method::Newton, iterations: trace.iterations, residual: trace.last() };
    Ok((problem.solution(z, meta), trace))
}

/// Newton on torus samples for a fixed index set.
pub fn newton_solve_quasiperiodic(
    problem: &QuasiPeriodicProblem,
    u0: Option<&FourierSolution>,
    tol: f64,
    max_iter: usize,
) -> Result<(FourierSolution, IterationTrace)> {
    let z0 = project_guess(problem, u0)?;
    let (z, trace) = newton_solve(problem, &z0, tol, max_iter)?;
    Ok((problem.to_fourier(&z)?, trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budgets {
    pub picard: usize,
    pub newton: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { picard: 200, newton: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct HybridOutcome {
    pub z: Vec<f64>,
    pub method: Method,
    /// Trace of the method that produced `z`.
    pub trace: IterationTrace,
    pub picard_trace: IterationTrace,
}

/// Picard within its budget; on failure, Newton from the Picard iterate with the smallest step.
pub fn hybrid_solve<P: ResidualProblem + ?Sized>(p: &P, z0: &[f64], tol: f64, budgets: Budgets) -> Result<HybridOutcome> {
    let run = run_picard(p, z0, tol, budgets.picard);
    if run.trace.status == Status::Converged {
        return Ok(HybridOutcome { z: run.z, method: Method::Picard, trace: run.trace.clone(), picard_trace: run.trace });
    }
    // a diverged Picard run can leave a poor best iterate; fall back to the initial guess then
    let d = p.point_dim();
    let start = if sup_norm(&p.residual(&run.best), d) <= sup_norm(&p.residual(z0), d) { run.best } else { z0.to_vec() };
    match newton_solve(p, &start, tol, budgets.newton) {
        Ok((z, trace)) => Ok(HybridOutcome { z, method: Method::Newton, trace, picard_trace: run.trace }),
        Err(e) => {
            let newton = match e {
                SsrError::MaxIter { iterations, last } => {
                    IterationTrace { residual_norms: vec![last], status: Status::MaxIter, iterations }
                }
                SsrError::Diverged { iterations } => {
                    IterationTrace { residual_norms: vec![], status: Status::Diverged, iterations }
                }
                _ => IterationTrace { residual_norms: vec![], status: Status::Diverged, iterations: 0 },
            };
            Err(SsrError::BothFailed { picard: Box::new(run.trace), newton: Box::new(newton) })
        }
    }
}

pub fn hybrid_solve_periodic(
    problem: &PeriodicProblem,
    z0: Option<&[f64]>,
    tol: f64,
    budgets: Budgets,
) -> Result<(PeriodicSolution, IterationTrace, Method)> {
    let zero = vec![0.0; problem.len()];
    let out = hybrid_solve(problem, z0.unwrap_or(&zero), tol, budgets)?;
    let meta = SolveMeta { method: out.method, iterations: out.trace.iterations, residual: out.trace.last() };
    Ok((problem.solution(out.z, meta), out.trace, out.method))
}
