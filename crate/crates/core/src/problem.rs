//! Discretized steady-state problems: unknown nodal samples z with fixed-point map
//! z = W (F - R(z)) for an assembled linear response operator W.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;

use crate::discretization::fourier::{FourierSolution, FrequencyIndexSet, TorusGrid};
use crate::discretization::{
    assemble_convolution_operator, assemble_period_derivative, galerkin_operator, Basis, CirculantOperator,
    CollocationGrid, Quadrature,
};
use crate::error::{Result, SsrError};
use crate::forcing::ForcingSpec;
use crate::kernels::KernelKind;
use crate::model::{diagonalize_first_order, lift_to_first_order, modal_decompose_second_order, MechanicalSystem};
use crate::nonlinear::jacobians;

/// Full first-order state z = (x', x) with kernel G, or positions only with kernel L.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Full,
    Position,
}

/// How forcing samples move when the period changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForcingContract {
    /// Forcing frequency follows the period: f sampled at phase 2 pi sigma.
    #[default]
    PhaseLocked,
    /// Forcing is a fixed function of physical time, sampled at sigma T.
    PhysicalTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Picard,
    Newton,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Picard => "picard",
            Method::Newton => "newton",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveMeta {
    pub method: Method,
    pub iterations: usize,
    /// Sup-norm of the last step (Picard) or residual (Newton).
    pub residual: f64,
}

/// Anything with unknown vector z (point-major, `point_dim` values per node) and a
/// fixed-point map z -> W (F - R(z)).
pub trait ResidualProblem: Sync {
    fn len(&self) -> usize;
    fn point_dim(&self) -> usize;
    fn map(&self, z: &[f64]) -> Vec<f64>;
    /// I + W blockdiag(DR(z)), the derivative of the residual z - map(z).
    fn newton_matrix(&self, z: &[f64]) -> DMatrix<f64>;
    fn residual(&self, z: &[f64]) -> Vec<f64> {
        let g = self.map(z);
        z.iter().zip(g).map(|(a, b)| a - b).collect()
    }
}

/// Operator, forcing samples and pointwise nonlinearity shared by periodic and torus problems.
#[derive(Debug, Clone)]
struct GridCore {
    system: MechanicalSystem,
    route: Route,
    operator: CirculantOperator,
    forcing_samples: Vec<f64>,
}

impl GridCore {
    fn d(&self) -> usize {
        self.operator.d
    }

    fn nonlinear(&self, z: &[f64], out: &mut [f64]) {
        let n = self.system.n();
        let nl = self.system.nonlinearity.as_ref();
        match self.route {
            Route::Full => {
                out[..n].fill(0.0);
                nl.eval(&z[n..], &z[..n], &mut out[n..]);
            }
            Route::Position => {
                let zero = vec![0.0; n];
                nl.eval(z, &zero, out);
            }
        }
    }

    fn load(&self, z: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut g = self.forcing_samples.clone();
        if self.system.nonlinearity.is_zero() {
            return g;
        }
        let mut r = vec![0.0; d];
        for (zp, gp) in z.chunks(d).zip(g.chunks_mut(d)) {
            self.nonlinear(zp, &mut r);
            gp.iter_mut().zip(&r).for_each(|(a, b)| *a -= b);
        }
        g
    }

    fn dr(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.system.n();
        let nl = self.system.nonlinearity.as_ref();
        match self.route {
            Route::Full => {
                let (dx, dv) = jacobians(nl, &z[n..], &z[..n]);
                let mut out = DMatrix::zeros(2 * n, 2 * n);
                out.view_mut((n, 0), (n, n)).copy_from(&dv);
                out.view_mut((n, n), (n, n)).copy_from(&dx);
                out
            }
            Route::Position => jacobians(nl, z, &vec![0.0; n]).0,
        }
    }

    fn map(&self, z: &[f64]) -> Vec<f64> {
        self.operator.apply(&self.load(z))
    }

    fn newton_matrix(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.d();
        let len = self.operator.len();
        if self.system.nonlinearity.is_zero() {
            return DMatrix::identity(len, len);
        }
        let diag: Vec<DMatrix<f64>> = z.chunks(d).map(|zp| self.dr(zp)).collect();
        let mut a = self.operator.times_blockdiag(&diag);
        for i in 0..len {
            a[(i, i)] += 1.0;
        }
        a
    }
}

fn build_basis(system: &MechanicalSystem, route: Route) -> Result<Basis> {
    match route {
        Route::Full => Ok(Basis::First(diagonalize_first_order(&lift_to_first_order(system)?)?)),
        Route::Position => {
            if !system.position_only() {
                return Err(SsrError::Model("position route needs a velocity-independent nonlinearity".into()));
            }
            Ok(Basis::Second(modal_decompose_second_order(system)?))
        }
    }
}

fn route_kernel(route: Route) -> KernelKind {
    match route {
        Route::Full => KernelKind::G,
        Route::Position => KernelKind::L,
    }
}

fn embed_forcing(route: Route, f: &[f64], out: &mut [f64]) {
    match route {
        Route::Full => {
            let n = f.len();
            out[..n].fill(0.0);
            out[n..].copy_from_slice(f);
        }
        Route::Position => out.copy_from_slice(f),
    }
}

/// Collocated periodic problem on a grid of m nodes over one period.
#[derive(Debug, Clone)]
pub struct PeriodicProblem {
    pub basis: Basis,
    pub forcing: ForcingSpec,
    pub contract: ForcingContract,
    pub grid: CollocationGrid,
    pub quadrature: Quadrature,
    core: GridCore,
}

impl PeriodicProblem {
    pub fn new(
        system: &MechanicalSystem,
        route: Route,
        forcing: &ForcingSpec,
        period: f64,
        m: usize,
        quadrature: Quadrature,
    ) -> Result<Self> {
        let basis = build_basis(system, route)?;
        Self::with_basis(system, route, basis, forcing, period, m, quadrature, ForcingContract::PhaseLocked)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_basis(
        system: &MechanicalSystem,
        route: Route,
        basis: Basis,
        forcing: &ForcingSpec,
        period: f64,
        m: usize,
        quadrature: Quadrature,
        contract: ForcingContract,
    ) -> Result<Self> {
        if forcing.k() != 1 || forcing.n != system.n() {
            return Err(SsrError::Model("periodic problems need a single-frequency forcing table of matching size".into()));
        }
        match (&basis, route) {
            (Basis::First(_), Route::Full) | (Basis::Second(_), Route::Position) => {}
            _ => return Err(SsrError::Internal("basis does not match route".into())),
        }
        let grid = CollocationGrid::new(m, period)?;
        let operator = assemble_convolution_operator(&basis, &grid, route_kernel(route), quadrature)?;
        let d = operator.d;
        let n = system.n();
        let mut forcing_samples = vec![0.0; m * d];
        let mut f = vec![0.0; n];
        for j in 0..m {
            match contract {
                ForcingContract::PhaseLocked => forcing.eval_torus(&[2.0 * PI * j as f64 / m as f64], &mut f),
                ForcingContract::PhysicalTime => forcing.eval(grid.node(j), &mut f),
            }
            embed_forcing(route, &f, &mut forcing_samples[j * d..(j + 1) * d]);
        }
        Ok(Self {
            basis,
            forcing: forcing.clone(),
            contract,
            grid,
            quadrature,
            core: GridCore { system: system.clone(), route, operator, forcing_samples },
        })
    }

    /// Same system, forcing table and discretization at a different period.
    pub fn at_period(&self, period: f64) -> Result<Self> {
        let forcing = match self.contract {
            ForcingContract::PhaseLocked => self.forcing.with_omegas(vec![2.0 * PI / period]),
            ForcingContract::PhysicalTime => self.forcing.clone(),
        };
        Self::with_basis(
            &self.core.system,
            self.core.route,
            self.basis.clone(),
            &forcing,
            period,
            self.grid.m,
            self.quadrature,
            self.contract,
        )
    }

    /// Forcing at frequency `omega` with the period set to 2 pi / omega, for either contract.
    pub fn at_frequency(&self, omega: f64) -> Result<Self> {
        Self::with_basis(
            &self.core.system,
            self.core.route,
            self.basis.clone(),
            &self.forcing.with_omegas(vec![omega]),
            2.0 * PI / omega,
            self.grid.m,
            self.quadrature,
            self.contract,
        )
    }

    pub fn with_forcing(&self, forcing: &ForcingSpec) -> Result<Self> {
        Self::with_basis(
            &self.core.system,
            self.core.route,
            self.basis.clone(),
            forcing,
            self.grid.period,
            self.grid.m,
            self.quadrature,
            self.contract,
        )
    }

    pub fn system(&self) -> &MechanicalSystem {
        &self.core.system
    }

    pub fn route(&self) -> Route {
        self.core.route
    }

    pub fn period(&self) -> f64 {
        self.grid.period
    }

    pub fn operator(&self) -> &CirculantOperator {
        &self.core.operator
    }

    pub fn forcing_samples(&self) -> &[f64] {
        &self.core.forcing_samples
    }

    /// Nodal load F - R(z).
    pub fn load(&self, z: &[f64]) -> Vec<f64> {
        self.core.load(z)
    }

    /// Pointwise Jacobian DR at one node.
    pub fn dr(&self, zp: &[f64]) -> DMatrix<f64> {
        self.core.dr(zp)
    }

    /// Velocities recovered from position samples through the velocity kernel.
    pub fn velocity(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.core.route {
            Route::Full => {
                let n = self.core.system.n();
                Ok(x.chunks(2 * n).flat_map(|p| p[..n].to_vec()).collect())
            }
            Route::Position => {
                let op = assemble_convolution_operator(&self.basis, &self.grid, KernelKind::J, self.quadrature)?;
                Ok(op.apply(&self.core.load(x)))
            }
        }
    }

    /// Partial derivative of the residual z - W(T)(F(T) - R(z)) with respect to T.
    pub fn residual_period_derivative(&self, z: &[f64]) -> Result<Vec<f64>> {
        let wt = assemble_period_derivative(&self.basis, &self.grid, route_kernel(self.core.route), self.quadrature)?;
        let mut out: Vec<f64> = wt.apply(&self.core.load(z)).into_iter().map(|v| -v).collect();
        if self.contract == ForcingContract::PhysicalTime {
            let n = self.core.system.n();
            let d = self.core.d();
            let m = self.grid.m;
            let mut df = vec![0.0; n];
            let mut ft = vec![0.0; m * d];
            for j in 0..m {
                let t = self.grid.node(j);
                self.forcing.eval_derivative(t, &mut df);
                df.iter_mut().for_each(|v| *v *= t / self.grid.period);
                embed_forcing(self.core.route, &df, &mut ft[j * d..(j + 1) * d]);
            }
            let w = self.core.operator.apply(&ft);
            out.iter_mut().zip(w).for_each(|(a, b)| *a -= b);
        }
        Ok(out)
    }

    pub fn solution(&self, samples: Vec<f64>, meta: SolveMeta) -> PeriodicSolution {
        PeriodicSolution {
            grid: self.grid,
            route: self.core.route,
            n: self.core.system.n(),
            samples,
            meta,
        }
    }
}

impl ResidualProblem for PeriodicProblem {
    fn len(&self) -> usize {
        self.core.operator.len()
    }
    fn point_dim(&self) -> usize {
        self.core.d()
    }
    fn map(&self, z: &[f64]) -> Vec<f64> {
        self.core.map(z)
    }
    fn newton_matrix(&self, z: &[f64]) -> DMatrix<f64> {
        self.core.newton_matrix(z)
    }
}

/// Nodal samples of a periodic response.
#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    pub grid: CollocationGrid,
    pub route: Route,
    pub n: usize,
    /// Point-major samples: z = (x', x) per node on the full route, x on the position route.
    pub samples: Vec<f64>,
    pub meta: SolveMeta,
}

impl PeriodicSolution {
    pub fn period(&self) -> f64 {
        self.grid.period
    }

    pub fn d(&self) -> usize {
        match self.route {
            Route::Full => 2 * self.n,
            Route::Position => self.n,
        }
    }

    /// Displacement history of one degree of freedom.
    pub fn displacement(&self, dof: usize) -> Vec<f64> {
        let off = if self.route == Route::Full { self.n } else { 0 };
        self.samples.chunks(self.d()).map(|p| p[off + dof]).collect()
    }

    pub fn amplitude(&self, dof: usize) -> f64 {
        self.displacement(dof).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.amplitude(i)).collect()
    }

    /// Displacement samples only (point-major, n per node).
    pub fn positions(&self) -> Vec<f64> {
        match self.route {
            Route::Position => self.samples.clone(),
            Route::Full => self.samples.chunks(2 * self.n).flat_map(|p| p[self.n..].to_vec()).collect(),
        }
    }
}

/// Torus-collocated quasi-periodic problem for a fixed frequency index set.
#[derive(Debug, Clone)]
pub struct QuasiPeriodicProblem {
    pub basis: Basis,
    pub forcing: ForcingSpec,
    pub index_set: FrequencyIndexSet,
    pub torus: TorusGrid,
    core: GridCore,
}

impl QuasiPeriodicProblem {
    pub fn new(
        system: &MechanicalSystem,
        route: Route,
        basis: Basis,
        forcing: &ForcingSpec,
        index_set: FrequencyIndexSet,
        torus: TorusGrid,
    ) -> Result<Self> {
        if forcing.k() != index_set.k() || forcing.n != system.n() || forcing.omegas != index_set.omegas {
            return Err(SsrError::Model("forcing table does not match the index set".into()));
        }
        let operator = galerkin_operator(&basis, &index_set, &torus, route_kernel(route))?;
        let d = operator.d;
        let n = system.n();
        let np = torus.points();
        let mut forcing_samples = vec![0.0; np * d];
        let mut f = vec![0.0; n];
        for p in 0..np {
            forcing.eval_torus(&torus.angles(p), &mut f);
            embed_forcing(route, &f, &mut forcing_samples[p * d..(p + 1) * d]);
        }
        Ok(Self {
            basis,
            forcing: forcing.clone(),
            index_set,
            torus,
            core: GridCore { system: system.clone(), route, operator, forcing_samples },
        })
    }

    pub fn basis_for(system: &MechanicalSystem, route: Route) -> Result<Basis> {
        build_basis(system, route)
    }

    pub fn system(&self) -> &MechanicalSystem {
        &self.core.system
    }

    pub fn route(&self) -> Route {
        self.core.route
    }

    pub fn to_fourier(&self, samples: &[f64]) -> Result<FourierSolution> {
        FourierSolution::from_samples(self.index_set.clone(), self.torus, samples, self.core.d())
    }

    pub fn from_fourier(&self, u: &FourierSolution) -> Result<Vec<f64>> {
        u.samples(&self.torus)
    }

    pub fn load(&self, z: &[f64]) -> Vec<f64> {
        self.core.load(z)
    }
}

impl ResidualProblem for QuasiPeriodicProblem {
    fn len(&self) -> usize {
        self.core.operator.len()
    }
    fn point_dim(&self) -> usize {
        self.core.d()
    }
    fn map(&self, z: &[f64]) -> Vec<f64> {
        self.core.map(z)
    }
    fn newton_matrix(&self, z: &[f64]) -> DMatrix<f64> {
        self.core.newton_matrix(z)
    }
}

pub fn basis_for(system: &MechanicalSystem, route: Route) -> Result<Basis> {
    build_basis(system, route)
}
