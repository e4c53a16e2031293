//! Collocation grids, assembled convolution operators and torus Fourier-Galerkin machinery.

pub mod fourier;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Result, SsrError};
use crate::kernels::{
    amp_factor_first_order, amp_factor_position, amp_factor_position_dzeta, damp_factor_first_order,
    damp_factor_position, dgreen_dzeta_h, mode_kernel_h, scalar_first_order, KernelKind,
};
use crate::model::{ModalBasisFirstOrder, ModalBasisSecondOrder};

pub use fourier::{
    galerkin_apply, galerkin_operator, nonlinearity_fourier_coeffs, FourierSolution, FrequencyIndexSet, TorusGrid,
};

/// Uniform grid t_j = j T / m on one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocationGrid {
    pub m: usize,
    pub period: f64,
}

impl CollocationGrid {
    pub fn new(m: usize, period: f64) -> Result<Self> {
        if m < 8 {
            return Err(SsrError::Discretization(format!("grid needs at least 8 nodes, got {m}")));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(SsrError::Discretization(format!("invalid period {period}")));
        }
        Ok(Self { m, period })
    }

    pub fn step(&self) -> f64 {
        self.period / self.m as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.node(j)).collect()
    }
}

/// How the periodic convolution integral is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    /// Trapezoid rule split at the kernel discontinuity (second order in the step).
    #[default]
    SplitTrapezoid,
    /// Exact convolution of the trigonometric interpolant of the nodal data.
    Spectral,
}

/// The modal data a convolution operator is built from.
#[derive(Debug, Clone)]
pub enum Basis {
    First(ModalBasisFirstOrder),
    Second(ModalBasisSecondOrder),
}

impl Basis {
    pub fn modes(&self) -> usize {
        match self {
            Basis::First(b) => b.lambdas.len(),
            Basis::Second(b) => b.modes.len(),
        }
    }

    /// Output and input maps (complex) around the diagonal modal action.
    fn maps(&self) -> (DMatrix<C64>, DMatrix<C64>) {
        match self {
            Basis::First(b) => (b.v.clone(), b.input.clone()),
            Basis::Second(b) => {
                let u = b.u.map(|x| C64::new(x, 0.0));
                (u.clone(), u.transpose())
            }
        }
    }

    /// Constant ||out|| ||in|| entering the convergence certificate.
    pub fn cond_product(&self) -> f64 {
        match self {
            Basis::First(b) => b.input_cond_product,
            Basis::Second(b) => b.cond_product(),
        }
    }
}

/// Block-circulant operator on a periodic grid of arbitrary dimension:
/// (A g)_p = sum_q B_{(p - q) mod shape} g_q with d x d blocks.
#[derive(Debug, Clone)]
pub struct CirculantOperator {
    pub shape: Vec<usize>,
    pub d: usize,
    blocks: Vec<DMatrix<f64>>,
    /// DFT of the block sequence, one d x d matrix per frequency.
    spectrum: Vec<DMatrix<C64>>,
}

/// In-place unnormalized DFT over every axis of a row-major grid (last axis fastest).
pub(crate) fn fft_grid(buf: &mut [C64], shape: &[usize], inverse: bool) {
    let total: usize = shape.iter().product();
    let mut planner = FftPlanner::new();
    let mut stride = total;
    for &n in shape {
        stride /= n;
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let mut line = vec![C64::new(0.0, 0.0); n];
        for outer in 0..total / (n * stride) {
            for inner in 0..stride {
                let start = outer * n * stride + inner;
                for (i, l) in line.iter_mut().enumerate() {
                    *l = buf[start + i * stride];
                }
                fft.process(&mut line);
                for (i, l) in line.iter().enumerate() {
                    buf[start + i * stride] = *l;
                }
            }
        }
    }
}

impl CirculantOperator {
    pub fn new(shape: Vec<usize>, d: usize, blocks: Vec<DMatrix<f64>>) -> Self {
        let np: usize = shape.iter().product();
        assert_eq!(blocks.len(), np, "one block per grid offset");
        let mut spectrum = vec![DMatrix::zeros(d, d); np];
        let mut buf = vec![C64::new(0.0, 0.0); np];
        for r in 0..d {
            for c in 0..d {
                for (b, blk) in buf.iter_mut().zip(&blocks) {
                    *b = C64::new(blk[(r, c)], 0.0);
                }
                fft_grid(&mut buf, &shape, false);
                for (s, b) in spectrum.iter_mut().zip(&buf) {
                    s[(r, c)] = *b;
                }
            }
        }
        Self { shape, d, blocks, spectrum }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn points(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.points() * self.d
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn offset(&self, p: usize, q: usize) -> usize {
        if self.shape.len() == 1 {
            let m = self.shape[0];
            return (p + m - q) % m;
        }
        let mut r = 0;
        let mut stride = 1;
        let (mut p, mut q) = (p, q);
        for &n in self.shape.iter().rev() {
            let (pi, qi) = (p % n, q % n);
            p /= n;
            q /= n;
            r += ((pi + n - qi) % n) * stride;
            stride *= n;
        }
        r
    }

    /// Convolution through the DFT: each frequency is a d x d product.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let np = self.points();
        let d = self.d;
        let zero = C64::new(0.0, 0.0);
        let mut ghat = vec![vec![zero; np]; d];
        for (c, col) in ghat.iter_mut().enumerate() {
            for (p, v) in col.iter_mut().enumerate() {
                *v = C64::new(g[p * d + c], 0.0);
            }
            fft_grid(col, &self.shape, false);
        }
        let mut yhat = vec![vec![zero; np]; d];
        for (k, s) in self.spectrum.iter().enumerate() {
            for c in 0..d {
                let gc = ghat[c][k];
                if gc == zero {
                    continue;
                }
                for (r, y) in yhat.iter_mut().enumerate() {
                    y[k] += s[(r, c)] * gc;
                }
            }
        }
        let mut out = vec![0.0; np * d];
        let scale = 1.0 / np as f64;
        for (r, col) in yhat.iter_mut().enumerate() {
            fft_grid(col, &self.shape, true);
            for (p, v) in col.iter().enumerate() {
                out[p * d + r] = v.re * scale;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let np = self.points();
        let d = self.d;
        let mut a = DMatrix::zeros(np * d, np * d);
        for p in 0..np {
            for q in 0..np {
                a.view_mut((p * d, q * d), (d, d)).copy_from(&self.blocks[self.offset(p, q)]);
            }
        }
        a
    }

    /// Dense A * blockdiag(diag_q).
    pub fn times_blockdiag(&self, diag: &[DMatrix<f64>]) -> DMatrix<f64> {
        let np = self.points();
        let d = self.d;
        let mut a = DMatrix::zeros(np * d, np * d);
        for q in 0..np {
            for p in 0..np {
                let prod = &self.blocks[self.offset(p, q)] * &diag[q];
                a.view_mut((p * d, q * d), (d, d)).copy_from(&prod);
            }
        }
        a
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            d: self.d,
            blocks: self.blocks.iter().map(|b| b * s).collect(),
            spectrum: self.spectrum.iter().map(|b| b * C64::new(s, 0.0)).collect(),
        }
    }
}

/// Which quantity the assembled weights represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Value,
    /// d/dT at fixed unit-circle nodes sigma_j = j/m.
    PeriodDerivative,
    /// d/d(zeta_j) per mode at fixed natural frequency (second-order route only).
    DampingDerivative,
}

fn kernel_mismatch(basis: &Basis, kernel: KernelKind) -> Result<()> {
    match (basis, kernel) {
        (Basis::First(_), KernelKind::G) | (Basis::Second(_), KernelKind::L) | (Basis::Second(_), KernelKind::J) => {
            Ok(())
        }
        _ => Err(SsrError::Discretization(format!("kernel {kernel:?} does not match the modal basis"))),
    }
}

/// Circulant quadrature weights w[mode][r] such that (conv g)_j = sum_r w[r] g_{j-r}.
pub fn modal_weights(
    basis: &Basis,
    grid: &CollocationGrid,
    kernel: KernelKind,
    quadrature: Quadrature,
    kind: WeightKind,
) -> Result<Vec<Vec<C64>>> {
    kernel_mismatch(basis, kernel)?;
    match quadrature {
        Quadrature::SplitTrapezoid => trapezoid_weights(basis, grid, kernel, kind),
        Quadrature::Spectral => spectral_weights(basis, grid, kernel, kind),
    }
}

fn trapezoid_weights(basis: &Basis, grid: &CollocationGrid, kernel: KernelKind, kind: WeightKind) -> Result<Vec<Vec<C64>>> {
    let m = grid.m;
    let period = grid.period;
    let dt = grid.step();
    let mf = m as f64;
    let mut out = Vec::with_capacity(basis.modes());
    match basis {
        Basis::First(b) => {
            if kind == WeightKind::DampingDerivative {
                return Err(SsrError::Discretization("damping derivative needs the second-order route".into()));
            }
            for &lam in &b.lambdas {
                let mut w = vec![C64::new(0.0, 0.0); m];
                for (r, wr) in w.iter_mut().enumerate() {
                    let t = r as f64 * dt;
                    let hs: &[f64] = if r == 0 { &[1.0, 0.0] } else { &[1.0] };
                    let mut acc = C64::new(0.0, 0.0);
                    for &h in hs {
                        let s = scalar_first_order(lam, t, period, h)?;
                        acc += match kind {
                            WeightKind::Value => s.0 * dt,
                            _ => (s.0 + t * lam * s.0 + period * s.1) / mf,
                        };
                    }
                    *wr = acc / hs.len() as f64;
                }
                out.push(w);
            }
        }
        Basis::Second(b) => {
            for mode in &b.modes {
                let mut w = vec![C64::new(0.0, 0.0); m];
                for (r, wr) in w.iter_mut().enumerate() {
                    let t = r as f64 * dt;
                    let hs: &[f64] = if r == 0 { &[1.0, 0.0] } else { &[1.0] };
                    let mut acc = 0.0;
                    for &h in hs {
                        acc += match kind {
                            WeightKind::Value => {
                                let k = mode_kernel_h(mode, t, period, h)?;
                                dt * if kernel == KernelKind::L { k.l } else { k.j }
                            }
                            WeightKind::PeriodDerivative => {
                                let k = mode_kernel_h(mode, t, period, h)?;
                                let w02 = mode.omega0 * mode.omega0;
                                let (v, vt, vp) = if kernel == KernelKind::L {
                                    (k.l, k.j, k.l_t)
                                } else {
                                    (k.j, 2.0 * mode.alpha * k.j - w02 * k.l, k.j_t)
                                };
                                (v + t * vt + period * vp) / mf
                            }
                            WeightKind::DampingDerivative => {
                                let (dl, dj) = dgreen_dzeta_h(mode, t, period, h)?;
                                dt * if kernel == KernelKind::L { dl } else { dj }
                            }
                        };
                    }
                    *wr = C64::new(acc / hs.len() as f64, 0.0);
                }
                out.push(w);
            }
        }
    }
    Ok(out)
}

fn spectral_weights(basis: &Basis, grid: &CollocationGrid, kernel: KernelKind, kind: WeightKind) -> Result<Vec<Vec<C64>>> {
    let m = grid.m;
    let period = grid.period;
    let base = 2.0 * PI / period;
    let kmax = (m as i64 - 1) / 2;
    let mf = m as f64;
    // factor(mode, freq) for the requested kind
    let factor = |j: usize, kappa: i64| -> Result<C64> {
        let w = kappa as f64 * base;
        let iw = C64::new(0.0, w);
        // dw/dT = -w / T
        let dwdt = -w / period;
        match basis {
            Basis::First(b) => {
                let lam = b.lambdas[j];
                match kind {
                    WeightKind::Value => amp_factor_first_order(lam, w),
                    WeightKind::PeriodDerivative => Ok(damp_factor_first_order(lam, w)? * dwdt),
                    WeightKind::DampingDerivative => {
                        Err(SsrError::Discretization("damping derivative needs the second-order route".into()))
                    }
                }
            }
            Basis::Second(b) => {
                let mode = &b.modes[j];
                let vel = if kernel == KernelKind::J { iw } else { C64::new(1.0, 0.0) };
                let dvel = if kernel == KernelKind::J { C64::new(0.0, dwdt) } else { C64::new(0.0, 0.0) };
                match kind {
                    WeightKind::Value => Ok(vel * amp_factor_position(mode, w)?),
                    WeightKind::PeriodDerivative => {
                        Ok(vel * damp_factor_position(mode, w)? * dwdt + dvel * amp_factor_position(mode, w)?)
                    }
                    WeightKind::DampingDerivative => Ok(vel * amp_factor_position_dzeta(mode, w)?),
                }
            }
        }
    };
    let mut out = Vec::with_capacity(basis.modes());
    for j in 0..basis.modes() {
        let mut w = vec![C64::new(0.0, 0.0); m];
        for kappa in -kmax..=kmax {
            let f = factor(j, kappa)?;
            for (r, wr) in w.iter_mut().enumerate() {
                *wr += f * C64::from_polar(1.0, 2.0 * PI * (kappa * r as i64) as f64 / mf) / mf;
            }
        }
        out.push(w);
    }
    Ok(out)
}

/// Builds blocks Re(Out diag(w[.][r]) In) for every offset r.
pub fn operator_from_weights(basis: &Basis, weights: &[Vec<C64>], shape: Vec<usize>) -> CirculantOperator {
    let (out, inp) = basis.maps();
    let d = out.nrows();
    let np: usize = shape.iter().product();
    let modes = basis.modes();
    let blocks = (0..np)
        .map(|r| {
            let mut scaled = inp.clone();
            for j in 0..modes {
                let w = weights[j][r];
                scaled.row_mut(j).iter_mut().for_each(|c| *c *= w);
            }
            (&out * scaled).map(|c| c.re)
        })
        .collect();
    CirculantOperator::new(shape, d, blocks)
}

/// Discrete periodic convolution operator V int G (BV)^{-1}(.) or U int L U^T (.) on the grid.
pub fn assemble_convolution_operator(
    basis: &Basis,
    grid: &CollocationGrid,
    kernel: KernelKind,
    quadrature: Quadrature,
) -> Result<CirculantOperator> {
    let w = modal_weights(basis, grid, kernel, quadrature, WeightKind::Value)?;
    Ok(operator_from_weights(basis, &w, vec![grid.m]))
}

/// Derivative of the assembled operator with respect to the period (unit-circle nodes held fixed).
pub fn assemble_period_derivative(
    basis: &Basis,
    grid: &CollocationGrid,
    kernel: KernelKind,
    quadrature: Quadrature,
) -> Result<CirculantOperator> {
    let w = modal_weights(basis, grid, kernel, quadrature, WeightKind::PeriodDerivative)?;
    Ok(operator_from_weights(basis, &w, vec![grid.m]))
}

/// Least-squares slope of log(error) against log(step).
pub fn observed_order(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Refinement study: solves at each m and measures the error against `reference(t)` (sup norm
/// over nodes) or, when `reference` is None, against the finest grid in `m_list` extended by a
/// factor 4 as a surrogate. Returns (observed order, errors).
pub fn collocation_convergence_study<F, R>(
    m_list: &[usize],
    solve: F,
    reference: Option<R>,
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(usize) -> Result<(CollocationGrid, Vec<f64>, usize)>,
    R: Fn(f64, &mut [f64]),
{
    let mut errors = Vec::new();
    let mut steps = Vec::new();
    let surrogate = match reference {
        Some(_) => None,
        None => {
            let mfine = m_list.iter().max().copied().unwrap_or(8) * 4;
            Some(solve(mfine)?)
        }
    };
    for &m in m_list {
        let (grid, z, d) = solve(m)?;
        let mut err: f64 = 0.0;
        let mut refv = vec![0.0; d];
        for j in 0..m {
            match (&reference, &surrogate) {
                (Some(r), _) => r(grid.node(j), &mut refv),
                (None, Some((fg, fz, _))) => {
                    let ratio = fg.m / m;
                    refv.copy_from_slice(&fz[j * ratio * d..(j * ratio + 1) * d]);
                }
                _ => unreachable!(),
            }
            let e: f64 = z[j * d..(j + 1) * d].iter().zip(&refv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            err = err.max(e);
        }
        errors.push(err);
        steps.push(grid.step());
    }
    if errors.iter().all(|e| *e == 0.0) {
        return Ok((f64::INFINITY, errors));
    }
    Ok((observed_order(&steps, &errors), errors))
}
