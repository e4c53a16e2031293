//! Torus grids, discrete Fourier transforms on T^k and the Fourier-Galerkin operator.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64 as C64;

use super::{operator_from_weights, Basis, CirculantOperator};
use crate::error::{Result, SsrError};
use crate::kernels::{amp_factor_first_order, amp_factor_position, KernelKind};

/// Finite symmetric set of integer vectors kappa with their combination frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyIndexSet {
    pub omegas: Vec<f64>,
    pub indices: Vec<Vec<i32>>,
}

impl FrequencyIndexSet {
    pub fn new(omegas: Vec<f64>, indices: Vec<Vec<i32>>) -> Result<Self> {
        let k = omegas.len();
        for kappa in &indices {
            if kappa.len() != k {
                return Err(SsrError::Discretization("index dimension mismatch".into()));
            }
            let neg: Vec<i32> = kappa.iter().map(|v| -v).collect();
            if !indices.contains(&neg) {
                return Err(SsrError::Discretization(format!("index set misses -{kappa:?}")));
            }
            let f: f64 = kappa.iter().zip(&omegas).map(|(a, w)| *a as f64 * w).sum();
            if kappa.iter().any(|v| *v != 0) && f.abs() <= 1e-12 {
                return Err(SsrError::Discretization(format!("combination frequency of {kappa:?} vanishes")));
            }
        }
        Ok(Self { omegas, indices })
    }

    /// All kappa with |kappa_i| <= kmax.
    pub fn box_set(omegas: Vec<f64>, kmax: i32) -> Result<Self> {
        let k = omegas.len();
        let mut indices = vec![vec![]];
        for _ in 0..k {
            let mut next = Vec::new();
            for prefix in &indices {
                for v in -kmax..=kmax {
                    let mut p: Vec<i32> = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            indices = next;
        }
        Self::new(omegas, indices)
    }

    pub fn k(&self) -> usize {
        self.omegas.len()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.indices[i].iter().zip(&self.omegas).map(|(a, w)| *a as f64 * w).sum()
    }

    pub fn period(&self, i: usize) -> f64 {
        2.0 * PI / self.frequency(i)
    }

    pub fn max_abs(&self) -> i32 {
        self.indices.iter().flat_map(|k| k.iter().map(|v| v.abs())).max().unwrap_or(0)
    }

    pub fn position(&self, kappa: &[i32]) -> Option<usize> {
        self.indices.iter().position(|k| k == kappa)
    }
}

/// Uniform grid with `n` nodes per angle on the k-torus, last angle varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    pub k: usize,
    pub n: usize,
}

impl TorusGrid {
    pub fn points(&self) -> usize {
        self.n.pow(self.k as u32)
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.n; self.k]
    }

    pub fn multi_index(&self, mut p: usize) -> Vec<usize> {
        let mut idx = vec![0; self.k];
        for i in (0..self.k).rev() {
            idx[i] = p % self.n;
            p /= self.n;
        }
        idx
    }

    pub fn angles(&self, p: usize) -> Vec<f64> {
        self.multi_index(p).into_iter().map(|i| 2.0 * PI * i as f64 / self.n as f64).collect()
    }

    /// Linear position of frequency kappa in the transform layout.
    pub fn frequency_slot(&self, kappa: &[i32]) -> usize {
        let n = self.n as i64;
        kappa.iter().fold(0usize, |acc, &v| acc * self.n + (v as i64).rem_euclid(n) as usize)
    }

    fn check_floor(&self, set: &FrequencyIndexSet) -> Result<()> {
        let floor = 2 * set.max_abs() as usize + 1;
        if self.n < floor || self.k != set.k() {
            return Err(SsrError::Discretization(format!(
                "torus grid with {} nodes per angle is below the aliasing floor {floor}",
                self.n
            )));
        }
        Ok(())
    }
}

fn fft_nd(buf: &mut [C64], grid: &TorusGrid, inverse: bool) {
    super::fft_grid(buf, &vec![grid.n; grid.k], inverse);
}

/// Per-point d-vectors -> normalized Fourier coefficients c_kappa = N^{-k} sum_p u_p e^{-i<kappa, theta_p>},
/// stored in transform layout.
pub fn torus_forward(grid: &TorusGrid, samples: &[f64], d: usize) -> Vec<Vec<C64>> {
    let np = grid.points();
    let mut out = vec![vec![C64::new(0.0, 0.0); d]; np];
    let mut buf = vec![C64::new(0.0, 0.0); np];
    for c in 0..d {
        for p in 0..np {
            buf[p] = C64::new(samples[p * d + c], 0.0);
        }
        fft_nd(&mut buf, grid, false);
        for p in 0..np {
            out[p][c] = buf[p] / np as f64;
        }
    }
    out
}

/// Inverse of [`torus_forward`], real part of the synthesized samples.
pub fn torus_inverse(grid: &TorusGrid, coeffs: &[Vec<C64>], d: usize) -> Vec<f64> {
    let np = grid.points();
    let mut out = vec![0.0; np * d];
    let mut buf = vec![C64::new(0.0, 0.0); np];
    for c in 0..d {
        for p in 0..np {
            buf[p] = coeffs[p][c];
        }
        fft_nd(&mut buf, grid, true);
        for p in 0..np {
            out[p * d + c] = buf[p].re;
        }
    }
    out
}

/// Torus Fourier coefficients of a real quasi-periodic response.
#[derive(Debug, Clone)]
pub struct FourierSolution {
    pub index_set: FrequencyIndexSet,
    pub coeffs: Vec<DVector<C64>>,
    pub torus: TorusGrid,
}

impl FourierSolution {
    pub fn zeros(index_set: FrequencyIndexSet, d: usize, torus: TorusGrid) -> Self {
        let coeffs = vec![DVector::zeros(d); index_set.len()];
        Self { index_set, coeffs, torus }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.first().map(|c| c.len()).unwrap_or(0)
    }

    pub fn eval(&self, theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (kappa, c) in self.index_set.indices.iter().zip(&self.coeffs) {
            let phase: f64 = kappa.iter().zip(theta).map(|(k, t)| *k as f64 * t).sum();
            let e = C64::from_polar(1.0, phase);
            for (o, v) in out.iter_mut().zip(c.iter()) {
                *o += (v * e).re;
            }
        }
    }

    /// Samples on a torus grid (point-major).
    pub fn samples(&self, grid: &TorusGrid) -> Result<Vec<f64>> {
        grid.check_floor(&self.index_set)?;
        let d = self.dim();
        let mut spec = vec![vec![C64::new(0.0, 0.0); d]; grid.points()];
        for (kappa, c) in self.index_set.indices.iter().zip(&self.coeffs) {
            let slot = grid.frequency_slot(kappa);
            for i in 0..d {
                spec[slot][i] += c[i];
            }
        }
        Ok(torus_inverse(grid, &spec, d))
    }

    /// Projection of torus samples onto an index set.
    pub fn from_samples(index_set: FrequencyIndexSet, grid: TorusGrid, samples: &[f64], d: usize) -> Result<Self> {
        grid.check_floor(&index_set)?;
        let spec = torus_forward(&grid, samples, d);
        let coeffs = index_set
            .indices
            .iter()
            .map(|kappa| DVector::from_vec(spec[grid.frequency_slot(kappa)].clone()))
            .collect();
        Ok(Self { index_set, coeffs, torus: grid })
    }

    /// Maximum |component| over a torus grid with `n` nodes per angle, for the given components.
    pub fn max_abs(&self, components: &[usize], n: usize) -> Result<f64> {
        let grid = TorusGrid { k: self.index_set.k(), n: n.max(2 * self.index_set.max_abs() as usize + 1) };
        let s = self.samples(&grid)?;
        let d = self.dim();
        Ok(s.chunks(d).flat_map(|p| components.iter().map(move |&c| p[c].abs())).fold(0.0, f64::max))
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        self.index_set.indices.iter().zip(&self.coeffs).all(|(kappa, c)| {
            let neg: Vec<i32> = kappa.iter().map(|v| -v).collect();
            match self.index_set.position(&neg) {
                Some(i) => (c - self.coeffs[i].map(|v| v.conj())).norm() <= tol * (1.0 + c.norm()),
                None => false,
            }
        })
    }
}

/// Fourier coefficients of a pointwise map applied to u, by uniform torus quadrature.
pub fn nonlinearity_fourier_coeffs<F>(nl: F, u: &FourierSolution) -> Result<Vec<DVector<C64>>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let grid = u.torus;
    let d = u.dim();
    let samples = u.samples(&grid)?;
    let mut vals = vec![0.0; samples.len()];
    for (s, v) in samples.chunks(d).zip(vals.chunks_mut(d)) {
        nl(s, v);
    }
    Ok(FourierSolution::from_samples(u.index_set.clone(), grid, &vals, d)?.coeffs)
}

fn modal_factor(basis: &Basis, kernel: KernelKind, j: usize, freq: f64) -> Result<C64> {
    match (basis, kernel) {
        (Basis::First(b), KernelKind::G) => amp_factor_first_order(b.lambdas[j], freq),
        (Basis::Second(b), KernelKind::L) => amp_factor_position(&b.modes[j], freq),
        (Basis::Second(b), KernelKind::J) => Ok(C64::new(0.0, freq) * amp_factor_position(&b.modes[j], freq)?),
        _ => Err(SsrError::Discretization(format!("kernel {kernel:?} does not match the modal basis"))),
    }
}

fn resonance_context(e: SsrError, kappa: &[i32]) -> SsrError {
    match e {
        SsrError::Resonance(msg) => SsrError::Resonance(format!("{msg} (kappa = {kappa:?})")),
        other => other,
    }
}

/// Applies the per-frequency linear response Out A(<kappa, Omega>) In to a force table.
pub fn galerkin_apply(basis: &Basis, index_set: &FrequencyIndexSet, force: &[DVector<C64>]) -> Result<Vec<DVector<C64>>> {
    let kernel = match basis {
        Basis::First(_) => KernelKind::G,
        Basis::Second(_) => KernelKind::L,
    };
    let (out, inp) = basis.maps();
    let mut res = Vec::with_capacity(index_set.len());
    for (i, f) in force.iter().enumerate() {
        let freq = index_set.frequency(i);
        let mut modal = &inp * f;
        for j in 0..basis.modes() {
            modal[j] *= modal_factor(basis, kernel, j, freq).map_err(|e| resonance_context(e, &index_set.indices[i]))?;
        }
        res.push(&out * modal);
    }
    Ok(res)
}

/// The Galerkin response operator acting on torus samples: project onto the index set,
/// multiply by the amplification factors, synthesize.
pub fn galerkin_operator(
    basis: &Basis,
    index_set: &FrequencyIndexSet,
    grid: &TorusGrid,
    kernel: KernelKind,
) -> Result<CirculantOperator> {
    grid.check_floor(index_set)?;
    let np = grid.points();
    let mut weights = vec![vec![C64::new(0.0, 0.0); np]; basis.modes()];
    let offsets: Vec<Vec<f64>> = (0..np).map(|r| grid.angles(r)).collect();
    for (i, kappa) in index_set.indices.iter().enumerate() {
        let freq = index_set.frequency(i);
        for (j, w) in weights.iter_mut().enumerate() {
            let a = modal_factor(basis, kernel, j, freq).map_err(|e| resonance_context(e, kappa))? / np as f64;
            for (r, th) in offsets.iter().enumerate() {
                let phase: f64 = kappa.iter().zip(th).map(|(k, t)| *k as f64 * t).sum();
                w[r] += a * C64::from_polar(1.0, phase);
            }
        }
    }
    Ok(operator_from_weights(basis, &weights, grid.shape()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_of_cosine() {
        let set = FrequencyIndexSet::box_set(vec![1.0], 4).unwrap();
        let grid = TorusGrid { k: 1, n: 10 };
        let a = 0.7;
        let mut u = FourierSolution::zeros(set.clone(), 1, grid);
        u.coeffs[set.position(&[1]).unwrap()][0] = C64::new(a / 2.0, 0.0);
        u.coeffs[set.position(&[-1]).unwrap()][0] = C64::new(a / 2.0, 0.0);
        let c = nonlinearity_fourier_coeffs(|x: &[f64], o: &mut [f64]| o[0] = x[0].powi(3), &u).unwrap();
        let a3: f64 = a * a * a;
        assert!((c[set.position(&[1]).unwrap()][0] - C64::new(3.0 * a3 / 8.0, 0.0)).norm() < 1e-14);
        assert!((c[set.position(&[3]).unwrap()][0] - C64::new(a3 / 8.0, 0.0)).norm() < 1e-14);
        assert!(c[set.position(&[2]).unwrap()][0].norm() < 1e-14);
    }

    #[test]
    fn identity_and_constant() {
        let set = FrequencyIndexSet::box_set(vec![1.0, 2f64.sqrt()], 2).unwrap();
        let grid = TorusGrid { k: 2, n: 6 };
        let mut u = FourierSolution::zeros(set.clone(), 2, grid);
        u.coeffs[set.position(&[1, -2]).unwrap()] = DVector::from_vec(vec![C64::new(0.1, 0.2), C64::new(-0.3, 0.0)]);
        u.coeffs[set.position(&[-1, 2]).unwrap()] = DVector::from_vec(vec![C64::new(0.1, -0.2), C64::new(-0.3, 0.0)]);
        let c = nonlinearity_fourier_coeffs(|x: &[f64], o: &mut [f64]| o.copy_from_slice(x), &u).unwrap();
        for (a, b) in c.iter().zip(&u.coeffs) {
            assert!((a - b).norm() < 1e-15);
        }
        let k = nonlinearity_fourier_coeffs(|_: &[f64], o: &mut [f64]| o.fill(2.5), &u).unwrap();
        for (kappa, v) in set.indices.iter().zip(&k) {
            let expect = if kappa.iter().all(|x| *x == 0) { 2.5 } else { 0.0 };
            assert!((v[0].re - expect).abs() < 1e-14 && v[0].im.abs() < 1e-14);
        }
    }

    #[test]
    fn aliasing_floor() {
        let set = FrequencyIndexSet::box_set(vec![1.0], 4).unwrap();
        let u = FourierSolution::zeros(set, 1, TorusGrid { k: 1, n: 8 });
        assert!(matches!(nonlinearity_fourier_coeffs(|_: &[f64], _: &mut [f64]| {}, &u), Err(SsrError::Discretization(_))));
    }

    #[test]
    fn parseval() {
        let grid = TorusGrid { k: 2, n: 8 };
        let samples: Vec<f64> = (0..grid.points()).map(|p| ((p * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let spec = torus_forward(&grid, &samples, 1);
        let e_time: f64 = samples.iter().map(|v| v * v).sum::<f64>() / grid.points() as f64;
        let e_freq: f64 = spec.iter().map(|c| c[0].norm_sqr()).sum();
        assert!((e_time - e_freq).abs() < 1e-12 * e_time);
        let back = torus_inverse(&grid, &spec, 1);
        for (a, b) in back.iter().zip(&samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn index_set_rules() {
        assert!(FrequencyIndexSet::new(vec![1.0], vec![vec![1]]).is_err());
        assert!(FrequencyIndexSet::box_set(vec![1.0, 2.0], 2).is_err());
        assert_eq!(FrequencyIndexSet::box_set(vec![1.0, 2f64.sqrt()], 1).unwrap().len(), 9);
    }
}
