//! Finite Fourier forcing tables f(t) = sum_kappa F_kappa e^{i <kappa, Omega> t}.

use nalgebra::DVector;
use num_complex::Complex64 as C64;

use crate::error::{Result, SsrError};

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingTerm {
    pub kappa: Vec<i32>,
    pub coeff: DVector<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub n: usize,
    pub omegas: Vec<f64>,
    pub terms: Vec<ForcingTerm>,
}

impl ForcingSpec {
    pub fn new(n: usize, omegas: Vec<f64>, terms: Vec<ForcingTerm>) -> Result<Self> {
        if omegas.is_empty() || omegas.iter().any(|w| !(*w > 0.0)) {
            return Err(SsrError::Model("base frequencies must be positive".into()));
        }
        for t in &terms {
            if t.kappa.len() != omegas.len() || t.coeff.len() != n {
                return Err(SsrError::Model("forcing term shape mismatch".into()));
            }
            let neg: Vec<i32> = t.kappa.iter().map(|k| -k).collect();
            let partner = terms.iter().find(|o| o.kappa == neg);
            let ok = match partner {
                Some(p) => p.coeff.iter().zip(t.coeff.iter()).all(|(a, b)| (a - b.conj()).norm() <= 1e-14 * (1.0 + b.norm())),
                None => false,
            };
            if !ok {
                return Err(SsrError::Model(format!("forcing table is not conjugate symmetric at {:?}", t.kappa)));
            }
        }
        Ok(Self { n, omegas, terms })
    }

    pub fn zero(n: usize, omegas: Vec<f64>) -> Self {
        Self { n, omegas, terms: Vec::new() }
    }

    /// sum_i a_i sin(Omega t) e_i.
    pub fn harmonic_sine(amplitudes: &[f64], omega: f64) -> Result<Self> {
        let n = amplitudes.len();
        let plus = DVector::from_iterator(n, amplitudes.iter().map(|a| C64::new(0.0, -a / 2.0)));
        let minus = plus.map(|c| c.conj());
        Self::new(
            n,
            vec![omega],
            vec![ForcingTerm { kappa: vec![1], coeff: plus }, ForcingTerm { kappa: vec![-1], coeff: minus }],
        )
    }

    /// Sum of sines, one per base frequency, each with the given amplitude vector.
    pub fn multi_sine(amplitudes: &[f64], omegas: Vec<f64>) -> Result<Self> {
        let n = amplitudes.len();
        let k = omegas.len();
        let plus = DVector::from_iterator(n, amplitudes.iter().map(|a| C64::new(0.0, -a / 2.0)));
        let mut terms = Vec::new();
        for i in 0..k {
            let mut kp = vec![0; k];
            kp[i] = 1;
            let km: Vec<i32> = kp.iter().map(|v| -v).collect();
            terms.push(ForcingTerm { kappa: kp, coeff: plus.clone() });
            terms.push(ForcingTerm { kappa: km, coeff: plus.map(|c| c.conj()) });
        }
        Self::new(n, omegas, terms)
    }

    pub fn k(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.iter().all(|c| *c == C64::new(0.0, 0.0)))
    }

    pub fn with_omegas(&self, omegas: Vec<f64>) -> Self {
        Self { omegas, ..self.clone() }
    }

    pub fn combination_frequency(&self, kappa: &[i32]) -> f64 {
        kappa.iter().zip(&self.omegas).map(|(k, w)| *k as f64 * w).sum()
    }

    /// Evaluates on the torus at angles theta (one per base frequency).
    pub fn eval_torus(&self, theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.terms {
            let phase: f64 = t.kappa.iter().zip(theta).map(|(k, th)| *k as f64 * th).sum();
            let e = C64::from_polar(1.0, phase);
            for (o, c) in out.iter_mut().zip(t.coeff.iter()) {
                *o += (c * e).re;
            }
        }
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let theta: Vec<f64> = self.omegas.iter().map(|w| w * t).collect();
        self.eval_torus(&theta, out);
    }

    /// Time derivative f'(t).
    pub fn eval_derivative(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        for term in &self.terms {
            let w = self.combination_frequency(&term.kappa);
            let e = C64::new(0.0, w) * C64::from_polar(1.0, w * t);
            for (o, c) in out.iter_mut().zip(term.coeff.iter()) {
                *o += (c * e).re;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_table() {
        let f = ForcingSpec::harmonic_sine(&[0.01, 0.01], 1.3).unwrap();
        let mut out = [0.0; 2];
        f.eval(0.0, &mut out);
        assert_eq!(out, [0.0, 0.0]);
        f.eval(0.4, &mut out);
        assert!((out[0] - 0.01 * (1.3f64 * 0.4).sin()).abs() < 1e-16);
        f.eval_derivative(0.4, &mut out);
        assert!((out[0] - 0.013 * (1.3f64 * 0.4).cos()).abs() < 1e-16);
        assert_eq!(f.terms[0].coeff[0], f.terms[1].coeff[0].conj());
    }

    #[test]
    fn rejects_asymmetric_table() {
        let c = DVector::from_element(1, C64::new(1.0, 0.0));
        assert!(ForcingSpec::new(1, vec![1.0], vec![ForcingTerm { kappa: vec![1], coeff: c }]).is_err());
    }

    #[test]
    fn two_frequency_table() {
        let f = ForcingSpec::multi_sine(&[0.01, 0.0], vec![0.8, 1.9]).unwrap();
        let mut out = [0.0; 2];
        f.eval(1.1, &mut out);
        assert!((out[0] - 0.01 * ((0.88f64).sin() + (2.09f64).sin())).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
    }
}
