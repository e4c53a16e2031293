//! Small dense linear-algebra helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Result, SsrError};

pub fn complex_inverse(a: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    a.clone().try_inverse()
}

pub fn norm2_complex(a: &DMatrix<C64>) -> f64 {
    a.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn norm2_real(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// The `count` right singular vectors belonging to the smallest singular values.
pub fn null_space(a: &DMatrix<C64>, count: usize) -> Vec<DVector<C64>> {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    idx.iter()
        .take(count)
        .map(|&i| vt.row(i).transpose().map(|c| c.conj()))
        .collect()
}

/// Solves a x = b by partial-pivot LU; fails when the smallest relative pivot drops below 1e-14.
pub fn solve_dense(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let lu = a.lu();
    let u = lu.u();
    let pivot = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())) / scale;
    if !(pivot >= 1e-14) {
        return Err(SsrError::SingularJacobian { pivot });
    }
    lu.solve(b).ok_or(SsrError::SingularJacobian { pivot })
}

/// Maximum over nodes of the Euclidean norm of each `d`-block.
pub fn sup_norm(z: &[f64], d: usize) -> f64 {
    z.chunks(d).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

pub fn sup_diff(a: &[f64], b: &[f64], d: usize) -> f64 {
    a.chunks(d)
        .zip(b.chunks(d))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}
