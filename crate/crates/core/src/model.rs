//! Second-order system description, first-order lift and modal decompositions.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Result, SsrError};
use crate::linalg::{complex_inverse, norm2_complex, norm2_real, null_space};
use crate::nonlinear::{jacobians, Linear, Nonlinearity};

/// M x'' + C x' + K x + S(x, x') = f(t)
#[derive(Debug, Clone)]
pub struct MechanicalSystem {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub nonlinearity: Arc<dyn Nonlinearity>,
}

fn check_symmetric(name: &str, a: &DMatrix<f64>, n: usize, problems: &mut Vec<String>) {
    if a.nrows() != n || a.ncols() != n {
        problems.push(format!("{name} is {}x{}, expected {n}x{n}", a.nrows(), a.ncols()));
        return;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = (a - a.transpose()).amax();
    if asym > 1e-12 * scale {
        problems.push(format!("{name} is not symmetric (max asymmetry {asym:.3e})"));
    }
}

impl MechanicalSystem {
    pub fn new(
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        nonlinearity: Arc<dyn Nonlinearity>,
    ) -> Result<Self> {
        let n = mass.nrows();
        let mut problems = Vec::new();
        if n == 0 {
            return Err(SsrError::Model("empty mass matrix".into()));
        }
        check_symmetric("M", &mass, n, &mut problems);
        check_symmetric("C", &damping, n, &mut problems);
        check_symmetric("K", &stiffness, n, &mut problems);
        if nonlinearity.dim() != n {
            problems.push(format!("nonlinearity acts on {} dofs, system has {n}", nonlinearity.dim()));
        }
        if problems.is_empty() && Cholesky::new(mass.clone()).is_none() {
            problems.push("M is not positive definite".into());
        }
        if problems.is_empty() {
            let z = vec![0.0; n];
            let mut s = vec![0.0; n];
            nonlinearity.eval(&z, &z, &mut s);
            if s.iter().any(|v| v.abs() > 1e-12) {
                problems.push("S(0, 0) is not zero".into());
            }
        }
        if !problems.is_empty() {
            return Err(SsrError::Model(problems.join("; ")));
        }
        Ok(Self { mass, damping, stiffness, nonlinearity })
    }

    pub fn linear(mass: DMatrix<f64>, damping: DMatrix<f64>, stiffness: DMatrix<f64>) -> Result<Self> {
        let n = mass.nrows();
        Self::new(mass, damping, stiffness, Arc::new(Linear { n }))
    }

    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    pub fn position_only(&self) -> bool {
        self.nonlinearity.position_only()
    }

    pub fn with_nonlinearity(&self, nl: Arc<dyn Nonlinearity>) -> Result<Self> {
        Self::new(self.mass.clone(), self.damping.clone(), self.stiffness.clone(), nl)
    }

    pub fn with_damping(&self, damping: DMatrix<f64>) -> Result<Self> {
        Self::new(self.mass.clone(), damping, self.stiffness.clone(), self.nonlinearity.clone())
    }
}

/// B z' = A z - R(z) + F(t) with z = (x', x).
#[derive(Debug, Clone)]
pub struct FirstOrderSystem {
    pub b: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub system: MechanicalSystem,
}

impl FirstOrderSystem {
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// R(z) = (0, S(x, x')).
    pub fn r(&self, z: &[f64], out: &mut [f64]) {
        let n = self.system.n();
        out[..n].fill(0.0);
        let (v, x) = z.split_at(n);
        self.system.nonlinearity.eval(x, v, &mut out[n..]);
    }

    /// DR(z) as a dense 2n x 2n block [[0, 0], [D_v S, D_x S]].
    pub fn dr(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.system.n();
        let (v, x) = z.split_at(n);
        let (dx, dv) = jacobians(self.system.nonlinearity.as_ref(), x, v);
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        out.view_mut((n, 0), (n, n)).copy_from(&dv);
        out.view_mut((n, n), (n, n)).copy_from(&dx);
        out
    }
}

pub fn lift_to_first_order(sys: &MechanicalSystem) -> Result<FirstOrderSystem> {
    let n = sys.n();
    if Cholesky::new(sys.mass.clone()).is_none() {
        return Err(SsrError::Model("M is not positive definite".into()));
    }
    let mut b = DMatrix::zeros(2 * n, 2 * n);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, n), (n, n)).copy_from(&sys.mass);
    b.view_mut((n, 0), (n, n)).copy_from(&sys.mass);
    b.view_mut((n, n), (n, n)).copy_from(&sys.damping);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.mass);
    a.view_mut((n, n), (n, n)).copy_from(&(-&sys.stiffness));
    Ok(FirstOrderSystem { b, a, system: sys.clone() })
}

#[derive(Debug, Clone)]
pub struct ModalBasisFirstOrder {
    pub lambdas: Vec<C64>,
    pub v: DMatrix<C64>,
    pub vinv: DMatrix<C64>,
    /// Modal input map (B V)^{-1}: modal forcing is P (F - R).
    pub input: DMatrix<C64>,
    /// ||V|| ||V^{-1}|| in the induced 2-norm.
    pub cond_product: f64,
    /// ||V|| ||(B V)^{-1}||, the constant entering the convergence certificate.
    pub input_cond_product: f64,
}

pub fn diagonalize_first_order(fsys: &FirstOrderSystem) -> Result<ModalBasisFirstOrder> {
    let d = fsys.dim();
    let binv = fsys
        .b
        .clone()
        .try_inverse()
        .ok_or_else(|| SsrError::Model("B is singular".into()))?;
    let e = &binv * &fsys.a;
    let scale = e.amax().max(1.0);
    let raw: Vec<C64> = e.complex_eigenvalues().iter().cloned().collect();
    if let Some(z) = raw.iter().find(|l| l.norm() < 1e-10 * scale) {
        return Err(SsrError::Model(format!("rigid-body eigenvalue {z} violates non-resonance")));
    }

    // one representative per conjugate pair, real eigenvalues on their own
    let imag_tol = 1e-10 * scale;
    let mut reps: Vec<C64> = raw
        .iter()
        .filter(|l| l.im > imag_tol || l.im.abs() <= imag_tol)
        .map(|l| if l.im.abs() <= imag_tol { C64::new(l.re, 0.0) } else { *l })
        .collect();
    reps.sort_by(|a, b| a.im.abs().total_cmp(&b.im.abs()).then(a.re.total_cmp(&b.re)));

    let ac = fsys.a.map(|x| C64::new(x, 0.0));
    let bc = fsys.b.map(|x| C64::new(x, 0.0));
    let mut lambdas = Vec::with_capacity(d);
    let mut cols: Vec<DVector<C64>> = Vec::with_capacity(d);
    let cluster_tol = 1e-7 * scale;
    let mut i = 0;
    while i < reps.len() {
        let mut j = i + 1;
        while j < reps.len() && (reps[j] - reps[i]).norm() < cluster_tol {
            j += 1;
        }
        let g = j - i;
        let mean = reps[i..j].iter().sum::<C64>() / g as f64;
        let pencil = &ac - &bc * mean;
        let vecs = null_space(&pencil, g);
        for (k, mut v) in vecs.into_iter().enumerate() {
            let lam = reps[i + k];
            if lam.im == 0.0 {
                let piv = v.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
                let phase = piv.conj() / piv.norm();
                v.iter_mut().for_each(|c| *c = C64::new((*c * phase).re, 0.0));
                let nrm = v.norm();
                v /= C64::new(nrm, 0.0);
                lambdas.push(lam);
                cols.push(v);
            } else {
                lambdas.push(lam);
                cols.push(v.clone());
                lambdas.push(lam.conj());
                cols.push(v.map(|c| c.conj()));
            }
        }
        i = j;
    }
    if lambdas.len() != d {
        return Err(SsrError::Internal(format!("found {} eigenpairs for dimension {d}", lambdas.len())));
    }
    let v = DMatrix::from_columns(&cols);
    let vinv = complex_inverse(&v).ok_or(SsrError::Nondiagonalizable { cond: f64::INFINITY })?;
    let cond_product = norm2_complex(&v) * norm2_complex(&vinv);
    if !cond_product.is_finite() || cond_product > 1e12 {
        return Err(SsrError::Nondiagonalizable { cond: cond_product });
    }
    let bv = &bc * &v;
    let input = complex_inverse(&bv).ok_or(SsrError::Nondiagonalizable { cond: f64::INFINITY })?;
    let input_cond_product = norm2_complex(&v) * norm2_complex(&input);
    Ok(ModalBasisFirstOrder { lambdas, v, vinv, input, cond_product, input_cond_product })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DampingClass {
    Under,
    Critical,
    Over,
}

/// One mode of a proportionally damped system: y'' + 2 zeta w0 y' + w0^2 y = p.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub omega0: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub class: DampingClass,
    /// Set when 1e-9 < |zeta - 1| <= 1e-6: evaluation allowed but cancellation-prone.
    pub near_critical: bool,
}

impl Mode {
    pub fn new(omega0: f64, zeta: f64) -> Self {
        let alpha = -zeta * omega0;
        let gap = (zeta - 1.0).abs();
        let class = if gap <= 1e-9 {
            DampingClass::Critical
        } else if zeta < 1.0 {
            DampingClass::Under
        } else {
            DampingClass::Over
        };
        let omega = match class {
            DampingClass::Critical => 0.0,
            _ => omega0 * (1.0 - zeta * zeta).abs().sqrt(),
        };
        Self {
            omega0,
            zeta,
            alpha,
            omega,
            beta: alpha + omega,
            gamma: alpha - omega,
            class,
            near_critical: gap > 1e-9 && gap <= 1e-6,
        }
    }

    /// The two first-order eigenvalues (-zeta +- sqrt(zeta^2 - 1)) w0.
    pub fn eigenvalues(&self) -> [C64; 2] {
        match self.class {
            DampingClass::Under => [C64::new(self.alpha, self.omega), C64::new(self.alpha, -self.omega)],
            DampingClass::Critical => [C64::new(self.alpha, 0.0); 2],
            DampingClass::Over => [C64::new(self.beta, 0.0), C64::new(self.gamma, 0.0)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModalBasisSecondOrder {
    /// Mass-normalized undamped modes as columns.
    pub u: DMatrix<f64>,
    pub modes: Vec<Mode>,
}

impl ModalBasisSecondOrder {
    pub fn omega0(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega0).collect()
    }
    pub fn zeta(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.zeta).collect()
    }
    pub fn alpha(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.alpha).collect()
    }
    pub fn omega(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }
    pub fn beta(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.beta).collect()
    }
    pub fn gamma(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.gamma).collect()
    }
    /// ||U|| ||U^T||.
    pub fn cond_product(&self) -> f64 {
        let s = norm2_real(&self.u);
        s * s
    }

    /// Same mode shapes with damping ratios replaced.
    pub fn with_zeta(&self, zeta: &[f64]) -> Self {
        let modes = self.modes.iter().zip(zeta).map(|(m, &z)| Mode::new(m.omega0, z)).collect();
        Self { u: self.u.clone(), modes }
    }
}

/// Undamped modes (mass-normalized, ascending frequency) and the modal damping matrix U^T C U.
fn undamped_modes(sys: &MechanicalSystem) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(sys.mass.clone()).ok_or_else(|| SsrError::Model("M is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| SsrError::Model("singular Cholesky factor".into()))?;
    let mut ks = &linv * &sys.stiffness * linv.transpose();
    ks = (&ks + ks.transpose()) * 0.5;
    let eig = SymmetricEigen::new(ks);
    let n = sys.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut w2 = Vec::with_capacity(n);
    let mut u = DMatrix::zeros(n, n);
    let ltinv = linv.transpose();
    for (c, &j) in order.iter().enumerate() {
        let ev = eig.eigenvalues[j];
        if ev <= 1e-12 * scale {
            return Err(SsrError::Model(format!("rigid-body or unstable mode (omega0^2 = {ev:.3e})")));
        }
        w2.push(ev);
        let col = &ltinv * eig.eigenvectors.column(j);
        // deterministic sign: largest component positive
        let piv = col.iter().cloned().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
        u.set_column(c, &(col * piv.signum()));
    }
    let cm = u.transpose() * &sys.damping * &u;
    Ok((u, w2.into_iter().map(f64::sqrt).collect(), cm))
}

fn offdiag_ratio(cm: &DMatrix<f64>) -> f64 {
    let scale = cm.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut off: f64 = 0.0;
    for i in 0..cm.nrows() {
        for j in 0..cm.ncols() {
            if i != j {
                off = off.max(cm[(i, j)].abs());
            }
        }
    }
    off / scale
}

pub fn check_proportional_damping(sys: &MechanicalSystem) -> Result<bool> {
    let (_, _, cm) = undamped_modes(sys)?;
    Ok(offdiag_ratio(&cm) <= 1e-10)
}

pub fn modal_decompose_second_order(sys: &MechanicalSystem) -> Result<ModalBasisSecondOrder> {
    let (u, w0, cm) = undamped_modes(sys)?;
    let off = offdiag_ratio(&cm);
    if off > 1e-10 {
        return Err(SsrError::Proportionality { offdiag: off });
    }
    let modes = w0.iter().enumerate().map(|(j, &w)| Mode::new(w, cm[(j, j)] / (2.0 * w))).collect();
    Ok(ModalBasisSecondOrder { u, modes })
}
