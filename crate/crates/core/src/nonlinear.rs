//! Nonlinear restoring forces S(x, v).

use std::fmt::Debug;

use nalgebra::DMatrix;

pub trait Nonlinearity: Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// True when S does not depend on the velocity argument.
    fn position_only(&self) -> bool;

    fn eval(&self, x: &[f64], v: &[f64], out: &mut [f64]);

    /// Analytic Jacobians (D_x S, D_v S). Returns false when not available.
    fn jacobian(&self, _x: &[f64], _v: &[f64], _dx: &mut DMatrix<f64>, _dv: &mut DMatrix<f64>) -> bool {
        false
    }

    /// Lipschitz bound of S over states with every component bounded by `radius`.
    fn lipschitz_bound(&self, _radius: f64) -> Option<f64> {
        None
    }

    fn is_zero(&self) -> bool {
        false
    }

    /// Potential V with S = grad V, when S is conservative and V is known.
    fn potential(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Jacobians of `nl`, falling back to forward differences with step 1e-7(1+|x_i|).
pub fn jacobians(nl: &dyn Nonlinearity, x: &[f64], v: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = nl.dim();
    let mut dx = DMatrix::zeros(n, n);
    let mut dv = DMatrix::zeros(n, n);
    if nl.is_zero() || nl.jacobian(x, v, &mut dx, &mut dv) {
        return (dx, dv);
    }
    let mut base = vec![0.0; n];
    nl.eval(x, v, &mut base);
    let mut out = vec![0.0; n];
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-7 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        nl.eval(&xp, v, &mut out);
        xp[j] = x[j];
        for i in 0..n {
            dx[(i, j)] = (out[i] - base[i]) / h;
        }
    }
    if !nl.position_only() {
        let mut vp = v.to_vec();
        for j in 0..n {
            let h = 1e-7 * (1.0 + v[j].abs());
            vp[j] = v[j] + h;
            nl.eval(x, &vp, &mut out);
            vp[j] = v[j];
            for i in 0..n {
                dv[(i, j)] = (out[i] - base[i]) / h;
            }
        }
    }
    (dx, dv)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub n: usize,
}

impl Nonlinearity for Linear {
    fn dim(&self) -> usize {
        self.n
    }
    fn position_only(&self) -> bool {
        true
    }
    fn eval(&self, _x: &[f64], _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn jacobian(&self, _x: &[f64], _v: &[f64], dx: &mut DMatrix<f64>, dv: &mut DMatrix<f64>) -> bool {
        dx.fill(0.0);
        dv.fill(0.0);
        true
    }
    fn lipschitz_bound(&self, _radius: f64) -> Option<f64> {
        Some(0.0)
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn potential(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

/// coeff * x_dof^3 acting on a single degree of freedom.
#[derive(Debug, Clone)]
pub struct CubicSpring {
    pub n: usize,
    pub dof: usize,
    pub coeff: f64,
}

impl Nonlinearity for CubicSpring {
    fn dim(&self) -> usize {
        self.n
    }
    fn position_only(&self) -> bool {
        true
    }
    fn eval(&self, x: &[f64], _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let q = x[self.dof];
        out[self.dof] = self.coeff * q * q * q;
    }
    fn jacobian(&self, x: &[f64], _v: &[f64], dx: &mut DMatrix<f64>, dv: &mut DMatrix<f64>) -> bool {
        dx.fill(0.0);
        dv.fill(0.0);
        let q = x[self.dof];
        dx[(self.dof, self.dof)] = 3.0 * self.coeff * q * q;
        true
    }
    fn lipschitz_bound(&self, radius: f64) -> Option<f64> {
        Some(3.0 * self.coeff.abs() * radius * radius)
    }
    fn potential(&self, x: &[f64]) -> Option<f64> {
        Some(0.25 * self.coeff * x[self.dof].powi(4))
    }
}

/// Spring with a symmetric clearance: alpha * sign(q)(|q| - beta) outside the band |q| <= beta.
#[derive(Debug, Clone)]
pub struct PlaySpring {
    pub n: usize,
    pub dof: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Nonlinearity for PlaySpring {
    fn dim(&self) -> usize {
        self.n
    }
    fn position_only(&self) -> bool {
        true
    }
    fn eval(&self, x: &[f64], _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let q = x[self.dof];
        if q.abs() > self.beta {
            out[self.dof] = self.alpha * q.signum() * (q.abs() - self.beta);
        }
    }
    fn jacobian(&self, x: &[f64], _v: &[f64], dx: &mut DMatrix<f64>, dv: &mut DMatrix<f64>) -> bool {
        dx.fill(0.0);
        dv.fill(0.0);
        // at the kink the outside branch is used
        if x[self.dof].abs() >= self.beta {
            dx[(self.dof, self.dof)] = self.alpha;
        }
        true
    }
    fn lipschitz_bound(&self, _radius: f64) -> Option<f64> {
        Some(self.alpha.abs())
    }
}

/// Gradient of V(x) = kappa/4 [x_1^4 + sum_j (x_j - x_{j-1})^4 + x_n^4] for a grounded chain.
#[derive(Debug, Clone)]
pub struct ChainQuartic {
    pub n: usize,
    pub kappa: f64,
}

impl ChainQuartic {
    fn energy(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut v = x[0].powi(4) + x[n - 1].powi(4);
        for j in 1..n {
            v += (x[j] - x[j - 1]).powi(4);
        }
        0.25 * self.kappa * v
    }
}

impl Nonlinearity for ChainQuartic {
    fn dim(&self) -> usize {
        self.n
    }
    fn position_only(&self) -> bool {
        true
    }
    fn eval(&self, x: &[f64], _v: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.fill(0.0);
        out[0] += self.kappa * x[0].powi(3);
        out[n - 1] += self.kappa * x[n - 1].powi(3);
        for j in 1..n {
            let d = self.kappa * (x[j] - x[j - 1]).powi(3);
            out[j] += d;
            out[j - 1] -= d;
        }
    }
    fn jacobian(&self, x: &[f64], _v: &[f64], dx: &mut DMatrix<f64>, dv: &mut DMatrix<f64>) -> bool {
        let n = self.n;
        dx.fill(0.0);
        dv.fill(0.0);
        dx[(0, 0)] += 3.0 * self.kappa * x[0] * x[0];
        dx[(n - 1, n - 1)] += 3.0 * self.kappa * x[n - 1] * x[n - 1];
        for j in 1..n {
            let d = x[j] - x[j - 1];
            let s = 3.0 * self.kappa * d * d;
            dx[(j, j)] += s;
            dx[(j - 1, j - 1)] += s;
            dx[(j, j - 1)] -= s;
            dx[(j - 1, j)] -= s;
        }
        true
    }
    fn lipschitz_bound(&self, radius: f64) -> Option<f64> {
        // Gershgorin on the Hessian: differences are bounded by 2*radius
        let d = 2.0 * radius;
        Some(3.0 * self.kappa.abs() * (radius * radius + 4.0 * d * d))
    }
    fn potential(&self, x: &[f64]) -> Option<f64> {
        Some(self.energy(x))
    }
}

/// Wraps a closure; the Jacobian comes from finite differences.
pub struct FnNonlinearity<F>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    pub n: usize,
    pub position_only: bool,
    pub f: F,
}

impl<F> Debug for FnNonlinearity<F>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FnNonlinearity(n={})", self.n)
    }
}

impl<F> Nonlinearity for FnNonlinearity<F>
where
    F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn position_only(&self) -> bool {
        self.position_only
    }
    fn eval(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        (self.f)(x, v, out)
    }
}
