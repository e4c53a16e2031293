//! Built-in benchmark models and an explicit time-march oracle.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SsrError};
use crate::forcing::ForcingSpec;
use crate::model::MechanicalSystem;
use crate::nonlinear::{ChainQuartic, CubicSpring, Linear, Nonlinearity, PlaySpring};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TwoDofNonlinearity {
    None,
    /// coeff * q1^3
    Cubic(f64),
    /// alpha * sign(q1)(|q1| - beta) outside the play band
    Play { alpha: f64, beta: f64 },
}

pub fn cubic_spring(n: usize, coeff: f64) -> Arc<dyn Nonlinearity> {
    Arc::new(CubicSpring { n, dof: 0, coeff })
}

pub fn play_spring(n: usize, alpha: f64, beta: f64) -> Result<Arc<dyn Nonlinearity>> {
    if !(beta > 0.0) {
        return Err(SsrError::Model(format!("play width must be positive, got {beta}")));
    }
    Ok(Arc::new(PlaySpring { n, dof: 0, alpha, beta }))
}

fn tridiag(n: usize, diag: f64, off: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag
        } else if i.abs_diff(j) == 1 {
            off
        } else {
            0.0
        }
    })
}

/// Two masses between walls, coupled by springs k and dampers c; nonlinearity on mass 1.
pub fn build_two_dof(m: f64, k: f64, c: f64, nl: TwoDofNonlinearity) -> Result<MechanicalSystem> {
    if !(m > 0.0 && k > 0.0 && c >= 0.0) {
        return Err(SsrError::Model("two-dof model needs m, k > 0 and c >= 0".into()));
    }
    let s: Arc<dyn Nonlinearity> = match nl {
        TwoDofNonlinearity::None => Arc::new(Linear { n: 2 }),
        TwoDofNonlinearity::Cubic(coeff) => cubic_spring(2, coeff),
        TwoDofNonlinearity::Play { alpha, beta } => play_spring(2, alpha, beta)?,
    };
    MechanicalSystem::new(DMatrix::identity(2, 2) * m, tridiag(2, 2.0 * c, -c), tridiag(2, 2.0 * k, -k), s)
}

/// Grounded chain of n masses with quartic-potential coupling springs.
pub fn build_chain(n: usize, m: f64, k: f64, c: f64, kappa: f64) -> Result<MechanicalSystem> {
    if n < 2 {
        return Err(SsrError::Model("chain needs at least two masses".into()));
    }
    MechanicalSystem::new(
        DMatrix::identity(n, n) * m,
        tridiag(n, 2.0 * c, -c),
        tridiag(n, 2.0 * k, -k),
        Arc::new(ChainQuartic { n, kappa }),
    )
}

/// a_i sin(Omega t) on every dof i.
pub fn harmonic_forcing(amplitudes: &[f64], omega: f64) -> Result<ForcingSpec> {
    ForcingSpec::harmonic_sine(amplitudes, omega)
}

/// 0.01 (sin Omega1 t + sin Omega2 t) on mass 1 of a two-mass model.
pub fn qper_forcing_two_tone(omega1: f64, omega2: f64) -> Result<ForcingSpec> {
    ForcingSpec::multi_sine(&[0.01, 0.0], vec![omega1, omega2])
}

#[derive(Debug, Clone)]
pub struct OracleSettings {
    /// Give up after this many forcing periods.
    pub horizon_periods: usize,
    /// Relative window-to-window change of the per-dof amplitude accepted as steady.
    pub transient_tol: f64,
    /// Number of consecutive windows that must satisfy the tolerance.
    pub consecutive: usize,
    pub steps_per_period: usize,
    pub x0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { horizon_periods: 5000, transient_tol: 1e-6, consecutive: 3, steps_per_period: 200, x0: None, v0: None }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub amplitude: Vec<f64>,
    pub decay_metric: f64,
    pub periods: usize,
}

/// Explicit integrator for M x'' + C x' + K x + S(x, x') = f(t).
pub struct TimeMarcher<'a> {
    sys: &'a MechanicalSystem,
    minv: DMatrix<f64>,
    forcing: Option<&'a ForcingSpec>,
    f: Vec<f64>,
    s: Vec<f64>,
}

impl<'a> TimeMarcher<'a> {
    pub fn new(sys: &'a MechanicalSystem, forcing: Option<&'a ForcingSpec>) -> Result<Self> {
        let minv = sys.mass.clone().try_inverse().ok_or_else(|| SsrError::Model("singular mass matrix".into()))?;
        let n = sys.n();
        Ok(Self { sys, minv, forcing, f: vec![0.0; n], s: vec![0.0; n] })
    }

    fn accel(&mut self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self.forcing {
            Some(f) => f.eval(t, &mut self.f),
            None => self.f.fill(0.0),
        }
        self.sys.nonlinearity.eval(x.as_slice(), v.as_slice(), &mut self.s);
        let rhs = DVector::from_iterator(self.f.len(), self.f.iter().zip(&self.s).map(|(a, b)| a - b))
            - &self.sys.damping * v
            - &self.sys.stiffness * x;
        &self.minv * rhs
    }

    /// One classical Runge-Kutta step.
    pub fn step(&mut self, t: f64, dt: f64, x: &mut DVector<f64>, v: &mut DVector<f64>) {
        let a1 = self.accel(t, x, v);
        let x2 = &*x + &*v * (0.5 * dt);
        let v2 = &*v + &a1 * (0.5 * dt);
        let a2 = self.accel(t + 0.5 * dt, &x2, &v2);
        let x3 = &*x + &v2 * (0.5 * dt);
        let v3 = &*v + &a2 * (0.5 * dt);
        let a3 = self.accel(t + 0.5 * dt, &x3, &v3);
        let x4 = &*x + &v3 * dt;
        let v4 = &*v + &a3 * dt;
        let a4 = self.accel(t + dt, &x4, &v4);
        *x += (&*v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
        *v += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    }
}

/// Integrates until the per-dof amplitude over consecutive forcing periods settles.
pub fn time_march_oracle(sys: &MechanicalSystem, forcing: &ForcingSpec, settings: &OracleSettings) -> Result<OracleResult> {
    if forcing.k() != 1 {
        return Err(SsrError::Model("time-march oracle windows need a single forcing frequency".into()));
    }
    let n = sys.n();
    let window = 2.0 * PI / forcing.omegas[0];
    let steps = settings.steps_per_period.max(200);
    let dt = window / steps as f64;
    let mut marcher = TimeMarcher::new(sys, Some(forcing))?;
    let mut x = DVector::from_vec(settings.x0.clone().unwrap_or_else(|| vec![0.0; n]));
    let mut v = DVector::from_vec(settings.v0.clone().unwrap_or_else(|| vec![0.0; n]));
    let mut prev: Option<Vec<f64>> = None;
    let mut calm = 0;
    let mut change = f64::INFINITY;
    for period in 0..settings.horizon_periods {
        let t0 = period as f64 * window;
        let mut amp = vec![0.0f64; n];
        let mut times = Vec::with_capacity(steps);
        let mut xs = Vec::with_capacity(steps);
        let mut vs = Vec::with_capacity(steps);
        for s in 0..steps {
            let t = t0 + s as f64 * dt;
            times.push(t);
            xs.push(x.as_slice().to_vec());
            vs.push(v.as_slice().to_vec());
            for i in 0..n {
                amp[i] = amp[i].max(x[i].abs());
            }
            marcher.step(t, dt, &mut x, &mut v);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SsrError::Internal("time march blew up".into()));
        }
        if let Some(p) = &prev {
            let scale = amp.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            change = amp.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
            calm = if change <= settings.transient_tol { calm + 1 } else { 0 };
            if calm >= settings.consecutive {
                return Ok(OracleResult {
                    times,
                    positions: xs,
                    velocities: vs,
                    amplitude: amp,
                    decay_metric: change,
                    periods: period + 1,
                });
            }
        }
        prev = Some(amp);
    }
    Err(SsrError::TransientNotDecayed { periods: settings.horizon_periods, change })
}

/// Return time of a free orbit started at (x0, v0) with v0[dof] = 0: the first later instant at
/// which v[dof] crosses zero in the same direction as at the start, searched after half of `t_guess`.
pub fn measure_period(
    sys: &MechanicalSystem,
    x0: &[f64],
    v0: &[f64],
    dof: usize,
    t_guess: f64,
    steps_per_period: usize,
) -> Result<f64> {
    let mut marcher = TimeMarcher::new(sys, None)?;
    let mut x = DVector::from_column_slice(x0);
    let mut v = DVector::from_column_slice(v0);
    let dt = t_guess / steps_per_period as f64;
    let a0 = marcher.accel(0.0, &x, &v)[dof];
    if a0 == 0.0 {
        return Err(SsrError::Internal("start point is not a velocity turning point".into()));
    }
    let mut t = 0.0;
    let mut v_prev = v[dof];
    for _ in 0..3 * steps_per_period {
        marcher.step(t, dt, &mut x, &mut v);
        t += dt;
        let vn = v[dof];
        // crossing in the direction of the initial acceleration
        let crossed = if a0 > 0.0 { v_prev < 0.0 && vn >= 0.0 } else { v_prev > 0.0 && vn <= 0.0 };
        if t > 0.5 * t_guess && crossed {
            return Ok(t - dt + dt * v_prev / (v_prev - vn));
        }
        v_prev = vn;
    }
    Err(SsrError::Internal("no return to the phase section found".into()))
}
