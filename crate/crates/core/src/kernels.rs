//! Closed-form periodic Green's functions, amplification factors and their derivatives.
//!
//! Every periodic kernel is built from the scalar first-order kernel
//! `g(mu, t, T) = e^{mu t} (q / (1 - q) + h(t))`, `q = e^{mu T}`, with the convention h(0) = 1.
//! The position kernel of a second-order mode is the divided difference of `g` over the
//! mode's two eigenvalues (the mu-derivative in the critically damped case), and the
//! velocity kernel is the divided difference of `mu g`.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

use crate::error::{Result, SsrError};
use crate::model::{DampingClass, Mode};

/// Which periodic kernel to use: first-order G, position L or velocity J.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    G,
    L,
    J,
}

#[inline]
pub fn heaviside(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        0.0
    }
}

fn check_period(mu: C64, period: f64) -> Result<C64> {
    let q = (mu * period).exp();
    if (C64::new(1.0, 0.0) - q).norm() < 1e-14 {
        return Err(SsrError::Resonance(format!("eigenvalue {mu} is resonant with period {period}")));
    }
    Ok(q)
}

/// Scalar kernel pieces for a fixed (mu, t, T, h).
#[derive(Debug, Clone, Copy)]
struct Scalar {
    /// g
    g: C64,
    /// dg/dT
    g_t: C64,
    /// dg/dmu
    g_mu: C64,
    /// d^2 g / dT dmu
    g_tmu: C64,
}

fn scalar(mu: C64, t: f64, period: f64, h: f64) -> Result<Scalar> {
    let q = check_period(mu, period)?;
    let one = C64::new(1.0, 0.0);
    let e = (mu * t).exp();
    let r = one - q;
    let frac = q / r;
    let frac2 = q / (r * r);
    let g = e * (frac + h);
    let g_t = mu * e * frac2;
    let g_mu = t * g + e * period * frac2;
    // d/dmu [q / (1-q)^2] = T q (1+q) / (1-q)^3
    let g_tmu = e * frac2 + mu * t * e * frac2 + mu * e * period * q * (one + q) / (r * r * r);
    Ok(Scalar { g, g_t, g_mu, g_tmu })
}

/// (g, dg/dT) of the first-order kernel with an explicit step value.
pub(crate) fn scalar_first_order(mu: C64, t: f64, period: f64, h: f64) -> Result<(C64, C64)> {
    let s = scalar(mu, t, period, h)?;
    Ok((s.g, s.g_t))
}

/// Kernel with an explicit step value `h` (0 or 1, or 0.5 for a split average).
pub fn green_first_order_h(lambda: C64, t: f64, period: f64, h: f64) -> Result<C64> {
    Ok(scalar(lambda, t, period, h)?.g)
}

/// G(t, T) = e^{lambda t}(e^{lambda T}/(1 - e^{lambda T}) + h(t)) for t in [-T, T).
pub fn green_first_order(lambda: C64, t: f64, period: f64) -> Result<C64> {
    green_first_order_h(lambda, t, period, heaviside(t))
}

pub fn dgreen_first_order_dt(lambda: C64, t: f64, period: f64) -> Result<C64> {
    Ok(scalar(lambda, t, period, 0.0)?.g_t)
}

/// max_j T max(|e^{lambda_j T}|, 1) / |1 - e^{lambda_j T}|.
pub fn gamma_t(lambdas: &[C64], period: f64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for &l in lambdas {
        let q = check_period(l, period)?;
        best = best.max(period * q.norm().max(1.0) / (C64::new(1.0, 0.0) - q).norm());
    }
    Ok(best)
}

pub fn amp_factor_first_order(lambda: C64, freq: f64) -> Result<C64> {
    let d = C64::new(0.0, freq) - lambda;
    if d.norm() < 1e-14 {
        return Err(SsrError::Resonance(format!("eigenvalue {lambda} at frequency {freq}")));
    }
    Ok(d.inv())
}

/// dH/dfreq.
pub fn damp_factor_first_order(lambda: C64, freq: f64) -> Result<C64> {
    let h = amp_factor_first_order(lambda, freq)?;
    Ok(C64::new(0.0, -1.0) * h * h)
}

/// Supremum over frequency of |1/(i w - lambda)|, i.e. 1/min |Re lambda|.
pub fn h_max(lambdas: &[C64]) -> Result<f64> {
    let mut min_re = f64::INFINITY;
    for l in lambdas {
        if l.re >= 0.0 {
            return Err(SsrError::Stability(format!("eigenvalue {l} has nonnegative real part")));
        }
        min_re = min_re.min(-l.re);
    }
    Ok(1.0 / min_re)
}

/// Position, velocity and their period derivatives for one mode at one time offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeKernel {
    pub l: f64,
    pub j: f64,
    pub l_t: f64,
    pub j_t: f64,
}

/// Evaluates all second-order kernels with step value `h` at offset t.
pub fn mode_kernel_h(mode: &Mode, t: f64, period: f64, h: f64) -> Result<ModeKernel> {
    match mode.class {
        DampingClass::Under => {
            if mode.zeta >= 1.0 {
                return Err(SsrError::Internal("underdamped branch with zeta >= 1".into()));
            }
            let mu = C64::new(mode.alpha, mode.omega);
            let s = scalar(mu, t, period, h)?;
            let w = mode.omega;
            Ok(ModeKernel {
                l: s.g.im / w,
                j: (mu * s.g).im / w,
                l_t: s.g_t.im / w,
                j_t: (mu * s.g_t).im / w,
            })
        }
        DampingClass::Critical => {
            if (mode.zeta - 1.0).abs() > 1e-9 {
                return Err(SsrError::Internal("critical branch with zeta != 1".into()));
            }
            let a = C64::new(mode.alpha, 0.0);
            let s = scalar(a, t, period, h)?;
            Ok(ModeKernel {
                l: s.g_mu.re,
                j: (s.g + a * s.g_mu).re,
                l_t: s.g_tmu.re,
                j_t: (s.g_t + a * s.g_tmu).re,
            })
        }
        DampingClass::Over => {
            if mode.zeta <= 1.0 {
                return Err(SsrError::Internal("overdamped branch with zeta <= 1".into()));
            }
            let (b, c) = (mode.beta, mode.gamma);
            let sb = scalar(C64::new(b, 0.0), t, period, h)?;
            let sc = scalar(C64::new(c, 0.0), t, period, h)?;
            let d = b - c;
            Ok(ModeKernel {
                l: (sb.g.re - sc.g.re) / d,
                j: (b * sb.g.re - c * sc.g.re) / d,
                l_t: (sb.g_t.re - sc.g_t.re) / d,
                j_t: (b * sb.g_t.re - c * sc.g_t.re) / d,
            })
        }
    }
}

pub fn green_position(mode: &Mode, t: f64, period: f64) -> Result<f64> {
    Ok(mode_kernel_h(mode, t, period, heaviside(t))?.l)
}

pub fn green_velocity(mode: &Mode, t: f64, period: f64) -> Result<f64> {
    Ok(mode_kernel_h(mode, t, period, heaviside(t))?.j)
}

pub fn dgreen_position_dt(mode: &Mode, t: f64, period: f64) -> Result<f64> {
    Ok(mode_kernel_h(mode, t, period, heaviside(t))?.l_t)
}

pub fn dgreen_velocity_dt(mode: &Mode, t: f64, period: f64) -> Result<f64> {
    Ok(mode_kernel_h(mode, t, period, heaviside(t))?.j_t)
}

/// Derivatives (dL/dzeta, dJ/dzeta) at fixed natural frequency; underdamped modes only.
pub fn dgreen_dzeta_h(mode: &Mode, t: f64, period: f64, h: f64) -> Result<(f64, f64)> {
    if mode.class != DampingClass::Under {
        return Err(SsrError::Internal("damping-ratio derivative needs an underdamped mode".into()));
    }
    let mu = C64::new(mode.alpha, mode.omega);
    let s = scalar(mu, t, period, h)?;
    let w = mode.omega;
    let da = -mode.omega0;
    let dw = -mode.omega0 * mode.zeta / (1.0 - mode.zeta * mode.zeta).sqrt();
    let dmu = C64::new(da, dw);
    let l = s.g.im / w;
    let j = (mu * s.g).im / w;
    let dl = (s.g_mu * dmu).im / w - l * dw / w;
    let dj = ((s.g + mu * s.g_mu) * dmu).im / w - j * dw / w;
    Ok((dl, dj))
}

fn modal_denominator(mode: &Mode, freq: f64) -> C64 {
    let iw = C64::new(0.0, freq);
    match mode.class {
        DampingClass::Under => (iw - mode.alpha) * (iw - mode.alpha) + mode.omega * mode.omega,
        DampingClass::Critical => (iw - mode.alpha) * (iw - mode.alpha),
        DampingClass::Over => (mode.beta - iw) * (mode.gamma - iw),
    }
}

/// Q(freq) = 1/(w0^2 - freq^2 + 2 i zeta w0 freq), written per damping class.
pub fn amp_factor_position(mode: &Mode, freq: f64) -> Result<C64> {
    let d = modal_denominator(mode, freq);
    if d.norm() < 1e-14 {
        return Err(SsrError::Resonance(format!("mode w0={} at frequency {freq}", mode.omega0)));
    }
    Ok(d.inv())
}

/// dQ/dfreq.
pub fn damp_factor_position(mode: &Mode, freq: f64) -> Result<C64> {
    let q = amp_factor_position(mode, freq)?;
    let dd = C64::new(-2.0 * freq, 2.0 * mode.zeta * mode.omega0);
    Ok(-dd * q * q)
}

/// dQ/dzeta at fixed natural frequency.
pub fn amp_factor_position_dzeta(mode: &Mode, freq: f64) -> Result<C64> {
    let q = amp_factor_position(mode, freq)?;
    Ok(-C64::new(0.0, 2.0 * mode.omega0 * freq) * q * q)
}

/// Supremum over frequency of |Q|.
pub fn sup_amp_factor_position(mode: &Mode) -> Result<f64> {
    let z = mode.zeta;
    let w2 = mode.omega0 * mode.omega0;
    if z <= 0.0 {
        return Err(SsrError::Stability(format!("undamped mode w0={} has unbounded amplification", mode.omega0)));
    }
    if z < std::f64::consts::FRAC_1_SQRT_2 {
        Ok(1.0 / (2.0 * z * w2 * (1.0 - z * z).sqrt()))
    } else {
        Ok(1.0 / w2)
    }
}

/// Fundamental matrix of y'' - 2 alpha y' + w0^2 y = 0 in the state (y, y').
pub fn fundamental_matrix(mode: &Mode, t: f64) -> Matrix2<f64> {
    let w02 = mode.omega0 * mode.omega0;
    match mode.class {
        DampingClass::Under => {
            let (a, w) = (mode.alpha, mode.omega);
            let e = (a * t).exp();
            let (s, c) = (w * t).sin_cos();
            Matrix2::new(c - a / w * s, s / w, -w02 / w * s, c + a / w * s) * e
        }
        DampingClass::Critical => {
            let a = mode.alpha;
            let e = (a * t).exp();
            Matrix2::new(1.0 - a * t, t, -a * a * t, 1.0 + a * t) * e
        }
        DampingClass::Over => {
            let (b, c) = (mode.beta, mode.gamma);
            let (eb, ec) = ((b * t).exp(), (c * t).exp());
            Matrix2::new(b * ec - c * eb, eb - ec, b * c * (ec - eb), b * eb - c * ec) / (b - c)
        }
    }
}
