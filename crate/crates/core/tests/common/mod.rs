//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssr_core::kernels::{green_first_order_h, mode_kernel_h};
use ssr_core::model::{diagonalize_first_order, lift_to_first_order, DampingClass, MechanicalSystem, Mode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 50 modes: 20 underdamped, 10 critical, 20 overdamped, with random w0 and a period each.
pub fn random_modes(seed: u64) -> Vec<(Mode, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for i in 0..50 {
        let w0 = r.gen_range(0.3..3.0);
        let zeta = match i % 5 {
            0 | 1 => r.gen_range(0.01..0.95),
            2 => 1.0,
            _ => r.gen_range(1.05..3.0),
        };
        let period = r.gen_range(0.5..10.0);
        out.push((Mode::new(w0, zeta), period));
    }
    out
}

/// Composite Simpson on [a, b] with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, n: usize) -> C64 {
    if b <= a {
        return C64::new(0.0, 0.0);
    }
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += f(a + i as f64 * h) * w;
    }
    s * (h / 3.0)
}

/// Periodic state-space Green's matrix N(t)[(I - N(T))^{-1} N(T) + h I] with N = exp(A t)
/// computed by the matrix exponential. Entry (0, 1) is L, entry (1, 1) is J.
/// Evaluated as N(t)(I - N(T))^{-1} for h = 1 and N(t + T)(I - N(T))^{-1} for h = 0, which
/// avoids exponentials of negative times.
pub fn state_green(mode: &Mode, t: f64, period: f64, h: f64) -> Matrix2<f64> {
    let a = state_matrix(mode);
    let np = (a * period).exp();
    let inv = (Matrix2::identity() - np).try_inverse().expect("resonant period");
    if h == 1.0 {
        (a * t).exp() * inv
    } else {
        (a * (t + period)).exp() * inv
    }
}

pub fn state_matrix(mode: &Mode) -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -mode.omega0 * mode.omega0, -2.0 * mode.zeta * mode.omega0)
}

pub fn relerr(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / (b.abs().max(floor))
}

/// Sample offsets in (-T, T) avoiding the exact jump.
pub fn offsets(period: f64) -> Vec<f64> {
    (0..13).map(|i| period * (-0.95 + i as f64 * 0.155)).collect()
}

/// max |int_0^T K(t - s) e^{i w s} ds - factor(w) e^{i w t}| / scale over several t and w, for L and J.
pub fn convolution_identity_error(mode: &Mode, period: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for kappa in [0i32, 1, -2, 3] {
        let w = 2.0 * PI * kappa as f64 / period;
        let iw = C64::new(0.0, w);
        let d = C64::new(mode.omega0 * mode.omega0 - w * w, 2.0 * mode.zeta * mode.omega0 * w);
        let q = d.inv();
        for t in [0.0, 0.3 * period, 0.77 * period] {
            // split at s = t where the velocity kernel jumps
            let conv = |h: f64, j: bool| {
                move |s: f64| {
                    let k = mode_kernel_h(mode, t - s, period, h).unwrap();
                    C64::from_polar(if j { k.j } else { k.l }, w * s)
                }
            };
            let n = 4000;
            let l = simpson(conv(1.0, false), 0.0, t, n) + simpson(conv(0.0, false), t, period, n);
            let jv = simpson(conv(1.0, true), 0.0, t, n) + simpson(conv(0.0, true), t, period, n);
            let e = C64::from_polar(1.0, w * t);
            let scale = q.norm().max(1e-3);
            worst = worst.max((l - q * e).norm() / scale);
            worst = worst.max((jv - iw * q * e).norm() / (iw * q).norm().max(scale));
        }
    }
    worst
}

/// L and J against the matrix-exponential Green's matrix, and the closed-form fundamental
/// matrix against exp(A t).
pub fn reconstruction_error(mode: &Mode, period: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for t in offsets(period) {
        let h = if t >= 0.0 { 1.0 } else { 0.0 };
        let k = mode_kernel_h(mode, t, period, h).unwrap();
        let g = state_green(mode, t, period, h);
        let scale = g.amax().max(1.0);
        worst = worst.max((k.l - g[(0, 1)]).abs() / scale);
        worst = worst.max((k.j - g[(1, 1)]).abs() / scale);
        let tau = t.abs();
        let n = ssr_core::kernels::fundamental_matrix(mode, tau);
        let ne = (state_matrix(mode) * tau).exp();
        worst = worst.max((n - ne).amax() / ne.amax().max(1.0));
    }
    worst
}

/// Central finite differences in T of L, J and the first-order kernel of the mode's eigenvalues.
pub fn period_derivative_error(mode: &Mode, period: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let dt = 1e-5 * period;
    for t in offsets(period) {
        let h = if t >= 0.0 { 1.0 } else { 0.0 };
        let k = mode_kernel_h(mode, t, period, h).unwrap();
        let kp = mode_kernel_h(mode, t, period + dt, h).unwrap();
        let km = mode_kernel_h(mode, t, period - dt, h).unwrap();
        let scale = k.l.abs().max(k.j.abs()).max(1e-2);
        worst = worst.max((k.l_t - (kp.l - km.l) / (2.0 * dt)).abs() / k.l_t.abs().max(scale));
        worst = worst.max((k.j_t - (kp.j - km.j) / (2.0 * dt)).abs() / k.j_t.abs().max(scale));
        for lam in mode.eigenvalues() {
            let gt = ssr_core::kernels::dgreen_first_order_dt(lam, t, period).unwrap();
            let fd = (green_first_order_h(lam, t, period + dt, h).unwrap()
                - green_first_order_h(lam, t, period - dt, h).unwrap())
                / (2.0 * dt);
            let g = green_first_order_h(lam, t, period, h).unwrap();
            worst = worst.max((gt - fd).norm() / gt.norm().max(g.norm()).max(1e-2));
        }
    }
    worst
}

/// Position and velocity kernels from the diagonalized first-order system (non-critical
/// modes) or the state-space matrix exponential (critical modes) against L and J.
pub fn route_agreement_error(mode: &Mode, period: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let one = DMatrix::from_element(1, 1, 1.0);
    let sys = MechanicalSystem::linear(
        one.clone(),
        one.clone() * (2.0 * mode.zeta * mode.omega0),
        one * (mode.omega0 * mode.omega0),
    )
    .unwrap();
    let basis = if mode.class == DampingClass::Critical {
        None
    } else {
        Some(diagonalize_first_order(&lift_to_first_order(&sys).unwrap()).unwrap())
    };
    for t in offsets(period) {
        let h = if t >= 0.0 { 1.0 } else { 0.0 };
        let k = mode_kernel_h(mode, t, period, h).unwrap();
        let (l, j) = match &basis {
            Some(b) => {
                // z = (x', x); force enters the second block row
                let mut l = C64::new(0.0, 0.0);
                let mut j = C64::new(0.0, 0.0);
                for (i, lam) in b.lambdas.iter().enumerate() {
                    let g = green_first_order_h(*lam, t, period, h).unwrap();
                    l += b.v[(1, i)] * g * b.input[(i, 1)];
                    j += b.v[(0, i)] * g * b.input[(i, 1)];
                }
                (l.re, j.re)
            }
            None => {
                let g = state_green(mode, t, period, h);
                (g[(0, 1)], g[(1, 1)])
            }
        };
        let scale = k.l.abs().max(k.j.abs()).max(1.0);
        worst = worst.max((l - k.l).abs() / scale).max((j - k.j).abs() / scale);
    }
    worst
}

/// 1-DOF linear oscillator M = 1.
pub fn one_dof(w0: f64, zeta: f64) -> MechanicalSystem {
    let one = DMatrix::from_element(1, 1, 1.0);
    MechanicalSystem::linear(one.clone(), one.clone() * (2.0 * zeta * w0), one * (w0 * w0)).unwrap()
}

/// |1 / (w0^2 - w^2 + 2 i zeta w0 w)|.
pub fn frf_amplitude(w0: f64, zeta: f64, w: f64) -> f64 {
    C64::new(w0 * w0 - w * w, 2.0 * zeta * w0 * w).inv().norm()
}

/// Random small proportionally damped cubic system with an off-resonant harmonic forcing,
/// for certificate soundness runs. Odd seeds use the position route.
pub fn certificate_case(seed: u64, m: usize) -> ssr_core::problem::PeriodicProblem {
    use ssr_core::discretization::Quadrature;
    use ssr_core::forcing::ForcingSpec;
    use ssr_core::nonlinear::CubicSpring;
    use ssr_core::problem::{PeriodicProblem, Route};
    use std::sync::Arc;

    let mut r = rng(1000 + seed);
    let n = r.gen_range(1..=4usize);
    let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    let mass = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| r.gen_range(0.5..2.0)));
    let stiffness = &a * a.transpose() + DMatrix::identity(n, n) * r.gen_range(0.2..1.0);
    let damping = &mass * r.gen_range(0.01..0.2) + &stiffness * r.gen_range(0.01..0.2);
    let nl = Arc::new(CubicSpring { n, dof: r.gen_range(0..n), coeff: r.gen_range(0.1..2.0) });
    let sys = MechanicalSystem::new(mass, damping, stiffness, nl).unwrap();
    let amp = 10f64.powf(r.gen_range(-3.0..0.0));
    let amplitudes: Vec<f64> = (0..n).map(|_| amp * r.gen_range(-1.0..1.0)).collect();
    let omega = r.gen_range(0.2..3.0);
    let forcing = ForcingSpec::harmonic_sine(&amplitudes, omega).unwrap();
    let route = if seed % 2 == 0 { Route::Full } else { Route::Position };
    PeriodicProblem::new(&sys, route, &forcing, 2.0 * PI / omega, m, Quadrature::SplitTrapezoid).unwrap()
}

/// Steps after the first never increase (up to round-off at the tolerance floor).
pub fn monotone_after_first(norms: &[f64]) -> bool {
    norms.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15)
}

/// Frequency interval covered three times by the branch, from the fold flags.
pub fn multivalued_interval(branch: &ssr_core::continuation::ContinuationBranch) -> Option<(f64, f64)> {
    let folds: Vec<f64> = branch.points.iter().filter(|p| p.fold).map(|p| p.frequency()).collect();
    if folds.len() < 2 {
        return None;
    }
    let lo = folds.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = folds.iter().cloned().fold(0.0, f64::max);
    (hi > lo).then_some((lo, hi))
}

/// Amplitudes of dof 0 at frequency w, interpolated on every branch segment that crosses it.
pub fn amplitudes_at(branch: &ssr_core::continuation::ContinuationBranch, w: f64) -> Vec<f64> {
    branch
        .points
        .windows(2)
        .filter_map(|s| {
            let (w0, w1) = (s[0].frequency(), s[1].frequency());
            if (w0 - w) * (w1 - w) > 0.0 {
                return None;
            }
            let f = (w - w0) / (w1 - w0);
            Some(s[0].amplitude(0).unwrap() * (1.0 - f) + s[1].amplitude(0).unwrap() * f)
        })
        .collect()
}
