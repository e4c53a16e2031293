mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use ssr_core::bench::*;
use ssr_core::discretization::fourier::FrequencyIndexSet;
use ssr_core::discretization::Quadrature;
use ssr_core::forcing::ForcingSpec;
use ssr_core::linalg::sup_diff;
use ssr_core::model::MechanicalSystem;
use ssr_core::nonlinear::CubicSpring;
use ssr_core::picard::*;
use ssr_core::problem::{basis_for, PeriodicProblem, ResidualProblem, Route};
use ssr_core::SsrError;

use common::*;

fn cubic_two_dof(c: f64) -> MechanicalSystem {
    build_two_dof(1.0, 1.0, c, TwoDofNonlinearity::Cubic(0.5)).unwrap()
}

fn low_amplitude(route: Route, m: usize, quad: Quadrature) -> PeriodicProblem {
    let forcing = harmonic_forcing(&[0.01, 0.01], 0.4).unwrap();
    PeriodicProblem::new(&cubic_two_dof(0.3), route, &forcing, 2.0 * PI / 0.4, m, quad).unwrap()
}

#[test]
fn linear_system_converges_in_one_iteration() {
    let sys = one_dof(1.0, 0.05);
    let forcing = harmonic_forcing(&[1.0], 0.5).unwrap();
    let p = PeriodicProblem::new(&sys, Route::Full, &forcing, 4.0 * PI, 256, Quadrature::SplitTrapezoid).unwrap();
    let (s, trace) = picard_periodic(&p, None, 1e-10, 10).unwrap();
    assert_eq!(trace.iterations, 1);
    assert_eq!(trace.status, Status::Converged);
    assert!((s.amplitude(0) - frf_amplitude(1.0, 0.05, 0.5)).abs() < 1e-3);
    assert!((s.amplitude(0) - 1.33038).abs() < 1e-3);
}

#[test]
fn zero_forcing_gives_zero_in_one_iteration() {
    let forcing = ForcingSpec::zero(2, vec![0.4]);
    let p = PeriodicProblem::new(&cubic_two_dof(0.3), Route::Position, &forcing, 2.0 * PI / 0.4, 64, Quadrature::SplitTrapezoid)
        .unwrap();
    let (s, trace) = picard_periodic_reduced(&p, None, 1e-12, 10).unwrap();
    assert_eq!(trace.iterations, 1);
    assert!(s.samples.iter().all(|v| *v == 0.0));
}

#[test]
fn routes_are_enforced() {
    let p = low_amplitude(Route::Position, 32, Quadrature::SplitTrapezoid);
    assert!(picard_periodic(&p, None, 1e-10, 10).is_err());
    let q = low_amplitude(Route::Full, 32, Quadrature::SplitTrapezoid);
    assert!(picard_periodic_reduced(&q, None, 1e-10, 10).is_err());
}

fn time_march_error(p: &PeriodicProblem) -> f64 {
    let (s, trace) = picard_periodic(p, None, 1e-12, 200).unwrap();
    assert_eq!(trace.status, Status::Converged);
    let m = p.grid.m;
    let settings = OracleSettings { steps_per_period: 256, ..Default::default() };
    let oracle = time_march_oracle(p.system(), &p.forcing, &settings).unwrap();
    let amp = oracle.amplitude[0];
    // the last oracle window starts at a whole number of periods
    let stride = 256 / m;
    let pointwise = s.displacement(0).iter().enumerate().map(|(j, x)| (x - oracle.positions[stride * j][0]).abs()).fold(0.0, f64::max);
    relerr(s.amplitude(0), amp, 1e-12).max(pointwise / amp)
}

#[test]
fn low_amplitude_matches_time_march() {
    // spectral rule at m = 128, split trapezoid needs m = 256 for the same accuracy
    let e = time_march_error(&low_amplitude(Route::Full, 128, Quadrature::Spectral));
    assert!(e < 1e-3, "{e:e}");
    let e = time_march_error(&low_amplitude(Route::Full, 256, Quadrature::SplitTrapezoid));
    assert!(e < 1e-3, "{e:e}");
    let e = time_march_error(&low_amplitude(Route::Full, 128, Quadrature::SplitTrapezoid));
    assert!(e < 2e-3, "{e:e}");
}

#[test]
fn full_and_position_routes_agree() {
    let (full, _) = picard_periodic(&low_amplitude(Route::Full, 128, Quadrature::SplitTrapezoid), None, 1e-13, 200).unwrap();
    let (pos, _) =
        picard_periodic_reduced(&low_amplitude(Route::Position, 128, Quadrature::SplitTrapezoid), None, 1e-13, 200).unwrap();
    let diff = full.positions().iter().zip(pos.positions()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "{diff:e}");
}

/// Derivative of nodal samples via the discrete Fourier series.
fn spectral_derivative(x: &[f64], period: f64) -> Vec<f64> {
    let m = x.len();
    let w = 2.0 * PI / period;
    let coeffs: Vec<C64> = (0..m)
        .map(|k| x.iter().enumerate().map(|(j, v)| C64::from_polar(*v, -2.0 * PI * (k * j) as f64 / m as f64)).sum::<C64>() / m as f64)
        .collect();
    (0..m)
        .map(|j| {
            let mut s = C64::new(0.0, 0.0);
            for (k, c) in coeffs.iter().enumerate() {
                let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
                if 2 * k == m {
                    continue;
                }
                s += C64::new(0.0, kk * w) * c * C64::from_polar(1.0, 2.0 * PI * (k * j) as f64 / m as f64);
            }
            s.re
        })
        .collect()
}

#[test]
fn velocity_kernel_matches_spectral_derivative() {
    let p = low_amplitude(Route::Position, 256, Quadrature::SplitTrapezoid);
    let (s, _) = picard_periodic_reduced(&p, None, 1e-13, 200).unwrap();
    let v = p.velocity(&s.samples).unwrap();
    for dof in 0..2 {
        let x = s.displacement(dof);
        let dx = spectral_derivative(&x, p.period());
        let scale = dx.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let err = dx.iter().enumerate().map(|(j, d)| (v[2 * j + dof] - d).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3 * scale, "dof {dof}: {err:e} vs {scale:e}");
    }
}

#[test]
fn converged_solution_has_small_residual() {
    let tol = 1e-10;
    let p = low_amplitude(Route::Full, 64, Quadrature::SplitTrapezoid);
    let (s, _) = picard_periodic(&p, None, tol, 200).unwrap();
    let r = p.residual(&s.samples);
    assert!(sup_diff(&r, &vec![0.0; r.len()], 4) <= 2.0 * tol);
}

#[test]
fn resonance_window_diverges_at_larger_amplitude() {
    let sys = cubic_two_dof(0.3);
    let forcing = harmonic_forcing(&[0.5, 0.5], 1.0).unwrap();
    let p = PeriodicProblem::new(&sys, Route::Full, &forcing, 2.0 * PI, 64, Quadrature::SplitTrapezoid).unwrap();
    let err = picard_periodic(&p, None, 1e-8, 2000).unwrap_err();
    assert!(matches!(err, SsrError::Diverged { .. } | SsrError::MaxIter { .. }), "{err}");
}

#[test]
fn quasiperiodic_far_from_resonance_converges_quickly() {
    let sys = cubic_two_dof(0.02);
    let forcing = qper_forcing_two_tone(0.43, 2.57).unwrap();
    let basis = basis_for(&sys, Route::Position).unwrap();
    let (u, trace) =
        picard_quasiperiodic(&sys, &basis, &forcing, &QuasiPeriodicSettings::default(), None, 1e-10, 200).unwrap();
    assert!(trace.iterations <= 20, "{}", trace.iterations);
    assert!(u.is_conjugate_symmetric(1e-10));
    assert!(fourier_tail(&u) <= 1e-3);
}

#[test]
fn quasiperiodic_iterations_grow_towards_resonance() {
    let sys = cubic_two_dof(0.02);
    let basis = basis_for(&sys, Route::Position).unwrap();
    let mut counts = Vec::new();
    let mut failed = false;
    // walk towards (1, sqrt 3); at amplitude 0.01 the iteration slows down but never fails
    for s in [0.5, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0] {
        let forcing = ForcingSpec::multi_sine(&[0.02, 0.0], vec![0.3 + s * 0.7 + 1e-3, 3f64.sqrt() * (0.4 + 0.6 * s)]).unwrap();
        match picard_quasiperiodic(&sys, &basis, &forcing, &QuasiPeriodicSettings::default(), None, 1e-10, 400) {
            Ok((_, trace)) => counts.push(trace.iterations),
            Err(SsrError::Diverged { .. }) | Err(SsrError::MaxIter { .. }) => {
                failed = true;
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(counts.len() >= 2 && counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
    assert!(failed, "{counts:?}");
}

#[test]
fn single_frequency_torus_matches_periodic_solver() {
    let sys = cubic_two_dof(0.3);
    let w = 0.8;
    let forcing = harmonic_forcing(&[0.05, 0.0], w).unwrap();
    let basis = basis_for(&sys, Route::Position).unwrap();
    let settings = QuasiPeriodicSettings { kmax: 7, adaptive: false, torus_n: Some(16), ..Default::default() };
    let (u, _) = picard_quasiperiodic(&sys, &basis, &forcing, &settings, None, 1e-14, 200).unwrap();
    let m = 64;
    let p = PeriodicProblem::new(&sys, Route::Position, &forcing, 2.0 * PI / w, m, Quadrature::Spectral).unwrap();
    let (s, _) = picard_periodic_reduced(&p, None, 1e-14, 200).unwrap();
    let mut x = [0.0; 2];
    let mut diff: f64 = 0.0;
    for j in 0..m {
        u.eval(&[2.0 * PI * j as f64 / m as f64], &mut x);
        diff = diff.max((x[0] - s.samples[2 * j]).abs()).max((x[1] - s.samples[2 * j + 1]).abs());
    }
    assert!(diff < 1e-8, "{diff:e}");
    let set = FrequencyIndexSet::box_set(vec![w], 7).unwrap();
    assert_eq!(u.index_set.indices, set.indices);
}

#[test]
fn sampled_lipschitz_matches_analytic() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let sys = MechanicalSystem::new(one.clone(), one.clone() * 0.1, one, Arc::new(CubicSpring { n: 1, dof: 0, coeff: 0.5 }))
        .unwrap();
    let analytic = lipschitz_over_ball(&sys, 0.0, 0.5);
    assert!((analytic - 0.375).abs() < 1e-15);
    // without the 1.2 safety factor; 1e3 pairs rarely land close enough to the edge in one dimension
    let raw = sampled_lipschitz(&sys, &[0.0], 0.5, 100_000, 3) / 1.2;
    assert!(raw <= analytic && raw >= 0.95 * analytic, "{raw}");
}

#[test]
fn linear_system_is_certified_for_any_radius() {
    let sys = one_dof(1.0, 0.05);
    let forcing = harmonic_forcing(&[1.0], 0.5).unwrap();
    let p = PeriodicProblem::new(&sys, Route::Full, &forcing, 4.0 * PI, 64, Quadrature::SplitTrapezoid).unwrap();
    let x0 = picard_periodic(&p, None, 1e-12, 5).unwrap().0.samples;
    for delta in [1e-9, 1.0, 1e6] {
        let c = certify_periodic(&p, Some(&x0), Some(delta), 2.0).unwrap();
        assert!(c.satisfied(), "{c:?}");
        assert_eq!(c.lipschitz_estimate, 0.0);
    }
}

#[test]
fn certificate_fields() {
    let c = certify(2.0, 1.5, 0.1, 0.01, 0.02, 2.0);
    assert!((c.contraction_constant() - 0.6).abs() < 1e-15);
    assert!(!c.contraction_ok && c.theorem_contraction_ok);
    assert!(!c.ball_ok && c.theorem_ball_ok);
    let ok = certify(1.0, 1.0, 0.1, 0.01, 0.05, 2.0);
    assert!(ok.satisfied());
}

#[test]
fn certified_ball_has_unique_fixed_point() {
    let p = low_amplitude(Route::Full, 64, Quadrature::SplitTrapezoid);
    let c = certify_periodic(&p, None, None, 2.0).unwrap();
    assert!(c.satisfied(), "{c:?}");
    let tol = 1e-11;
    let (a, _) = picard_periodic(&p, None, tol, 500).unwrap();
    // another start inside the ball
    let z1: Vec<f64> = (0..p.len()).map(|i| 0.3 * c.delta * ((i as f64) * 0.7).sin()).collect();
    let (b, _) = picard_periodic(&p, Some(&z1), tol, 500).unwrap();
    assert!(sup_diff(&a.samples, &b.samples, 4) <= 2.0 * tol);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn certified_runs_converge_monotonically(seed in 0u64..100_000) {
        let p = certificate_case(seed, 32);
        let c = certify_periodic(&p, None, None, 2.0).unwrap();
        if c.satisfied() {
            let run = run_picard(&p, &vec![0.0; p.len()], 1e-10, 2000);
            prop_assert_eq!(run.trace.status, Status::Converged);
            prop_assert!(monotone_after_first(&run.trace.residual_norms), "{:?}", run.trace.residual_norms);
        }
    }
}
