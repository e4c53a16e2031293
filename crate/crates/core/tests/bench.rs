mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use ssr_core::bench::*;
use ssr_core::discretization::Quadrature;
use ssr_core::model::{check_proportional_damping, modal_decompose_second_order};
use ssr_core::newton::newton_solve_periodic;
use ssr_core::nonlinear::jacobians;
use ssr_core::problem::{PeriodicProblem, Route};
use ssr_core::SsrError;

use common::*;

#[test]
fn two_dof_frequencies() {
    let sys = build_two_dof(1.0, 1.0, 0.3, TwoDofNonlinearity::Cubic(0.5)).unwrap();
    let mut w = modal_decompose_second_order(&sys).unwrap().omega0();
    w.sort_by(f64::total_cmp);
    assert!((w[0] - 1.0).abs() < 1e-12);
    assert!((w[1] - 3f64.sqrt()).abs() < 1e-12);
    assert!(check_proportional_damping(&sys).unwrap());
    assert_eq!(sys.damping, &sys.stiffness * 0.3);

    let light = build_two_dof(1.0, 1.0, 0.02, TwoDofNonlinearity::None).unwrap();
    assert_eq!(light.damping[(0, 0)], 0.04);
    assert_eq!(light.damping[(0, 1)], -0.02);
    assert!(build_two_dof(0.0, 1.0, 0.1, TwoDofNonlinearity::None).is_err());
    assert!(build_two_dof(1.0, 1.0, -0.1, TwoDofNonlinearity::None).is_err());
}

#[test]
fn spring_values() {
    let cubic = cubic_spring(2, 0.5);
    let mut out = [0.0; 2];
    cubic.eval(&[1.0, 3.0], &[0.0; 2], &mut out);
    assert_eq!(out, [0.5, 0.0]);
    cubic.eval(&[-1.0, 3.0], &[0.0; 2], &mut out);
    assert_eq!(out, [-0.5, 0.0]);

    let play = play_spring(2, 0.1, 0.1).unwrap();
    for (q, s) in [(0.05, 0.0), (0.1, 0.0), (0.2, 0.01), (-0.2, -0.01), (0.1 + 1e-12, 0.0)] {
        play.eval(&[q, 0.0], &[0.0; 2], &mut out);
        assert!((out[0] - s).abs() < 1e-12, "{q}: {}", out[0]);
    }
    assert!(matches!(play_spring(2, 0.1, 0.0), Err(SsrError::Model(_))));
}

#[test]
fn chain_equal_displacement_and_size() {
    let sys = build_chain(2, 1.0, 1.0, 1.0, 0.5).unwrap();
    let mut out = [0.0; 2];
    sys.nonlinearity.eval(&[0.4, 0.4], &[0.0; 2], &mut out);
    assert!((out[0] - 0.5 * 0.064).abs() < 1e-15 && (out[1] - 0.5 * 0.064).abs() < 1e-15);
    let big = build_chain(20, 1.0, 1.0, 1.0, 0.5).unwrap();
    assert!(check_proportional_damping(&big).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_force_is_potential_gradient(x in prop::collection::vec(-1.5f64..1.5, 5)) {
        let sys = build_chain(5, 1.0, 1.0, 1.0, 0.5).unwrap();
        let nl = &sys.nonlinearity;
        let mut s = [0.0; 5];
        nl.eval(&x, &[0.0; 5], &mut s);
        let h = 1e-6;
        for i in 0..5 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let g = (nl.potential(&xp).unwrap() - nl.potential(&xm).unwrap()) / (2.0 * h);
            prop_assert!((g - s[i]).abs() <= 1e-7 * (1.0 + s[i].abs()), "{} vs {}", g, s[i]);
        }
    }

    #[test]
    fn cubic_jacobian_matches_fd(q in -2.0f64..2.0) {
        let nl = cubic_spring(2, 0.5);
        let (dx, _) = jacobians(nl.as_ref(), &[q, 0.3], &[0.0; 2]);
        let h = 1e-6;
        let mut p = [0.0; 2];
        let mut m = [0.0; 2];
        nl.eval(&[q + h, 0.3], &[0.0; 2], &mut p);
        nl.eval(&[q - h, 0.3], &[0.0; 2], &mut m);
        let fd = (p[0] - m[0]) / (2.0 * h);
        prop_assert!((dx[(0, 0)] - fd).abs() < 1e-7);
        prop_assert!((dx[(0, 0)] - 1.5 * q * q).abs() < 1e-12);
    }

    #[test]
    fn forcing_tables(a in prop::collection::vec(-1.0f64..1.0, 1..5), w in 0.1f64..5.0, t in 0.0f64..50.0) {
        let f = harmonic_forcing(&a, w).unwrap();
        let mut out = vec![0.0; a.len()];
        f.eval(0.0, &mut out);
        prop_assert!(out.iter().all(|v| v.abs() < 1e-15));
        f.eval(t, &mut out);
        for (o, ai) in out.iter().zip(&a) {
            prop_assert!((o - ai * (w * t).sin()).abs() < 1e-12);
        }
        for term in &f.terms {
            let neg: Vec<i32> = term.kappa.iter().map(|k| -k).collect();
            let partner = f.terms.iter().find(|o| o.kappa == neg).unwrap();
            prop_assert!(partner.coeff.iter().zip(term.coeff.iter()).all(|(p, c)| (p - c.conj()).norm() == 0.0));
        }
    }
}

#[test]
fn two_tone_forcing_acts_on_first_mass() {
    let f = qper_forcing_two_tone(0.7, 1.3).unwrap();
    assert_eq!(f.k(), 2);
    let mut out = [0.0; 2];
    f.eval(1.1, &mut out);
    assert!((out[0] - 0.01 * ((0.7f64 * 1.1).sin() + (1.3f64 * 1.1).sin())).abs() < 1e-15);
    assert_eq!(out[1], 0.0);
}

#[test]
fn oracle_agrees_with_steady_state_solver() {
    let sys = build_two_dof(1.0, 1.0, 0.3, TwoDofNonlinearity::Cubic(0.5)).unwrap();
    let w = 0.9;
    let forcing = harmonic_forcing(&[0.1, 0.1], w).unwrap();
    let oracle = time_march_oracle(&sys, &forcing, &OracleSettings::default()).unwrap();
    assert!(oracle.decay_metric <= 1e-6);
    let p = PeriodicProblem::new(&sys, Route::Position, &forcing, 2.0 * PI / w, 128, Quadrature::Spectral).unwrap();
    let (s, _) = newton_solve_periodic(&p, None, 1e-12, 30).unwrap();
    for dof in 0..2 {
        // the oracle samples 200 points per period, so its max is low by at most (pi/200)^2/2
        let e = relerr(oracle.amplitude[dof], s.amplitude(dof), 1e-12);
        assert!(e < 5e-4, "dof {dof}: {e:e}");
    }
}

#[test]
fn undamped_oracle_reports_no_decay() {
    let sys = build_two_dof(1.0, 1.0, 0.0, TwoDofNonlinearity::None).unwrap();
    let forcing = harmonic_forcing(&[0.1, 0.0], 0.77).unwrap();
    let settings = OracleSettings { horizon_periods: 30, ..Default::default() };
    assert!(matches!(time_march_oracle(&sys, &forcing, &settings), Err(SsrError::TransientNotDecayed { periods: 30, .. })));
    let two = ssr_core::forcing::ForcingSpec::multi_sine(&[0.1, 0.0], vec![0.7, 1.1]).unwrap();
    assert!(time_march_oracle(&sys, &two, &settings).is_err());
}
