use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use ssr_core::model::*;
use ssr_core::nonlinear::{CubicSpring, FnNonlinearity};

/// Random SPD matrix A A^T + shift I from a flat vector of entries.
fn spd(n: usize, entries: &[f64], shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(n, n, entries.iter().cloned().take(n * n));
    &a * a.transpose() + DMatrix::identity(n, n) * shift
}

fn system_strategy() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=6).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-1.0f64..1.0, n * n),
            prop::collection::vec(-1.0f64..1.0, n * n),
            prop::collection::vec(-0.3f64..0.3, n * n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn first_order_eigenpairs((n, me, ke, ce) in system_strategy()) {
        let m = spd(n, &me, 0.5);
        let k = spd(n, &ke, 0.5);
        let c = spd(n, &ce, 0.05);
        let sys = MechanicalSystem::linear(m, c, k).unwrap();
        let fsys = lift_to_first_order(&sys).unwrap();
        let basis = diagonalize_first_order(&fsys).unwrap();
        let a = fsys.a.map(|x| C64::new(x, 0.0));
        let b = fsys.b.map(|x| C64::new(x, 0.0));
        let anorm = fsys.a.norm();
        for (j, lam) in basis.lambdas.iter().enumerate() {
            let v = basis.v.column(j);
            let r = &a * v - (&b * v) * *lam;
            prop_assert!(r.norm() <= 1e-10 * anorm * v.norm().max(1.0), "residual {}", r.norm());
        }
        let eye = DMatrix::<C64>::identity(2 * n, 2 * n);
        prop_assert!((&basis.v * &basis.vinv - &eye).norm() <= 1e-10 * basis.cond_product.max(1.0));
        // B V diag(lambda) V^{-1} = A
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(basis.lambdas.clone()));
        let back = &b * &basis.v * lam * &basis.vinv;
        prop_assert!((back - &a).norm() <= 1e-8 * anorm);
        // conjugates adjacent, ordering by |Im| then Re across representatives
        let mut j = 0;
        while j < basis.lambdas.len() {
            let l = basis.lambdas[j];
            if l.im != 0.0 {
                prop_assert_eq!(basis.lambdas[j + 1], l.conj());
                j += 2;
            } else {
                j += 1;
            }
        }
    }

    #[test]
    fn proportional_routes_agree((n, me, ke, _ce) in system_strategy(), a0 in 0.0f64..0.4, a1 in 0.0f64..0.4) {
        let m = spd(n, &me, 0.5);
        let k = spd(n, &ke, 0.5);
        let c = &m * a0 + &k * a1 + DMatrix::identity(n, n) * 0.0;
        let sys = MechanicalSystem::linear(m.clone(), c, k.clone()).unwrap();
        prop_assume!(check_proportional_damping(&sys).unwrap());
        let modal = match modal_decompose_second_order(&sys) {
            Ok(b) => b,
            Err(_) => return Ok(()),
        };
        let utmu = modal.u.transpose() * &m * &modal.u;
        prop_assert!((utmu - DMatrix::identity(n, n)).amax() <= 1e-10);
        for (j, mode) in modal.modes.iter().enumerate() {
            let u = modal.u.column(j);
            let r = &k * u - (&m * u) * (mode.omega0 * mode.omega0);
            prop_assert!(r.norm() <= 1e-10 * k.norm());
            match mode.class {
                DampingClass::Under => {
                    let s = mode.alpha * mode.alpha + mode.omega * mode.omega;
                    prop_assert!((s - mode.omega0 * mode.omega0).abs() <= 1e-10 * s);
                }
                DampingClass::Over => {
                    let w2 = mode.omega0 * mode.omega0;
                    prop_assert!((mode.beta * mode.gamma - w2).abs() <= 1e-10 * w2);
                    prop_assert!((mode.beta + mode.gamma - 2.0 * mode.alpha).abs() <= 1e-10 * mode.alpha.abs());
                }
                DampingClass::Critical => {}
            }
        }
        // first-order eigenvalues are (-zeta +- sqrt(zeta^2 - 1)) w0
        if modal.modes.iter().all(|m| m.class != DampingClass::Critical && !m.near_critical) {
            if let Ok(fb) = diagonalize_first_order(&lift_to_first_order(&sys).unwrap()) {
                let mut expected: Vec<C64> = modal.modes.iter().flat_map(|m| m.eigenvalues()).collect();
                for got in &fb.lambdas {
                    let (idx, dist) = expected
                        .iter()
                        .enumerate()
                        .map(|(i, e)| (i, (e - got).norm()))
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .unwrap();
                    prop_assert!(dist <= 1e-8 * got.norm().max(1.0), "{got} off by {dist}");
                    expected.remove(idx);
                }
            }
        }
    }
}

#[test]
fn every_violation_is_reported() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let k = DMatrix::identity(3, 3);
    let err = MechanicalSystem::linear(m, c, k).unwrap_err().to_string();
    assert!(err.contains("M is not symmetric"), "{err}");
    assert!(err.contains("C is not symmetric"), "{err}");
    assert!(err.contains("K is 3x3"), "{err}");
}

#[test]
fn nonzero_restoring_force_at_rest_rejected() {
    let eye = DMatrix::identity(2, 2);
    let nl = Arc::new(FnNonlinearity { n: 2, position_only: true, f: |x: &[f64], _v: &[f64], out: &mut [f64]| {
        out[0] = 1.0 + x[0];
        out[1] = 0.0;
    } });
    assert!(MechanicalSystem::new(eye.clone(), eye.clone() * 0.1, eye.clone(), nl).is_err());
    let wrong_dim = Arc::new(CubicSpring { n: 3, dof: 0, coeff: 1.0 });
    assert!(MechanicalSystem::new(eye.clone(), eye.clone() * 0.1, eye, wrong_dim).is_err());
}

#[test]
fn indefinite_mass_rejected() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let eye = DMatrix::identity(2, 2);
    assert!(MechanicalSystem::linear(m, eye.clone() * 0.1, eye).is_err());
}

#[test]
fn nonproportional_damping_refused_by_position_route() {
    let m = DMatrix::identity(2, 2);
    let k = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
    let c = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.0]);
    let sys = MechanicalSystem::linear(m, c, k).unwrap();
    assert!(!check_proportional_damping(&sys).unwrap());
    assert!(matches!(modal_decompose_second_order(&sys), Err(ssr_core::SsrError::Proportionality { .. })));
    // the general first-order route still works
    assert!(diagonalize_first_order(&lift_to_first_order(&sys).unwrap()).is_ok());
}
