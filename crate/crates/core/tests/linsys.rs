mod common;

use aslopt_core::experiments::viia_system;
use aslopt_core::linsys::{flow, matrix_exponential, phi_vector, propagate, Constraint, LinearSystem};
use aslopt_core::{Error, Tolerances};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn viia_constraint_orders() {
    let sys = viia_system();
    let tol = Tolerances::default();
    let third = sys.constraint_order(0, tol.piv).unwrap();
    assert_eq!(third.order, 3);
    let first = sys.constraint_order(1, tol.piv).unwrap();
    assert_eq!(first.order, 1);
    assert!((first.pivot - 1.0).abs() < 1e-15);
    assert_eq!(first.gain, DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]));
}

#[test]
fn gain_zeroes_the_order_derivative() {
    // c^T A^r x + c^T A^(r-1) b (a^T x) vanishes for every x
    let sys = viia_system();
    let mut r = common::rng(3);
    for p in 0..2 {
        let info = sys.constraint_order(p, 1e-10).unwrap();
        let c = &sys.constraints[p].c;
        let mut row = c.clone();
        for _ in 0..info.order - 1 {
            row = sys.a.transpose() * row;
        }
        for _ in 0..5 {
            let x = common::random_vector(&mut r, 4, 3.0);
            let v = (sys.a.transpose() * &row).dot(&x) + row.dot(&sys.b) * info.gain.dot(&x);
            assert!(v.abs() < 1e-12, "{v}");
        }
    }
}

#[test]
fn chain_constraint_order_is_state_index() {
    let sys = common::chain_box(5, &[1.0; 5]);
    for k in 1..=5 {
        for upper in [false, true] {
            let p = 2 * (k - 1) + usize::from(upper);
            let info = sys.constraint_order(p, 1e-10).unwrap();
            assert_eq!(info.order, k);
            assert!(info.gain.iter().all(|g| *g == 0.0));
        }
    }
}

#[test]
fn order_invariant_under_positive_scaling() {
    let sys = viia_system();
    for p in 0..2 {
        let base = sys.constraint_order(p, 1e-10).unwrap();
        for s in [1e-3, 0.5, 7.0, 1e4] {
            let mut scaled = sys.clone();
            scaled.constraints[p] = Constraint {
                c: &sys.constraints[p].c * s,
                d: sys.constraints[p].d * s,
            };
            let info = scaled.constraint_order(p, 1e-10).unwrap();
            assert_eq!(info.order, base.order);
            assert!((&info.gain - &base.gain).norm() < 1e-12 * base.gain.norm().max(1.0));
        }
    }
}

#[test]
fn invalid_inputs() {
    let m = DMatrix::from_element(2, 2, f64::NAN);
    assert!(matches!(matrix_exponential(&m), Err(Error::InvalidInput(_))));
    let a = DMatrix::zeros(2, 2);
    let b = DVector::zeros(2);
    assert!(propagate(&a, &b, &DVector::zeros(2), -1.0).is_err());
    // zero constraint row
    let (a, b) = aslopt_core::linsys::chain_matrices(2);
    let bad = vec![Constraint { c: DVector::zeros(2), d: 0.0 }];
    assert!(LinearSystem::new(a.clone(), b.clone(), bad, 1.0).is_err());
    assert!(LinearSystem::new(a, b, vec![], 0.0).is_err());
}

#[test]
fn forced_response_of_singular_dynamics() {
    // A singular, b outside its range: the integral term needs the augmented form
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]);
    let b = DVector::from_vec(vec![1.0, 1.0]);
    let (phi, gamma) = flow(&a, &b, 2.0).unwrap();
    assert!((phi[(1, 1)] - (-2.0f64).exp()).abs() < 1e-14);
    assert!((gamma[0] - 2.0).abs() < 1e-14);
    assert!((gamma[1] - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
}

#[test]
fn phi_matches_chain_step_response() {
    // x' = A x + b with the chain gives x_(k+1)(t) = t^(k+1)/(k+1)! from rest
    let (a, b) = aslopt_core::linsys::chain_matrices(4);
    let t = 1.7;
    let x = propagate(&a, &b, &DVector::zeros(4), t).unwrap();
    let phi = phi_vector(t, 4);
    for k in 0..4 {
        assert!((x[k] - phi[k]).abs() < 1e-13);
    }
}

fn small_matrix(n: usize, max_norm: f64) -> impl Strategy<Value = DMatrix<f64>> {
    (proptest::collection::vec(-1.0f64..1.0, n * n), 0.0..max_norm).prop_map(move |(v, s)| {
        let m = DMatrix::from_vec(n, n, v);
        let norm = m.norm();
        if norm == 0.0 {
            m
        } else {
            m * (s / norm)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup(
        a in small_matrix(3, 2.0),
        b in proptest::collection::vec(-1.0f64..1.0, 3),
        x in proptest::collection::vec(-1.0f64..1.0, 3),
        s in 0.0f64..1.5,
        t in 0.0f64..1.5,
    ) {
        let b = DVector::from_vec(b);
        let x = DVector::from_vec(x);
        let two = propagate(&a, &b, &propagate(&a, &b, &x, s).unwrap(), t).unwrap();
        let one = propagate(&a, &b, &x, s + t).unwrap();
        prop_assert!((&two - &one).norm() <= 1e-10 * one.norm().max(1.0));
    }

    #[test]
    fn exponential_inverse(m in small_matrix(4, 5.0)) {
        let e = matrix_exponential(&m).unwrap();
        let f = matrix_exponential(&(-&m)).unwrap();
        let err = (&e * &f - DMatrix::identity(4, 4)).norm();
        prop_assert!(err < 1e-10, "{}", err);
    }
}
