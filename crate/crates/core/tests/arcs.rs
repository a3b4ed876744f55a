mod common;

use aslopt_core::arcs::{arc_control, make_constrained, make_unconstrained, BehaviorKind};
use aslopt_core::experiments::viia_system;
use aslopt_core::linalg::{min_norm_solve, null_space};
use aslopt_core::linsys::{chain_matrices, propagate, Constraint, LinearSystem};
use aslopt_core::Tolerances;
use nalgebra::{DMatrix, DVector};

fn example_one() -> LinearSystem {
    let (a, b) = chain_matrices(3);
    let cons = vec![
        Constraint { c: DVector::from_vec(vec![1.0, 0.0, 1.0]), d: -1.0 },
        Constraint { c: DVector::from_vec(vec![0.0, 1.0, 0.0]), d: 0.0 },
    ];
    LinearSystem::new(a, b, cons, 1.0).unwrap()
}

#[test]
fn unconstrained_viia_negative() {
    let sys = viia_system();
    let beh = make_unconstrained(&sys, -1).unwrap();
    assert_eq!(beh.b_hat, DVector::from_vec(vec![0.0, 0.0, -2.0, 1.0]));
    assert_eq!(beh.a_hat, sys.a);
    assert_eq!(beh.rows(), 0);
    assert!(make_unconstrained(&sys, 0).is_err());
}

#[test]
fn chain_velocity_face() {
    let sys = common::chain_box(4, &[1.0, 0.7, 2.0, 3.0]);
    let tol = Tolerances::default();
    // x2 <= 0.7
    let beh = make_constrained(&sys, &[3], &tol).unwrap();
    assert_eq!(beh.rows(), 2);
    assert_eq!(beh.b_hat, DVector::zeros(4));
    let on = DVector::from_vec(vec![0.0, 0.7, 1.3, -2.0]);
    assert!(beh.residual(&on) < 1e-15);
    let off = DVector::from_vec(vec![0.1, 0.7, 1.3, -2.0]);
    assert!(beh.residual(&off) > 1e-3);
    for x in [&on, &off] {
        assert_eq!(arc_control(&sys, &beh, x), 0.0);
    }
}

#[test]
fn viia_first_order_feedback() {
    let sys = viia_system();
    let beh = make_constrained(&sys, &[1], &Tolerances::default()).unwrap();
    let x = DVector::from_vec(vec![0.1, 0.0, 0.2, 0.3]);
    assert!((arc_control(&sys, &beh, &x) - 0.2).abs() < 1e-15);
    let expect = &sys.a + &sys.b * DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]).transpose();
    assert!((&beh.a_hat - expect).norm() < 1e-15);
}

/// Random points satisfying `F x + g = 0`.
fn points_on(f: &DMatrix<f64>, g: &DVector<f64>, seed: u64, count: usize) -> Vec<DVector<f64>> {
    let mut r = common::rng(seed);
    let base = min_norm_solve(f, &(-g), 1e-12);
    let ns = null_space(f, 1e-10);
    (0..count)
        .map(|_| {
            let c = common::random_vector(&mut r, ns.ncols(), 1.0);
            &base + &ns * c
        })
        .collect()
}

#[test]
fn constrained_flow_stays_on_face() {
    let tol = Tolerances::default();
    let cases: Vec<(LinearSystem, Vec<usize>)> = vec![
        (viia_system(), vec![0]),
        (viia_system(), vec![1]),
        (common::chain_box(4, &[1.0, 0.5, 0.5, 2.0]), vec![5]),
        (common::chain_box(3, &[1.0, 1.0, 1.0]), vec![0]),
        (example_one(), vec![0, 1]),
    ];
    for (k, (sys, active)) in cases.iter().enumerate() {
        let beh = make_constrained(sys, active, &tol).unwrap();
        for x0 in points_on(&beh.f, &beh.g, k as u64, 4) {
            for i in 1..=10 {
                let x = propagate(&beh.a_hat, &beh.b_hat, &x0, 0.1 * i as f64).unwrap();
                let r = (&beh.f * &x + &beh.g).amax();
                assert!(r < 1e-9 * x.norm().max(1.0), "case {k}: residual {r}");
            }
        }
    }
}

#[test]
fn gains_agree_on_a_shared_arc() {
    let sys = example_one();
    let beh = make_constrained(&sys, &[0, 1], &Tolerances::default()).unwrap();
    assert_eq!(beh.gains.len(), 2);
    for x0 in points_on(&beh.f, &beh.g, 9, 3) {
        for i in 0..=5 {
            let x = propagate(&beh.a_hat, &beh.b_hat, &x0, 0.2 * i as f64).unwrap();
            let u0 = beh.gains[0].gain.dot(&x);
            let u1 = beh.gains[1].gain.dot(&x);
            assert!((u0 - u1).abs() < 1e-9, "{u0} vs {u1}");
        }
    }
}

#[test]
fn active_set_order_does_not_matter() {
    let sys = example_one();
    let tol = Tolerances::default();
    let a = make_constrained(&sys, &[0, 1], &tol).unwrap();
    let b = make_constrained(&sys, &[1, 0], &tol).unwrap();
    let aug = |s: &aslopt_core::arcs::SystemBehavior| {
        DMatrix::from_fn(s.f.nrows(), 4, |i, j| if j < 3 { s.f[(i, j)] } else { s.g[i] })
    };
    assert!(common::same_row_space(&aug(&a), &aug(&b), 1e-10));
    assert_eq!(a.a_hat, b.a_hat);
    assert_eq!(a.kind, BehaviorKind::Constrained { active: vec![0, 1] });
}

#[test]
fn empty_and_unknown_active_sets() {
    let sys = viia_system();
    let tol = Tolerances::default();
    assert!(make_constrained(&sys, &[], &tol).is_err());
    assert!(make_constrained(&sys, &[2], &tol).is_err());
}
