mod common;

use aslopt_core::asl::{build_equality_system, keypoint_states};
use aslopt_core::linsys::{matrix_exponential, propagate};
use aslopt_core::optimality::{equality_jacobian, keypoint_jacobian, necessary_condition_test, verdict_from_jacobian};
use aslopt_core::oracle::finite_difference_jacobian;
use aslopt_core::{Error, Tolerances};
use nalgebra::{DMatrix, DVector};

#[test]
fn analytic_blocks_match_central_differences() {
    let mut r = common::rng(11);
    for case in 0..20 {
        let n = 1 + case % 5;
        let m = 1 + case % 8;
        let (dyns, x0, times) = common::random_schedule(&mut r, n, m);
        let xs = keypoint_states(&dyns, &x0, &times).unwrap();
        let exact = keypoint_jacobian(&dyns, &times, &xs).unwrap();
        let fd = finite_difference_jacobian(&dyns, &x0, &times, 1e-6).unwrap();
        for i in 0..m {
            for j in 0..m {
                let err = (&exact[i][j] - &fd[i][j]).norm() / exact[i][j].norm().max(1.0);
                assert!(err < 1e-6, "case {case} block ({i},{j}): {err:e}");
            }
        }
    }
}

#[test]
fn later_switches_do_not_move_earlier_states() {
    let mut r = common::rng(5);
    let (dyns, x0, times) = common::random_schedule(&mut r, 3, 6);
    let xs = keypoint_states(&dyns, &x0, &times).unwrap();
    let blocks = keypoint_jacobian(&dyns, &times, &xs).unwrap();
    for i in 0..6 {
        for j in i + 1..6 {
            assert_eq!(blocks[i][j], DVector::zeros(3));
        }
    }
}

#[test]
fn bang_bang_columns() {
    // dx_M/dt_i = (u_i - u_(i+1)) e^(A (t_M - t_i)) b for interior switches
    let durs = [0.4, 0.7, 0.3, 0.5];
    let (sys, traj) = common::alternating_chain(3, &durs, 1);
    let xs = traj.keypoint_states().unwrap();
    let blocks = keypoint_jacobian(&traj.dynamics(), &traj.times, &xs).unwrap();
    let m = traj.m();
    let tm = traj.final_time();
    let mut u = 1.0;
    for i in 0..m - 1 {
        let e = matrix_exponential(&(&sys.a * (tm - traj.times[i + 1]))).unwrap();
        let expect = &e * &sys.b * (u - -u);
        assert!((&blocks[m - 1][i] - &expect).norm() < 1e-12, "switch {}", i + 1);
        u = -u;
    }
    let last = &sys.a * &xs[m] + &sys.b * u;
    assert!((&blocks[m - 1][m - 1] - last).norm() < 1e-12);
}

#[test]
fn verdict_ignores_row_scaling_and_mixing() {
    let tol = Tolerances::default();
    let mut r = common::rng(2);
    for rows in 1..=4 {
        let j = DMatrix::from_fn(rows, 6, |_, _| rand::Rng::random_range(&mut r, -1.0..1.0));
        let base = verdict_from_jacobian(&j, &tol).unwrap();
        let scale = DMatrix::from_diagonal(&DVector::from_fn(rows, |i, _| 10f64.powi(i as i32 - 2)));
        let mut mix = DMatrix::identity(rows, rows);
        for i in 1..rows {
            mix[(i, 0)] = 0.5;
        }
        for t in [scale, mix] {
            let v = verdict_from_jacobian(&(&t * &j), &tol).unwrap();
            assert_eq!((v.rank, v.full_rank, v.satisfied), (base.rank, base.full_rank, base.satisfied));
        }
    }
}

#[test]
fn double_integrator_optimum_is_a_candidate() {
    let tol = Tolerances::default();
    let (sys, traj) = common::alternating_chain(2, &[1.0, 1.0], 1);
    let h = build_equality_system(&sys, &traj, &DVector::from_vec(vec![0.0, 1.0]), &tol).unwrap();
    let v = necessary_condition_test(&h, &tol).unwrap();
    assert_eq!((v.rows, v.cols, v.rank), (2, 2, 1));
    assert!(v.satisfied);
}

#[test]
fn extra_switch_fails_the_test() {
    // three switches for a double integrator: the switch columns span R^2
    let tol = Tolerances::default();
    let (sys, traj) = common::alternating_chain(2, &[0.5, 1.0, 0.6, 0.3], 1);
    let xf = traj.final_state().unwrap();
    let h = build_equality_system(&sys, &traj, &xf, &tol).unwrap();
    let v = necessary_condition_test(&h, &tol).unwrap();
    assert_eq!(v.rank, 2);
    assert!(!v.satisfied);
    assert_eq!(v.dof(), 2);
    let j = equality_jacobian(&h, &traj.times).unwrap();
    assert_eq!(j.ncols(), 4);
}

#[test]
fn terminal_rows_are_keypoint_blocks() {
    let mut r = common::rng(8);
    let x0 = common::random_vector(&mut r, 3, 0.5);
    let sys = common::chain_free(3);
    let spec: Vec<_> = [0.3, 0.4, 0.5].iter().enumerate().map(|(i, d)| (common::bang(if i % 2 == 0 { 1 } else { -1 }), *d)).collect();
    let traj = aslopt_core::asl::extract_asl(&sys, &spec, &x0, &Tolerances::default()).unwrap();
    let xf = traj.final_state().unwrap();
    let h = build_equality_system(&sys, &traj, &xf, &Tolerances::default()).unwrap();
    let j = equality_jacobian(&h, &traj.times).unwrap();
    let xs = traj.keypoint_states().unwrap();
    let blocks = keypoint_jacobian(&traj.dynamics(), &traj.times, &xs).unwrap();
    for c in 0..3 {
        for k in 0..3 {
            assert!((j[(k, c)] - blocks[2][c][k]).abs() < 1e-14);
        }
    }
    // last arc is +1
    let again = propagate(&sys.a, &sys.b, &xs[2], 0.5).unwrap();
    assert!((again - xf).norm() < 1e-14);
}

#[test]
fn empty_system_is_degenerate() {
    let tol = Tolerances::default();
    assert!(matches!(verdict_from_jacobian(&DMatrix::zeros(0, 3), &tol), Err(Error::Degenerate(_))));
    assert!(matches!(verdict_from_jacobian(&DMatrix::zeros(2, 0), &tol), Err(Error::Degenerate(_))));
}
