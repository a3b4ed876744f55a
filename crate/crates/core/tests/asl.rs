mod common;

use aslopt_core::arcs::{make_constrained, make_unconstrained, BehaviorKind};
use aslopt_core::asl::{
    build_equality_system, check_feasible, connection_conditions, end_feasibility, extract_asl, re_extract,
    tangent_condition, EndStatus, Side, SideOrder, TangentStatus, TimedTrajectory,
};
use aslopt_core::experiments::{viia_trajectory, viib_trajectory, viic_seed};
use aslopt_core::linsys::{propagate, LinearSystem};
use aslopt_core::{Error, Tolerances};
use nalgebra::DVector;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

#[test]
fn double_integrator_tangency() {
    // x1 is velocity, x2 position; x2 <= 1 is id 3
    let sys = common::chain_box(2, &[10.0, 1.0]);
    let tol = Tolerances::default();
    let down = make_unconstrained(&sys, -1).unwrap();
    assert_eq!(tangent_condition(&sys, &down, &v(&[0.0, 1.0]), 3, &tol).unwrap(), TangentStatus::Tangent(2));
    assert_eq!(tangent_condition(&sys, &down, &v(&[0.5, 1.0]), 3, &tol).unwrap(), TangentStatus::Crossing(1));
    assert_eq!(tangent_condition(&sys, &down, &v(&[0.0, 0.5]), 3, &tol).unwrap(), TangentStatus::NotTouching);
    assert_eq!(tangent_condition(&sys, &down, &v(&[0.0, 1.1]), 3, &tol).unwrap(), TangentStatus::Violated);
    let up = make_unconstrained(&sys, 1).unwrap();
    assert_eq!(tangent_condition(&sys, &up, &v(&[0.0, 1.0]), 3, &tol).unwrap(), TangentStatus::Crossing(2));
    // control bounds have no functional on a bang arc
    assert!(tangent_condition(&sys, &up, &v(&[0.0, 0.0]), 4, &tol).is_err());
}

#[test]
fn third_state_touch() {
    let sys = common::chain_box(4, &[5.0, 5.0, 1.0, 5.0]);
    let tol = Tolerances::default();
    let down = make_unconstrained(&sys, -1).unwrap();
    assert_eq!(
        tangent_condition(&sys, &down, &v(&[-0.5, 0.0, 1.0, 0.0]), 5, &tol).unwrap(),
        TangentStatus::Tangent(2)
    );
    assert_eq!(
        tangent_condition(&sys, &down, &v(&[0.0, 0.0, 1.0, 0.0]), 5, &tol).unwrap(),
        TangentStatus::Crossing(3)
    );
}

#[test]
fn end_statuses_at_rest() {
    let sys = common::chain_box(3, &[1.0, 1.0, 1.0]);
    let tol = Tolerances::default();
    let up = make_unconstrained(&sys, 1).unwrap();
    let report = end_feasibility(&sys, &up, &DVector::zeros(3), Side::Right, &tol);
    assert_eq!(report.len(), 8);
    for (id, s) in &report {
        let expect = if *id == 6 { EndStatus::Identical } else { EndStatus::Strict };
        assert_eq!(*s, expect, "id {id}");
    }
    // cruise on x2 <= 1: control bounds are strict since u = 0
    let cruise = make_constrained(&sys, &[3], &tol).unwrap();
    let report = end_feasibility(&sys, &cruise, &v(&[0.0, 1.0, 0.2]), Side::Left, &tol);
    assert!(report.iter().all(|(id, _)| *id != 3));
    assert!(report.iter().all(|(_, s)| *s == EndStatus::Strict));
}

#[test]
fn junction_signs_at_a_cruise() {
    let sys = common::chain_box(2, &[10.0, 1.0]);
    let tol = Tolerances::default();
    let cruise = make_constrained(&sys, &[3], &tol).unwrap();
    let down = make_unconstrained(&sys, -1).unwrap();
    let up = make_unconstrained(&sys, 1).unwrap();
    let x = v(&[0.0, 1.0]);
    assert!(connection_conditions(&sys, &cruise, &cruise, &x, &tol).is_err());

    let exit = connection_conditions(&sys, &cruise, &down, &x, &tol).unwrap();
    assert!(exit.valid);
    let t = exit.touches.iter().find(|t| t.id == 3).unwrap();
    assert_eq!((t.left, t.right), (SideOrder::Active, SideOrder::Order(2)));
    assert!(!connection_conditions(&sys, &cruise, &up, &x, &tol).unwrap().valid);

    let entry = connection_conditions(&sys, &down, &cruise, &x, &tol).unwrap();
    assert!(entry.valid);
    let t = entry.touches.iter().find(|t| t.id == 3).unwrap();
    assert_eq!((t.left, t.right), (SideOrder::Order(2), SideOrder::Active));
    assert!(!connection_conditions(&sys, &up, &cruise, &x, &tol).unwrap().valid);
}

#[test]
fn viia_features() {
    let tol = Tolerances::default();
    let (sys, traj) = viia_trajectory(&tol).unwrap();
    assert_eq!(traj.law.num_arcs(), 8);
    assert_eq!(traj.m(), 9);
    let with_markers: Vec<usize> = (0..8).filter(|&i| !traj.law.markers[i].is_empty()).collect();
    assert_eq!(with_markers, vec![4]);
    assert_eq!(traj.law.markers[4][0].touched, vec![(0, 2)]);
    // the second constrained arc ends where its control reaches u_max
    let end = &traj.law.end_constraints[5];
    let u_max = end.touched.iter().find(|t| t.id == sys.num_constraints()).unwrap();
    assert!(matches!(u_max.left, SideOrder::Order(_)));
    assert!((traj.final_time() - 4.176121553).abs() < 1e-8);
    let report = check_feasible(&sys, &traj, None, &tol).unwrap();
    assert!(report.feasible, "{:?}", report.violations);
}

#[test]
fn single_arc_has_no_features() {
    let sys = common::chain_box(2, &[1.0, 1.0]);
    let tol = Tolerances::default();
    let traj = extract_asl(&sys, &[(common::bang(1), 0.5)], &DVector::zeros(2), &tol).unwrap();
    assert_eq!(traj.m(), 1);
    assert!(traj.law.end_constraints.is_empty());
    assert_eq!(traj.law.num_markers(), 0);
    let xf = traj.final_state().unwrap();
    assert!((xf - v(&[0.5, 0.125])).norm() < 1e-15);
}

#[test]
fn crossing_a_boundary_is_infeasible() {
    let sys = common::chain_box(2, &[1.0, 1.0]);
    let tol = Tolerances::default();
    let err = extract_asl(&sys, &[(common::bang(1), 1.5)], &DVector::zeros(2), &tol).unwrap_err();
    assert!(matches!(err, Error::Infeasible { .. }), "{err}");
}

fn assert_idempotent(sys: &LinearSystem, traj: &TimedTrajectory) {
    let tol = Tolerances::default();
    let again = re_extract(sys, traj, &tol).unwrap();
    assert_eq!(again.law, traj.law);
    for (a, b) in again.times.iter().zip(&traj.times) {
        assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
    }
}

#[test]
fn re_extraction_is_idempotent() {
    let tol = Tolerances::default();
    let (sys, a) = viia_trajectory(&tol).unwrap();
    assert_idempotent(&sys, &a);
    let (p, b) = viib_trajectory(&tol).unwrap();
    assert_idempotent(&p.system().unwrap(), &b);
    let (p, c) = viic_seed(&tol).unwrap();
    assert_idempotent(&p.system().unwrap(), &c);
}

#[test]
fn equality_rows_count_cruises_and_terminal() {
    let tol = Tolerances::default();
    let (p, b) = viib_trajectory(&tol).unwrap();
    let h = build_equality_system(&p.system().unwrap(), &b, &p.xf_vec(), &tol).unwrap();
    assert_eq!(h.num_rows(), 9);
    assert_eq!(h.m(), 11);
    let (p, c) = viic_seed(&tol).unwrap();
    let h = build_equality_system(&p.system().unwrap(), &c, &p.xf_vec(), &tol).unwrap();
    assert_eq!(h.num_rows(), 5);
    let (sys, traj) = common::alternating_chain(2, &[1.0, 1.0], 1);
    let h = build_equality_system(&sys, &traj, &v(&[0.0, 1.0]), &tol).unwrap();
    assert_eq!(h.num_rows(), 2);
    assert_eq!(h.dof(), 0);
}

#[test]
fn moved_times_are_caught() {
    let tol = Tolerances::default();
    let (sys, traj) = viia_trajectory(&tol).unwrap();
    let xf = traj.final_state().unwrap();
    let mut times = traj.times.clone();
    times[5] += 0.02;
    let moved = traj.with_times(times).unwrap();
    assert!(matches!(
        build_equality_system(&sys, &moved, &xf, &tol),
        Err(Error::Stale { .. })
    ));
    let report = check_feasible(&sys, &moved, Some(&xf), &tol).unwrap();
    assert!(!report.feasible);
    assert!(report.violations.iter().any(|s| s.contains("keypoint 5")));
    assert!(report.max_residual > tol.eq);
}

#[test]
fn terminal_mismatch_is_reported() {
    let tol = Tolerances::default();
    let (sys, traj) = common::alternating_chain(2, &[1.0, 1.0], 1);
    let report = check_feasible(&sys, &traj, Some(&v(&[0.1, 1.0])), &tol).unwrap();
    assert!(!report.feasible);
    assert!(report.violations.iter().any(|s| s.contains("terminal x1")));
    let ok = check_feasible(&sys, &traj, Some(&v(&[0.0, 1.0])), &tol).unwrap();
    assert!(ok.feasible);
}

/// Away from keypoints every constraint not active on the owning arc is slack.
fn interior_is_strict(sys: &LinearSystem, traj: &TimedTrajectory) {
    let owners = traj.interval_arcs();
    let xs = traj.keypoint_states().unwrap();
    let dyns = traj.dynamics();
    for k in 1..=traj.m() {
        let beh = &traj.law.arcs[owners[k - 1]];
        let (a, b) = &dyns[k - 1];
        let dt = traj.times[k] - traj.times[k - 1];
        for frac in [0.25, 0.5, 0.75] {
            let x = propagate(a, b, &xs[k - 1], frac * dt).unwrap();
            for (id, c) in sys.constraints.iter().enumerate() {
                if beh.active().contains(&id) {
                    continue;
                }
                let g = c.c.dot(&x) + c.d;
                assert!(g < 0.0, "interval {k}, constraint {id}: {g}");
            }
        }
    }
}

#[test]
fn interior_margins_are_strict() {
    let tol = Tolerances::default();
    let (sys, a) = viia_trajectory(&tol).unwrap();
    interior_is_strict(&sys, &a);
    let (p, b) = viib_trajectory(&tol).unwrap();
    interior_is_strict(&p.system().unwrap(), &b);
    let (p, c) = viic_seed(&tol).unwrap();
    interior_is_strict(&p.system().unwrap(), &c);
}

#[test]
fn cruise_entered_off_its_face_is_rejected() {
    let sys = common::chain_box(2, &[1.0, 1.0]);
    let tol = Tolerances::default();
    let spec = vec![(common::bang(1), 0.5), (BehaviorKind::Constrained { active: vec![3] }, 0.5)];
    assert!(extract_asl(&sys, &spec, &DVector::zeros(2), &tol).is_err());
}
