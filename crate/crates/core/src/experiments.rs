//! Problem instances used by the reproduction commands and acceptance tests.

use nalgebra::{DMatrix, DVector};

use crate::arcs::{behavior_from_kind, BehaviorKind};
use crate::asl::{assemble, re_extract, AugmentedSwitchingLaw, TimedTrajectory};
use crate::coi::{parse_coi_asl, rest_to_rest_seed, CoiProblem};
use crate::asl::extract_asl;
use crate::linsys::{Constraint, LinearSystem};
use crate::optimizer::{newton_solve, OptimizerConfig};
use crate::{Error, Result, Tolerances};

/// Plant with two Jordan blocks: `x1 >= -0.7` (third order) and `x3 + x4 <= 0.5`.
pub fn viia_system() -> LinearSystem {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[-1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    );
    let b = DVector::from_vec(vec![0.0, 0.0, 2.0, -1.0]);
    let cons = vec![
        Constraint {
            c: DVector::from_vec(vec![-1.0, 0.0, 0.0, 0.0]),
            d: -0.7,
        },
        Constraint {
            c: DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]),
            d: -0.5,
        },
    ];
    LinearSystem::new(a, b, cons, 1.0).expect("static instance")
}

/// Initial state and arc durations of a trajectory with every ASL feature:
/// `- + c - +(x1 tangent) c + -`, the second constrained arc ending where its
/// control reaches `+1`. Built backwards from the first constrained arc.
pub const VIIA_X0: [f64; 4] = [3.0467384319804642, -4.00586289869547, -0.24695938168956427, 0.5];
pub const VIIA_DURATIONS: [f64; 8] = [0.2, 0.3, 0.8, 0.3, 0.2565972579595322, 1.7195242951603595, 0.3, 0.3];

pub fn viia_trajectory(tol: &Tolerances) -> Result<(LinearSystem, TimedTrajectory)> {
    let sys = viia_system();
    let con = BehaviorKind::Constrained { active: vec![1] };
    let bang = |sign| BehaviorKind::Unconstrained { sign };
    let kinds = [bang(-1), bang(1), con.clone(), bang(-1), bang(1), con, bang(1), bang(-1)];
    let spec: Vec<(BehaviorKind, f64)> = kinds.into_iter().zip(VIIA_DURATIONS).collect();
    let traj = extract_asl(&sys, &spec, &DVector::from_row_slice(&VIIA_X0), tol)?;
    Ok((sys, traj))
}

pub const VIIB_ASL: &str = "u0 u1 o0 u2 o0 o1 u0 o0 o1 u0 o0";
pub const VIIB_TF: f64 = 9.8604;
/// `t_4` of the reference trajectory.
pub const VIIB_T4: f64 = 4.534236;

pub fn viib_problem() -> CoiProblem {
    CoiProblem::new(
        1.0,
        vec![Some(1.0), Some(1.5), Some(4.0), Some(20.0)],
        vec![0.75, -0.375, 2.0, 9.0],
        vec![0.25, 0.5, -2.0, -5.0],
    )
    .expect("static instance")
}

/// Coarse arc durations for the fourth-order example: the first three arcs are
/// forced by the boundary data, the rest is a rough guess refined by Newton.
fn viib_hand_seed() -> Vec<f64> {
    let d4 = VIIB_T4 - 3.15625;
    let (d6, d7, d9, d10) = (0.5, 0.49, 0.2, 1.7);
    vec![1.75, 0.40625, 1.0, d4, 1.0, d6, d7, d7, d9, d10, d10 - 0.75]
}

/// Trajectory with the fixed ASL, `t_4` and `t_f`, solved by Newton from the
/// hand seed with `t_4` and `t_11` pinned.
pub fn viib_trajectory(tol: &Tolerances) -> Result<(CoiProblem, TimedTrajectory)> {
    let problem = viib_problem();
    let sys = problem.system()?;
    let asl = parse_coi_asl(VIIB_ASL)?;
    let law = asl.to_law(&problem, tol)?;
    let durs = viib_hand_seed();
    let mut times = vec![0.0];
    for d in &durs {
        times.push(times.last().unwrap() + d);
    }
    let traj = TimedTrajectory::new(law, problem.x0_vec(), times)?;
    let h = assemble(&sys, &traj, &problem.xf_vec(), tol);
    let cfg = OptimizerConfig {
        tol: *tol,
        newton_radius: 1.0,
        ..OptimizerConfig::default()
    };
    let t = newton_solve(&h, &traj.times, &[4, 11], &[VIIB_T4, VIIB_TF], &cfg)?;
    let solved = re_extract(&sys, &traj.with_times(t)?, tol)?;
    if solved.law.kinds() != asl.kinds(&problem)? {
        return Err(Error::Restructure("solved trajectory changed its arcs".into()));
    }
    Ok((problem, solved))
}

pub fn viic_problem() -> CoiProblem {
    CoiProblem::new(
        1.0,
        vec![Some(0.8), Some(0.5), Some(0.5), Some(0.5), Some(1.0)],
        vec![0.0; 5],
        vec![0.0, 0.0, 0.0, 0.0, 1.0],
    )
    .expect("static instance")
}

/// Built-in heuristic seed for the fifth-order example.
pub fn viic_seed(tol: &Tolerances) -> Result<(CoiProblem, TimedTrajectory)> {
    let problem = viic_problem();
    let sys = problem.system()?;
    let spec = rest_to_rest_seed(&problem)?;
    let traj = extract_asl(&sys, &spec, &problem.x0_vec(), tol)?;
    Ok((problem, traj))
}

/// Law for a list of behavior kinds without markers or end-constraints.
pub fn bare_law(
    sys: &LinearSystem,
    kinds: &[BehaviorKind],
    tol: &Tolerances,
) -> Result<AugmentedSwitchingLaw> {
    let arcs = kinds
        .iter()
        .map(|k| behavior_from_kind(sys, k, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(AugmentedSwitchingLaw::new(arcs))
}
