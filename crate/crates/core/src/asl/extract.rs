use nalgebra::DVector;

use super::features::{connection_conditions, tangent_condition, TangentStatus};
use super::{sample_interval, AdditionalEndConstraint, AugmentedSwitchingLaw, TangentMarker, TimedTrajectory};
use crate::arcs::{behavior_from_kind, constraint_functional, constraint_name, BehaviorKind, ConstraintId, SystemBehavior};
use crate::linsys::{propagate, LinearSystem, StateVector};
use crate::{Error, Result, Tolerances};

/// Interior touch found on an arc: offset from the arc start and classification.
#[derive(Debug, Clone)]
struct Touch {
    offset: f64,
    id: ConstraintId,
    order: usize,
}

/// Builds the ASL of a timed arc description starting at `t0 = 0`.
pub fn extract_asl(
    sys: &LinearSystem,
    arcs: &[(BehaviorKind, f64)],
    x0: &StateVector,
    tol: &Tolerances,
) -> Result<TimedTrajectory> {
    extract_from(sys, arcs, x0, 0.0, tol)
}

/// Re-runs extraction on the arcs and durations of an existing trajectory.
pub fn re_extract(sys: &LinearSystem, traj: &TimedTrajectory, tol: &Tolerances) -> Result<TimedTrajectory> {
    let spec: Vec<(BehaviorKind, f64)> = traj
        .law
        .kinds()
        .into_iter()
        .zip(traj.arc_durations())
        .collect();
    extract_from(sys, &spec, &traj.x0, traj.times[0], tol)
}

pub(crate) fn extract_from(
    sys: &LinearSystem,
    arcs: &[(BehaviorKind, f64)],
    x0: &StateVector,
    t0: f64,
    tol: &Tolerances,
) -> Result<TimedTrajectory> {
    if arcs.is_empty() {
        return Err(Error::InvalidInput("empty arc list".into()));
    }
    if x0.len() != sys.n() {
        return Err(Error::InvalidInput("x0 has wrong dimension".into()));
    }
    let behaviors = arcs
        .iter()
        .map(|(k, _)| behavior_from_kind(sys, k, tol))
        .collect::<Result<Vec<_>>>()?;
    for (i, (_, d)) in arcs.iter().enumerate() {
        if !(d.is_finite() && *d > 0.0) {
            return Err(Error::InvalidInput(format!("arc {i} has non-positive duration {d}")));
        }
    }
    let mut starts = Vec::with_capacity(arcs.len() + 1);
    starts.push(x0.clone());
    for (beh, (_, d)) in behaviors.iter().zip(arcs) {
        let x = propagate(&beh.a_hat, &beh.b_hat, starts.last().unwrap(), *d)?;
        starts.push(x);
    }

    let mut law = AugmentedSwitchingLaw::new(behaviors);
    let mut times = vec![t0];
    let mut t = t0;
    for (i, beh) in law.arcs.iter().enumerate() {
        let d = arcs[i].1;
        if beh.is_constrained() {
            let x = &starts[i];
            let res = beh.residual(x) / x.norm().max(1.0);
            if res > tol.touch {
                return Err(Error::Infeasible {
                    constraint: format!("equalities of constrained arc {i}"),
                    time: t,
                    excess: res,
                });
            }
        }
        let touches = scan_arc(sys, beh, &starts[i], d, t, tol)?;
        for (offset, marker) in group_touches(touches, d) {
            times.push(t + offset);
            law.markers[i].push(marker);
        }
        t += d;
        times.push(t);
    }
    for j in 0..law.arcs.len() - 1 {
        let report = connection_conditions(sys, &law.arcs[j], &law.arcs[j + 1], &starts[j + 1], tol)
            .map_err(|e| Error::InvalidJunction {
                junction: j,
                reason: e.to_string(),
            })?;
        if !report.valid {
            return Err(Error::InvalidJunction {
                junction: j,
                reason: report.reason.unwrap_or_default(),
            });
        }
        law.end_constraints[j] = AdditionalEndConstraint {
            touched: report.touches,
        };
    }
    TimedTrajectory::new(law, x0.clone(), times)
}

/// Ids whose boundary can be reached inside an arc.
pub(crate) fn scanned_ids(sys: &LinearSystem, beh: &SystemBehavior) -> Vec<ConstraintId> {
    let p = sys.num_constraints();
    let upper = if beh.is_constrained() { p + 2 } else { p };
    (0..upper).filter(|id| !beh.active().contains(id)).collect()
}

fn scan_arc(
    sys: &LinearSystem,
    beh: &SystemBehavior,
    x0: &StateVector,
    dur: f64,
    t_start: f64,
    tol: &Tolerances,
) -> Result<Vec<Touch>> {
    let s = tol.samples;
    let xs = sample_interval(&beh.a_hat, &beh.b_hat, x0, dur, s)?;
    let h = dur / s as f64;
    let end_guard = 1e-9 * dur.max(1.0);
    let mut touches = Vec::new();
    for id in scanned_ids(sys, beh) {
        let (w, w0) = constraint_functional(sys, beh, id).unwrap();
        let norm = |x: &StateVector| w.norm() * x.norm().max(1.0);
        let vals: Vec<f64> = xs.iter().map(|x| (w.dot(x) + w0) / norm(x)).collect();
        let ders: Vec<f64> = xs.iter().map(|x| w.dot(&(&beh.a_hat * x + &beh.b_hat))).collect();
        if let Some(j) = (0..=s).find(|&j| vals[j] > tol.touch) {
            return Err(Error::Infeasible {
                constraint: constraint_name(sys, id),
                time: t_start + j as f64 * h,
                excess: vals[j],
            });
        }
        // Signs below the roundoff floor count as zero; a local maximum is a
        // positive run followed, possibly after zeros, by a negative one.
        let floor = 1e-12 * w.norm() * xs.iter().map(|x| (&beh.a_hat * x + &beh.b_hat).norm()).fold(0.0, f64::max);
        let sign = |d: f64| if d > floor { 1 } else if d < -floor { -1 } else { 0 };
        let mut last_pos: Option<usize> = None;
        for j in 0..=s {
            match sign(ders[j]) {
                1 => {
                    last_pos = Some(j);
                    continue;
                }
                0 => continue,
                _ => {}
            }
            let Some(a) = last_pos.take() else { continue };
            let tau = bisect_root(
                |tt| derivative_at(beh, &w, x0, tt),
                a as f64 * h,
                j as f64 * h,
                tol.time,
            )?;
            if tau < end_guard || tau > dur - end_guard {
                continue;
            }
            let x = propagate(&beh.a_hat, &beh.b_hat, x0, tau)?;
            match tangent_condition(sys, beh, &x, id, tol)? {
                TangentStatus::NotTouching => {}
                TangentStatus::Tangent(order) => touches.push(Touch { offset: tau, id, order }),
                TangentStatus::Violated | TangentStatus::Crossing(_) => {
                    return Err(Error::Infeasible {
                        constraint: constraint_name(sys, id),
                        time: t_start + tau,
                        excess: (w.dot(&x) + w0) / norm(&x),
                    })
                }
                TangentStatus::Identical => {
                    return Err(Error::OnBoundary {
                        constraint: constraint_name(sys, id),
                        time: t_start + tau,
                    })
                }
            }
        }
    }
    Ok(touches)
}

fn derivative_at(beh: &SystemBehavior, w: &DVector<f64>, x0: &StateVector, tau: f64) -> Result<f64> {
    let x = propagate(&beh.a_hat, &beh.b_hat, x0, tau)?;
    Ok(w.dot(&(&beh.a_hat * x + &beh.b_hat)))
}

/// Bisection for a sign change of `f` on `[a, b]` (`f(a) > 0 >= f(b)` expected).
pub(crate) fn bisect_root<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let fa = f(a)?;
    let positive_left = fa > 0.0;
    while b - a > tol * a.abs().max(1.0) {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m)? > 0.0) == positive_left {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn group_touches(mut touches: Vec<Touch>, dur: f64) -> Vec<(f64, TangentMarker)> {
    touches.sort_by(|a, b| a.offset.total_cmp(&b.offset).then(a.id.cmp(&b.id)));
    let gap = 1e-8 * dur.max(1.0);
    let mut out: Vec<(f64, TangentMarker)> = Vec::new();
    for t in touches {
        match out.last_mut() {
            Some((off, m)) if t.offset - *off <= gap => {
                if !m.touched.iter().any(|(id, _)| *id == t.id) {
                    m.touched.push((t.id, t.order));
                }
            }
            _ => out.push((
                t.offset,
                TangentMarker {
                    touched: vec![(t.id, t.order)],
                },
            )),
        }
    }
    for (_, m) in &mut out {
        m.touched.sort();
    }
    out
}
