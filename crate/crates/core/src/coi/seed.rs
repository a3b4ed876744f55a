//! Feasible rest-to-rest seeds built by recursive symmetric profiles.

use super::CoiProblem;
use crate::arcs::BehaviorKind;
use crate::{Error, Result};

/// One planned arc: token order (`0` for bang), sign, duration.
type Piece = (usize, i8, f64);

/// Moves `x_k` by `dist` with `x_1..x_(k-1)` at rest at both ends.
fn plan(problem: &CoiProblem, k: usize, dist: f64) -> Result<Vec<Piece>> {
    let s: i8 = if dist >= 0.0 { 1 } else { -1 };
    let d = dist.abs();
    if k == 1 {
        return Ok(vec![(0, s, d / problem.u_max)]);
    }
    let vmax = problem.bound(k - 1);
    let travel = |v: f64| -> Result<f64> { Ok(v * duration(&plan(problem, k - 1, v)?)) };
    let (v, cruise) = if !vmax.is_finite() || travel(vmax)? >= d {
        let mut lo = 0.0;
        let mut hi = if vmax.is_finite() { vmax } else { d.max(1.0) };
        while !vmax.is_finite() && travel(hi)? < d {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if travel(mid)? < d {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        (hi, 0.0)
    } else {
        (vmax, (d - travel(vmax)?) / vmax)
    };
    let mut out = plan(problem, k - 1, v)?;
    if cruise > 1e-12 {
        out.push((k - 1, 1, cruise));
    }
    out.extend(plan(problem, k - 1, -v)?);
    if s < 0 {
        for p in &mut out {
            p.1 = -p.1;
        }
    }
    Ok(out)
}

fn duration(pieces: &[Piece]) -> f64 {
    pieces.iter().map(|p| p.2).sum()
}

/// Arc list moving `x_n` from `x0_n` to `xf_n` with every lower state at rest at
/// both ends. Lower states accelerate to the largest admissible level and cruise
/// on their bound when the distance requires it.
pub fn rest_to_rest_seed(problem: &CoiProblem) -> Result<Vec<(BehaviorKind, f64)>> {
    problem.validate()?;
    let n = problem.n;
    if (0..n - 1).any(|k| problem.x0[k] != 0.0 || problem.xf[k] != 0.0) {
        return Err(Error::InvalidInput(
            "the seed planner needs rest-to-rest boundary states (only x_n nonzero)".into(),
        ));
    }
    let dist = problem.xf[n - 1] - problem.x0[n - 1];
    if dist == 0.0 {
        return Err(Error::InvalidInput("boundary states coincide".into()));
    }
    let mut merged: Vec<Piece> = Vec::new();
    for p in plan(problem, n, dist)? {
        match merged.last_mut() {
            Some(last) if last.0 == p.0 && last.1 == p.1 => last.2 += p.2,
            _ => merged.push(p),
        }
    }
    merged
        .into_iter()
        .map(|(order, sign, d)| {
            let kind = if order == 0 {
                BehaviorKind::Unconstrained { sign }
            } else {
                let id = problem
                    .constraint_id(order, sign > 0)
                    .ok_or_else(|| Error::InvalidInput(format!("x{order} has no bound")))?;
                BehaviorKind::Constrained { active: vec![id] }
            };
            Ok((kind, d))
        })
        .collect()
}
