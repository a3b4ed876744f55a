//! Boundary contact classification: tangencies, arc-end feasibility and
//! junction connection conditions.

use crate::arcs::{constraint_functional, constraint_name, ladder, ladder_scale, ConstraintId, SystemBehavior};
use crate::asl::EndTouch;
use crate::linsys::{LinearSystem, StateVector};
use crate::{Error, Result, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The arc ends at the point.
    Left,
    /// The arc starts at the point.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentStatus {
    Tangent(usize),
    Crossing(usize),
    NotTouching,
    Violated,
    /// Every ladder entry through order n vanishes.
    Identical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndStatus {
    Strict,
    Touch(usize),
    /// Stays on the boundary along the arc (constant control at its bound,
    /// or all derivatives vanishing).
    Identical,
    Violated,
}

/// How one side of a junction meets a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideOrder {
    /// Constraint belongs to the arc's active set.
    Active,
    Identical,
    Order(usize),
    /// Strictly inside on this side (control bounds only).
    Clear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionReport {
    pub valid: bool,
    pub reason: Option<String>,
    /// Every constraint on its boundary at the junction.
    pub touches: Vec<EndTouch>,
}

fn normalized_value(w: &nalgebra::DVector<f64>, w0: f64, x: &StateVector) -> f64 {
    (w.dot(x) + w0) / (w.norm() * x.norm().max(1.0))
}

/// Index (1-based) and value of the first non-vanishing ladder entry.
fn first_nonzero(
    w: &nalgebra::DVector<f64>,
    beh: &SystemBehavior,
    x: &StateVector,
    tol: &Tolerances,
) -> Option<(usize, f64)> {
    let n = x.len();
    let l = ladder(w, &beh.a_hat, &beh.b_hat, x, n);
    let s = ladder_scale(w, &beh.a_hat, &beh.b_hat, x, n);
    l.iter()
        .zip(&s)
        .enumerate()
        .find(|(_, (v, sc))| v.abs() > tol.touch * **sc)
        .map(|(r, (v, _))| (r + 1, *v))
}

pub fn tangent_condition(
    sys: &LinearSystem,
    beh: &SystemBehavior,
    x: &StateVector,
    id: ConstraintId,
    tol: &Tolerances,
) -> Result<TangentStatus> {
    let (w, w0) = constraint_functional(sys, beh, id).ok_or_else(|| {
        Error::InvalidInput(format!(
            "{} has no state functional on this arc",
            constraint_name(sys, id)
        ))
    })?;
    let v = normalized_value(&w, w0, x);
    if v < -tol.touch {
        return Ok(TangentStatus::NotTouching);
    }
    if v > tol.touch {
        return Ok(TangentStatus::Violated);
    }
    Ok(match first_nonzero(&w, beh, x, tol) {
        None => TangentStatus::Identical,
        Some((r, l)) if r % 2 == 0 && l < 0.0 => TangentStatus::Tangent(r),
        Some((r, _)) => TangentStatus::Crossing(r),
    })
}

/// Status of one constraint at an arc end.
pub fn end_status(
    sys: &LinearSystem,
    beh: &SystemBehavior,
    x: &StateVector,
    id: ConstraintId,
    side: Side,
    tol: &Tolerances,
) -> EndStatus {
    let p = sys.num_constraints();
    let Some((w, w0)) = constraint_functional(sys, beh, id) else {
        // control bound on a bang arc
        let sign = beh.sign().unwrap_or(0);
        return if (id == p && sign > 0) || (id == p + 1 && sign < 0) {
            EndStatus::Identical
        } else {
            EndStatus::Strict
        };
    };
    let v = normalized_value(&w, w0, x);
    if v < -tol.touch {
        return EndStatus::Strict;
    }
    if v > tol.touch {
        return EndStatus::Violated;
    }
    match first_nonzero(&w, beh, x, tol) {
        None => EndStatus::Identical,
        Some((r, l)) => {
            let s = match side {
                Side::Right => l,
                Side::Left => {
                    if r % 2 == 0 {
                        l
                    } else {
                        -l
                    }
                }
            };
            if s < 0.0 {
                EndStatus::Touch(r)
            } else {
                EndStatus::Violated
            }
        }
    }
}

/// Status of every constraint that is not active on the arc, at one of its ends.
pub fn end_feasibility(
    sys: &LinearSystem,
    beh: &SystemBehavior,
    x: &StateVector,
    side: Side,
    tol: &Tolerances,
) -> Vec<(ConstraintId, EndStatus)> {
    (0..sys.num_constraints() + 2)
        .filter(|id| !beh.active().contains(id))
        .map(|id| (id, end_status(sys, beh, x, id, side, tol)))
        .collect()
}

pub fn connection_conditions(
    sys: &LinearSystem,
    s1: &SystemBehavior,
    s2: &SystemBehavior,
    x: &StateVector,
    tol: &Tolerances,
) -> Result<JunctionReport> {
    if s1 == s2 {
        return Err(Error::InvalidInput("adjacent arcs have identical behavior".into()));
    }
    let mut touches = Vec::new();
    let invalid = |reason: String, touches: Vec<EndTouch>| JunctionReport {
        valid: false,
        reason: Some(reason),
        touches,
    };
    if let Some(p) = s1.active().iter().find(|p| s2.active().contains(p)) {
        return Ok(invalid(
            format!("{} active on both sides", constraint_name(sys, *p)),
            touches,
        ));
    }
    let p_count = sys.num_constraints();
    for id in 0..p_count + 2 {
        let status = |beh: &SystemBehavior, side| {
            if beh.active().contains(&id) {
                None
            } else {
                Some(end_status(sys, beh, x, id, side, tol))
            }
        };
        let left = status(s1, Side::Left);
        let right = status(s2, Side::Right);
        if left == Some(EndStatus::Violated) || right == Some(EndStatus::Violated) {
            return Ok(invalid(
                format!("{} violated next to the junction", constraint_name(sys, id)),
                touches,
            ));
        }
        let to_order = |s: Option<EndStatus>| match s {
            None => SideOrder::Active,
            Some(EndStatus::Touch(r)) => SideOrder::Order(r),
            Some(EndStatus::Identical) => SideOrder::Identical,
            _ => SideOrder::Clear,
        };
        let (l, r) = (to_order(left), to_order(right));
        let is_contact = |o: SideOrder| matches!(o, SideOrder::Active | SideOrder::Order(_));
        let state = id < p_count;
        if !(is_contact(l) || is_contact(r) || (state && (l == SideOrder::Identical || r == SideOrder::Identical))) {
            continue;
        }
        if state && (l == SideOrder::Identical || r == SideOrder::Identical) {
            return Ok(invalid(
                format!("{} stays on its boundary on an arc that does not declare it", constraint_name(sys, id)),
                touches,
            ));
        }
        if state && (l == SideOrder::Clear || r == SideOrder::Clear) {
            return Ok(invalid(
                format!("{} leaves its boundary discontinuously", constraint_name(sys, id)),
                touches,
            ));
        }
        touches.push(EndTouch { id, left: l, right: r });
    }
    Ok(JunctionReport {
        valid: true,
        reason: None,
        touches,
    })
}
