use serde::Serialize;

use super::equality::assemble;
use super::extract::bisect_root;
use super::{sample_interval, TimedTrajectory};
use crate::arcs::{constraint_functional, constraint_name, ConstraintId};
use crate::linsys::{propagate, LinearSystem, StateVector};
use crate::{Result, Tolerances};

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintMargin {
    pub id: ConstraintId,
    pub name: String,
    /// Smallest normalized slack `-(w^T x + w0) / (|w| max(1, |x|))`.
    pub min_margin: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RowResidual {
    pub row: String,
    pub keypoint: usize,
    pub time: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub margins: Vec<ConstraintMargin>,
    pub max_residual: f64,
    /// Rows of `H` sorted by decreasing residual.
    pub residuals: Vec<RowResidual>,
    pub violations: Vec<String>,
}

impl FeasibilityReport {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().map(|m| m.min_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Dense audit of state/control constraints and of the ASL equalities.
/// With `xf` given the terminal rows are audited as well.
pub fn check_feasible(
    sys: &LinearSystem,
    traj: &TimedTrajectory,
    xf: Option<&StateVector>,
    tol: &Tolerances,
) -> Result<FeasibilityReport> {
    let xs = traj.keypoint_states()?;
    let dyns = traj.dynamics();
    let owners = traj.interval_arcs();
    let p = sys.num_constraints();
    let mut worst: Vec<Option<(f64, f64)>> = vec![None; p + 2];
    let mut note = |id: usize, margin: f64, t: f64| {
        let slot = &mut worst[id];
        if slot.map_or(true, |(m, _)| margin < m) {
            *slot = Some((margin, t));
        }
    };
    for k in 1..=traj.m() {
        let beh = &traj.law.arcs[owners[k - 1]];
        let (a, b) = &dyns[k - 1];
        let t0 = traj.times[k - 1];
        let dt = traj.times[k] - t0;
        let samples = sample_interval(a, b, &xs[k - 1], dt, tol.samples)?;
        let h = dt / tol.samples as f64;
        for id in 0..p + 2 {
            let Some((w, w0)) = constraint_functional(sys, beh, id) else { continue };
            let margin = |x: &StateVector| -(w.dot(x) + w0) / (w.norm() * x.norm().max(1.0));
            let der = |x: &StateVector| w.dot(&(a * x + b));
            // exact endpoints
            note(id, margin(&xs[k - 1]), t0);
            note(id, margin(&xs[k]), traj.times[k]);
            for (j, x) in samples.iter().enumerate() {
                note(id, margin(x), t0 + j as f64 * h);
            }
            for j in 0..tol.samples {
                if der(&samples[j]) > 0.0 && der(&samples[j + 1]) <= 0.0 {
                    let tau = bisect_root(
                        |tt| Ok(der(&propagate(a, b, &xs[k - 1], tt)?)),
                        j as f64 * h,
                        (j + 1) as f64 * h,
                        tol.time,
                    )?;
                    let x = propagate(a, b, &xs[k - 1], tau)?;
                    note(id, margin(&x), t0 + tau);
                }
            }
        }
    }
    let margins: Vec<ConstraintMargin> = worst
        .iter()
        .enumerate()
        .filter_map(|(id, w)| {
            w.map(|(m, t)| ConstraintMargin {
                id,
                name: constraint_name(sys, id),
                min_margin: m,
                time: t,
            })
        })
        .collect();

    let xf_eff = xf.cloned().unwrap_or_else(|| xs[traj.m()].clone());
    let h = assemble(sys, traj, &xf_eff, tol);
    let mut residuals: Vec<RowResidual> = h
        .rows
        .iter()
        .map(|r| RowResidual {
            row: r.source.to_string(),
            keypoint: r.keypoint,
            time: traj.times[r.keypoint],
            residual: (r.w.dot(&xs[r.keypoint]) + r.w0).abs(),
        })
        .collect();
    residuals.sort_by(|a, b| b.residual.total_cmp(&a.residual));
    let max_residual = residuals.first().map_or(0.0, |r| r.residual);

    let mut violations = Vec::new();
    for r in residuals.iter().filter(|r| r.residual > tol.eq) {
        violations.push(format!(
            "keypoint {} (t = {:.9}): {} has residual {:.3e}",
            r.keypoint, r.time, r.row, r.residual
        ));
    }
    for m in margins.iter().filter(|m| m.min_margin < -tol.feas) {
        violations.push(format!(
            "{} violated by {:.3e} at t = {:.9}",
            m.name, -m.min_margin, m.time
        ));
    }
    Ok(FeasibilityReport {
        feasible: violations.is_empty(),
        margins,
        max_residual,
        residuals,
        violations,
    })
}
