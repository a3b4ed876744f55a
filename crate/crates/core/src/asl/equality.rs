use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::features::{Side, SideOrder};
use super::{keypoint_states, KeypointKind, TimedTrajectory};
use crate::arcs::{constraint_functional, constraint_name, RowOrigin, SystemBehavior};
use crate::linsys::{LinearSystem, StateVector};
use crate::{linalg, optimality, Error, Result, Tolerances};

#[derive(Debug, Clone, PartialEq)]
pub enum RowSource {
    Terminal { coord: usize },
    Arc { arc: usize, origin: RowOrigin },
    Marker { arc: usize, marker: usize, constraint: String, derivative: usize },
    Junction { junction: usize, constraint: String, side: Option<Side>, derivative: usize },
}

impl fmt::Display for RowSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowSource::Terminal { coord } => write!(f, "terminal x{} = xf{}", coord + 1, coord + 1),
            RowSource::Arc { arc, origin } => match origin {
                RowOrigin::Order { p, r } => {
                    write!(f, "constrained arc {arc}: state constraint {p}, derivative {r}")
                }
                RowOrigin::Consistency { p, q, r } => {
                    write!(f, "constrained arc {arc}: consistency of {q} under gain {p}, power {r}")
                }
            },
            RowSource::Marker { arc, marker, constraint, derivative } => write!(
                f,
                "tangent marker {marker} on arc {arc}: {constraint}, derivative {derivative}"
            ),
            RowSource::Junction { junction, constraint, side, derivative } => {
                let s = match side {
                    None => "",
                    Some(Side::Left) => " (left)",
                    Some(Side::Right) => " (right)",
                };
                write!(f, "end-constraint at junction {junction}: {constraint}, derivative {derivative}{s}")
            }
        }
    }
}

/// One equality `w^T x_k + w0 = 0` at keypoint `k`.
#[derive(Debug, Clone)]
pub struct EqRow {
    pub keypoint: usize,
    pub w: DVector<f64>,
    pub w0: f64,
    pub source: RowSource,
}

#[derive(Debug, Clone)]
pub struct EqualitySystem {
    pub rows: Vec<EqRow>,
    pub dynamics: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub x0: StateVector,
    pub times: Vec<f64>,
}

impl EqualitySystem {
    /// Number of keypoints `M`.
    pub fn m(&self) -> usize {
        self.dynamics.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Degrees of freedom `M - M'`.
    pub fn dof(&self) -> i64 {
        self.m() as i64 - self.num_rows() as i64
    }

    pub fn evaluate(&self, times: &[f64]) -> Result<DVector<f64>> {
        let xs = keypoint_states(&self.dynamics, &self.x0, times)?;
        Ok(self.evaluate_states(&xs))
    }

    pub fn evaluate_states(&self, xs: &[StateVector]) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| r.w.dot(&xs[r.keypoint]) + r.w0),
        )
    }

    /// `dH/dt` over all `M` keypoint times.
    pub fn jacobian(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        optimality::equality_jacobian(self, times)
    }
}

/// Row `L_r` of the derivative ladder of `(w, w0)` under `x' = Ax + b`.
fn derivative_row(w: &DVector<f64>, w0: f64, beh: &SystemBehavior, r: usize) -> (DVector<f64>, f64) {
    if r == 0 {
        return (w.clone(), w0);
    }
    let at = beh.a_hat.transpose();
    let mut v = w.clone();
    for _ in 0..r - 1 {
        v = &at * v;
    }
    let off = v.dot(&beh.b_hat);
    (at * v, off)
}

struct Candidate {
    w: DVector<f64>,
    w0: f64,
    source: RowSource,
}

fn arc_rows(beh: &SystemBehavior, arc: usize) -> Vec<Candidate> {
    (0..beh.f.nrows())
        .map(|i| Candidate {
            w: beh.f.row(i).transpose(),
            w0: beh.g[i],
            source: RowSource::Arc {
                arc,
                origin: beh.origins[i].clone(),
            },
        })
        .collect()
}

/// Stacks keypoint equalities without checking them against the trajectory.
pub(crate) fn assemble(
    sys: &LinearSystem,
    traj: &TimedTrajectory,
    xf: &StateVector,
    tol: &Tolerances,
) -> EqualitySystem {
    let law = &traj.law;
    let kps = law.keypoints();
    let m = kps.len();
    let n = sys.n();
    let mut rows = Vec::new();
    for (idx, kp) in kps.iter().enumerate() {
        let k = idx + 1;
        let host = &law.arcs[kp.arc];
        let mut context: Vec<DVector<f64>> = Vec::new();
        let mut cands: Vec<Candidate> = Vec::new();
        if k == m {
            for c in 0..n {
                let mut e = DVector::zeros(n);
                e[c] = 1.0;
                cands.push(Candidate {
                    w: e,
                    w0: -xf[c],
                    source: RowSource::Terminal { coord: c },
                });
            }
        }
        match kp.kind {
            KeypointKind::Marker(j) => {
                context.extend((0..host.f.nrows()).map(|i| host.f.row(i).transpose()));
                for &(id, order) in &law.markers[kp.arc][j].touched {
                    let Some((w, w0)) = constraint_functional(sys, host, id) else { continue };
                    for r in 0..order {
                        let (rw, r0) = derivative_row(&w, w0, host, r);
                        cands.push(Candidate {
                            w: rw,
                            w0: r0,
                            source: RowSource::Marker {
                                arc: kp.arc,
                                marker: j,
                                constraint: constraint_name(sys, id),
                                derivative: r,
                            },
                        });
                    }
                }
            }
            KeypointKind::ArcEnd => {
                cands.extend(arc_rows(host, kp.arc));
                if kp.arc + 1 < law.num_arcs() {
                    let next = &law.arcs[kp.arc + 1];
                    context.extend((0..next.f.nrows()).map(|i| next.f.row(i).transpose()));
                    cands.extend(junction_rows(sys, traj, kp.arc));
                }
            }
        }
        let ws: Vec<DVector<f64>> = cands.iter().map(|c| c.w.clone()).collect();
        for i in linalg::independent_rows(&context, &ws, tol.row) {
            let c = &cands[i];
            rows.push(EqRow {
                keypoint: k,
                w: c.w.clone(),
                w0: c.w0,
                source: c.source.clone(),
            });
        }
    }
    EqualitySystem {
        rows,
        dynamics: traj.dynamics(),
        x0: traj.x0.clone(),
        times: traj.times.clone(),
    }
}

fn junction_rows(sys: &LinearSystem, traj: &TimedTrajectory, j: usize) -> Vec<Candidate> {
    let left = &traj.law.arcs[j];
    let right = &traj.law.arcs[j + 1];
    let state_count = sys.num_constraints();
    let mut out = Vec::new();
    for t in &traj.law.end_constraints[j].touched {
        let name = constraint_name(sys, t.id);
        let row = |w: DVector<f64>, w0: f64, side: Option<Side>, derivative: usize| Candidate {
            w,
            w0,
            source: RowSource::Junction {
                junction: j,
                constraint: name.clone(),
                side,
                derivative,
            },
        };
        if t.id < state_count {
            let c = &sys.constraints[t.id];
            out.push(row(c.c.clone(), c.d, None, 0));
        }
        for (side, order, beh) in [(Side::Left, t.left, left), (Side::Right, t.right, right)] {
            let SideOrder::Order(r_hat) = order else { continue };
            let Some((w, w0)) = constraint_functional(sys, beh, t.id) else { continue };
            let first = if t.id < state_count { 1 } else { 0 };
            for r in first..r_hat {
                let (rw, r0) = derivative_row(&w, w0, beh, r);
                out.push(row(rw, r0, Some(side), r));
            }
        }
    }
    out
}

/// Equality system `H(t) = 0` induced by the ASL, with terminal rows `x_M = xf`.
pub fn build_equality_system(
    sys: &LinearSystem,
    traj: &TimedTrajectory,
    xf: &StateVector,
    tol: &Tolerances,
) -> Result<EqualitySystem> {
    if xf.len() != sys.n() {
        return Err(Error::InvalidInput("xf has wrong dimension".into()));
    }
    let h = assemble(sys, traj, xf, tol);
    let xs = keypoint_states(&h.dynamics, &h.x0, &h.times)?;
    for r in &h.rows {
        let x = &xs[r.keypoint];
        let res = (r.w.dot(x) + r.w0).abs() / (r.w.norm() * x.norm().max(1.0));
        if res > tol.touch {
            return Err(Error::Stale {
                row: r.source.to_string(),
                residual: res,
            });
        }
    }
    Ok(h)
}
