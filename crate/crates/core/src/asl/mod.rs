//! Augmented switching laws: arcs, tangent markers and additional end-constraints,
//! plus timed trajectories built on them.

mod audit;
mod equality;
mod extract;
mod features;
pub mod io;

pub use io::fmt17;

pub use audit::{check_feasible, ConstraintMargin, FeasibilityReport, RowResidual};
pub(crate) use equality::assemble;
pub use equality::{build_equality_system, EqRow, EqualitySystem, RowSource};
pub(crate) use extract::extract_from;
pub use extract::{extract_asl, re_extract};
pub use features::{
    connection_conditions, end_feasibility, tangent_condition, EndStatus, JunctionReport, Side,
    SideOrder, TangentStatus,
};

use nalgebra::{DMatrix, DVector};

use crate::arcs::{BehaviorKind, ConstraintId, SystemBehavior};
use crate::linsys::{flow, propagate, StateVector};
use crate::{Error, Result};

/// Interior touch of one or more constraints at even order.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMarker {
    /// `(constraint, even order)` pairs.
    pub touched: Vec<(ConstraintId, usize)>,
}

/// A constraint reaching its boundary exactly at a junction.
#[derive(Debug, Clone, PartialEq)]
pub struct EndTouch {
    pub id: ConstraintId,
    pub left: SideOrder,
    pub right: SideOrder,
}

/// Boundary contacts at one junction that are active on neither adjacent arc.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdditionalEndConstraint {
    pub touched: Vec<EndTouch>,
}

impl AdditionalEndConstraint {
    pub fn is_empty(&self) -> bool {
        self.touched.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedSwitchingLaw {
    pub arcs: Vec<SystemBehavior>,
    /// Markers per arc, in time order.
    pub markers: Vec<Vec<TangentMarker>>,
    /// One entry per junction (`arcs.len() - 1`).
    pub end_constraints: Vec<AdditionalEndConstraint>,
}

impl PartialEq for AugmentedSwitchingLaw {
    fn eq(&self, other: &Self) -> bool {
        self.arcs == other.arcs
            && self.markers == other.markers
            && self.end_constraints == other.end_constraints
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeypointKind {
    Marker(usize),
    ArcEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Keypoint {
    pub arc: usize,
    pub kind: KeypointKind,
}

impl AugmentedSwitchingLaw {
    pub fn new(arcs: Vec<SystemBehavior>) -> Self {
        let n = arcs.len();
        AugmentedSwitchingLaw {
            arcs,
            markers: vec![Vec::new(); n],
            end_constraints: vec![AdditionalEndConstraint::default(); n.saturating_sub(1)],
        }
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_markers(&self) -> usize {
        self.markers.iter().map(Vec::len).sum()
    }

    pub fn num_keypoints(&self) -> usize {
        self.num_arcs() + self.num_markers()
    }

    /// Keypoints `1..=M` in time order.
    pub fn keypoints(&self) -> Vec<Keypoint> {
        let mut out = Vec::with_capacity(self.num_keypoints());
        for (i, ms) in self.markers.iter().enumerate() {
            for j in 0..ms.len() {
                out.push(Keypoint {
                    arc: i,
                    kind: KeypointKind::Marker(j),
                });
            }
            out.push(Keypoint {
                arc: i,
                kind: KeypointKind::ArcEnd,
            });
        }
        out
    }

    /// Keypoint index (1-based) of the end of each arc.
    pub fn arc_end_keypoints(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_arcs());
        let mut k = 0;
        for ms in &self.markers {
            k += ms.len() + 1;
            out.push(k);
        }
        out
    }

    pub fn kinds(&self) -> Vec<BehaviorKind> {
        self.arcs.iter().map(|a| a.kind.clone()).collect()
    }
}

/// An ASL with initial state and keypoint schedule `t_0 < t_1 < ... < t_M`.
#[derive(Debug, Clone)]
pub struct TimedTrajectory {
    pub law: AugmentedSwitchingLaw,
    pub x0: StateVector,
    /// `times[0] = t_0`, `times[k]` is keypoint `k`.
    pub times: Vec<f64>,
}

impl TimedTrajectory {
    pub fn new(law: AugmentedSwitchingLaw, x0: StateVector, times: Vec<f64>) -> Result<Self> {
        if times.len() != law.num_keypoints() + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} keypoint times, got {}",
                law.num_keypoints() + 1,
                times.len()
            )));
        }
        check_schedule(&times)?;
        Ok(TimedTrajectory { law, x0, times })
    }

    pub fn m(&self) -> usize {
        self.times.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.final_time() - self.times[0]
    }

    /// Per-interval dynamics `(A_k, b_k)`, `k = 1..=M` (index `k - 1`).
    pub fn dynamics(&self) -> Vec<(DMatrix<f64>, DVector<f64>)> {
        self.law
            .keypoints()
            .iter()
            .map(|kp| {
                let a = &self.law.arcs[kp.arc];
                (a.a_hat.clone(), a.b_hat.clone())
            })
            .collect()
    }

    /// Arc owning each interval.
    pub fn interval_arcs(&self) -> Vec<usize> {
        self.law.keypoints().iter().map(|k| k.arc).collect()
    }

    pub fn keypoint_states(&self) -> Result<Vec<StateVector>> {
        keypoint_states(&self.dynamics(), &self.x0, &self.times)
    }

    pub fn arc_durations(&self) -> Vec<f64> {
        let ends = self.law.arc_end_keypoints();
        let mut prev = self.times[0];
        ends.iter()
            .map(|&k| {
                let d = self.times[k] - prev;
                prev = self.times[k];
                d
            })
            .collect()
    }

    pub fn final_state(&self) -> Result<StateVector> {
        Ok(self.keypoint_states()?.pop().unwrap())
    }

    /// State at an arbitrary time in `[t_0, t_M]`.
    pub fn state_at(&self, t: f64) -> Result<(usize, StateVector)> {
        let xs = self.keypoint_states()?;
        let dyns = self.dynamics();
        let m = self.m();
        let mut k = 1;
        while k < m && t > self.times[k] {
            k += 1;
        }
        let (a, b) = &dyns[k - 1];
        let dt = (t - self.times[k - 1]).max(0.0);
        let x = propagate(a, b, &xs[k - 1], dt)?;
        Ok((self.interval_arcs()[k - 1], x))
    }

    pub fn with_times(&self, times: Vec<f64>) -> Result<Self> {
        TimedTrajectory::new(self.law.clone(), self.x0.clone(), times)
    }
}

pub(crate) fn check_schedule(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite keypoint time".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("keypoint times must be strictly increasing".into()));
    }
    Ok(())
}

/// States `x_0, x_1, ..., x_M` at the keypoints.
pub fn keypoint_states(
    dynamics: &[(DMatrix<f64>, DVector<f64>)],
    x0: &StateVector,
    times: &[f64],
) -> Result<Vec<StateVector>> {
    let mut xs = Vec::with_capacity(times.len());
    xs.push(x0.clone());
    for (k, (a, b)) in dynamics.iter().enumerate() {
        let dt = times[k + 1] - times[k];
        if dt < 0.0 {
            return Err(Error::InvalidInput("keypoint times must be increasing".into()));
        }
        let x = propagate(a, b, &xs[k], dt)?;
        xs.push(x);
    }
    Ok(xs)
}

/// `n_samples + 1` equally spaced states over one interval.
pub(crate) fn sample_interval(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &StateVector,
    dt: f64,
    n_samples: usize,
) -> Result<Vec<StateVector>> {
    let h = dt / n_samples as f64;
    let (phi, gamma) = flow(a, b, h)?;
    let mut out = Vec::with_capacity(n_samples + 1);
    let mut x = x0.clone();
    out.push(x.clone());
    for _ in 0..n_samples {
        x = &phi * &x + &gamma;
        out.push(x.clone());
    }
    Ok(out)
}
