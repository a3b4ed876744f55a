//! File formats: arc descriptions, ASL summaries and trajectory CSV.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::features::SideOrder;
use super::{AdditionalEndConstraint, AugmentedSwitchingLaw, EndTouch, KeypointKind, TangentMarker, TimedTrajectory};
use crate::arcs::{arc_control, behavior_from_kind, BehaviorKind};
use crate::linsys::{LinearSystem, StateVector};
use crate::{Error, Result, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcEntry {
    #[serde(flatten)]
    pub kind: BehaviorKind,
    pub duration: f64,
}

/// Timed arc description: the input of extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xf: Option<Vec<f64>>,
    pub arcs: Vec<ArcEntry>,
}

impl TrajectoryFile {
    pub fn from_trajectory(traj: &TimedTrajectory, xf: Option<&StateVector>) -> Self {
        TrajectoryFile {
            x0: traj.x0.iter().copied().collect(),
            xf: xf.map(|v| v.iter().copied().collect()),
            arcs: traj
                .law
                .kinds()
                .into_iter()
                .zip(traj.arc_durations())
                .map(|(kind, duration)| ArcEntry { kind, duration })
                .collect(),
        }
    }

    pub fn spec(&self) -> Vec<(BehaviorKind, f64)> {
        self.arcs.iter().map(|a| (a.kind.clone(), a.duration)).collect()
    }

    pub fn x0_vec(&self) -> StateVector {
        DVector::from_vec(self.x0.clone())
    }

    pub fn xf_vec(&self) -> Option<StateVector> {
        self.xf.clone().map(DVector::from_vec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerJson {
    pub arc: usize,
    pub time: f64,
    /// `[constraint, order]` pairs.
    pub touched: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndTouchJson {
    pub constraint: usize,
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndConstraintJson {
    pub junction: usize,
    pub time: f64,
    pub touched: Vec<EndTouchJson>,
}

/// Timed ASL: arcs, markers, end-constraints and the full keypoint schedule.
/// Readable back with [`AslJson::to_trajectory`]; arc durations are informative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AslJson {
    pub x0: Vec<f64>,
    pub arcs: Vec<ArcEntry>,
    #[serde(default)]
    pub markers: Vec<MarkerJson>,
    #[serde(default)]
    pub end_constraints: Vec<EndConstraintJson>,
    pub times: Vec<f64>,
}

fn side_text(o: SideOrder) -> String {
    match o {
        SideOrder::Active => "active".into(),
        SideOrder::Identical => "identical".into(),
        SideOrder::Clear => "clear".into(),
        SideOrder::Order(r) => r.to_string(),
    }
}

fn parse_side(s: &str) -> Result<SideOrder> {
    match s {
        "active" => Ok(SideOrder::Active),
        "identical" => Ok(SideOrder::Identical),
        "clear" => Ok(SideOrder::Clear),
        _ => s
            .parse()
            .map(SideOrder::Order)
            .map_err(|_| Error::InvalidInput(format!("unknown junction side '{s}'"))),
    }
}

impl AslJson {
    pub fn new(traj: &TimedTrajectory) -> Self {
        let law = &traj.law;
        let mut markers = Vec::new();
        let mut end_constraints = Vec::new();
        let ends = law.arc_end_keypoints();
        for (idx, kp) in law.keypoints().iter().enumerate() {
            if let KeypointKind::Marker(j) = kp.kind {
                markers.push(MarkerJson {
                    arc: kp.arc,
                    time: traj.times[idx + 1],
                    touched: law.markers[kp.arc][j].touched.clone(),
                });
            }
        }
        for (j, ec) in law.end_constraints.iter().enumerate() {
            if ec.touched.is_empty() {
                continue;
            }
            end_constraints.push(EndConstraintJson {
                junction: j,
                time: traj.times[ends[j]],
                touched: ec
                    .touched
                    .iter()
                    .map(|t| EndTouchJson {
                        constraint: t.id,
                        left: side_text(t.left),
                        right: side_text(t.right),
                    })
                    .collect(),
            });
        }
        AslJson {
            x0: traj.x0.iter().copied().collect(),
            arcs: TrajectoryFile::from_trajectory(traj, None).arcs,
            markers,
            end_constraints,
            times: traj.times.clone(),
        }
    }
}

impl AslJson {
    /// Rebuilds the law over `sys` with the stored schedule. Markers are
    /// placed in file order within their arc.
    pub fn to_trajectory(&self, sys: &LinearSystem, tol: &Tolerances) -> Result<TimedTrajectory> {
        if self.x0.len() != sys.n() {
            return Err(Error::InvalidInput("x0 has wrong dimension".into()));
        }
        let arcs = self
            .arcs
            .iter()
            .map(|a| behavior_from_kind(sys, &a.kind, tol))
            .collect::<Result<Vec<_>>>()?;
        let mut law = AugmentedSwitchingLaw::new(arcs);
        let n_arcs = law.num_arcs();
        for m in &self.markers {
            if m.arc >= n_arcs {
                return Err(Error::InvalidInput(format!("marker on missing arc {}", m.arc)));
            }
            law.markers[m.arc].push(TangentMarker {
                touched: m.touched.clone(),
            });
        }
        for e in &self.end_constraints {
            if e.junction + 1 >= n_arcs {
                return Err(Error::InvalidInput(format!("end-constraint at missing junction {}", e.junction)));
            }
            let touched = e
                .touched
                .iter()
                .map(|t| {
                    Ok(EndTouch {
                        id: t.constraint,
                        left: parse_side(&t.left)?,
                        right: parse_side(&t.right)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            law.end_constraints[e.junction] = AdditionalEndConstraint { touched };
        }
        TimedTrajectory::new(law, DVector::from_vec(self.x0.clone()), self.times.clone())
    }
}

/// Fixed 17-significant-digit formatting.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Dense samples `t, x1..xn, u, margin_1..margin_P` with raw slack
/// `-(c^T x + d)` per state constraint.
pub fn write_trajectory_csv<W: Write>(
    sys: &LinearSystem,
    traj: &TimedTrajectory,
    per_interval: usize,
    out: W,
) -> Result<()> {
    if per_interval == 0 {
        return Err(Error::InvalidInput("need at least one sample per interval".into()));
    }
    let n = sys.n();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("x{k}")));
    header.push("u".into());
    header.extend((1..=sys.num_constraints()).map(|p| format!("margin_{p}")));
    w.write_record(&header)?;
    let xs = traj.keypoint_states()?;
    let dyns = traj.dynamics();
    let owners = traj.interval_arcs();
    for k in 1..=traj.m() {
        let (a, b) = &dyns[k - 1];
        let beh = &traj.law.arcs[owners[k - 1]];
        let t0 = traj.times[k - 1];
        let dt = traj.times[k] - t0;
        let samples = super::sample_interval(a, b, &xs[k - 1], dt, per_interval)?;
        let last = if k == traj.m() { per_interval + 1 } else { per_interval };
        for (j, x) in samples.iter().take(last).enumerate() {
            let x = if j == per_interval { &xs[k] } else { x };
            let mut rec = vec![fmt17(t0 + dt * j as f64 / per_interval as f64)];
            rec.extend(x.iter().map(|v| fmt17(*v)));
            rec.push(fmt17(arc_control(sys, beh, x)));
            rec.extend(sys.constraints.iter().map(|c| fmt17(-(c.c.dot(x) + c.d))));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
