//! Problem and trajectory files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use aslopt_core::asl::io::{AslJson, TrajectoryFile};
use aslopt_core::asl::{extract_asl, TimedTrajectory};
use aslopt_core::coi::{parse_coi_asl, CoiProblem};
use aslopt_core::linsys::{LinearSystem, StateVector};
use aslopt_core::Tolerances;
use nalgebra::DVector;
use serde::Deserialize;
use serde_json::Value;

/// Either a chain of integrators or a general plant with optional boundary states.
#[derive(Debug, Clone)]
pub enum Problem {
    Chain(CoiProblem),
    General {
        sys: LinearSystem,
        x0: Option<Vec<f64>>,
        xf: Option<Vec<f64>>,
    },
}

impl Problem {
    pub fn system(&self) -> aslopt_core::Result<LinearSystem> {
        match self {
            Problem::Chain(p) => p.system(),
            Problem::General { sys, .. } => Ok(sys.clone()),
        }
    }

    pub fn x0(&self) -> Option<StateVector> {
        match self {
            Problem::Chain(p) => Some(p.x0_vec()),
            Problem::General { x0, .. } => x0.clone().map(DVector::from_vec),
        }
    }

    pub fn xf(&self) -> Option<StateVector> {
        match self {
            Problem::Chain(p) => Some(p.xf_vec()),
            Problem::General { xf, .. } => xf.clone().map(DVector::from_vec),
        }
    }
}

#[derive(Deserialize)]
struct Boundary {
    #[serde(default)]
    x0: Option<Vec<f64>>,
    #[serde(default)]
    xf: Option<Vec<f64>>,
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A plant file carries `A`; anything else is read as a chain problem.
pub fn load_problem(path: &Path) -> anyhow::Result<Problem> {
    let v = read_json(path)?;
    if v.get("A").is_some() {
        let sys: LinearSystem = serde_json::from_value(v.clone())?;
        let b: Boundary = serde_json::from_value(v)?;
        Ok(Problem::General { sys, x0: b.x0, xf: b.xf })
    } else {
        let p: CoiProblem = serde_json::from_value(v)?;
        p.validate()?;
        Ok(Problem::Chain(p))
    }
}

#[derive(Deserialize)]
struct ChainAslFile {
    asl: String,
    times: Vec<f64>,
}

/// Loaded trajectory and the terminal state to audit against, if any.
pub struct Loaded {
    pub sys: LinearSystem,
    pub traj: TimedTrajectory,
    pub xf: Option<StateVector>,
}

/// Reads one of three trajectory forms:
/// a timed ASL (`times` plus arcs, markers, end-constraints), chain shorthand
/// (`asl` plus `times`), or timed arcs (`arcs` with durations) whose ASL is extracted.
pub fn load_trajectory(problem: &Problem, path: &Path, tol: &Tolerances) -> anyhow::Result<Loaded> {
    let sys = problem.system()?;
    let v = read_json(path)?;
    let (traj, file_xf) = if v.get("asl").is_some() {
        let Problem::Chain(p) = problem else {
            bail!("ASL shorthand needs a chain-of-integrators problem");
        };
        let f: ChainAslFile = serde_json::from_value(v)?;
        let law = parse_coi_asl(&f.asl)?.to_law(p, tol)?;
        (TimedTrajectory::new(law, p.x0_vec(), f.times)?, None)
    } else if v.get("times").is_some() {
        let f: AslJson = serde_json::from_value(v)?;
        (f.to_trajectory(&sys, tol)?, None)
    } else {
        let f: TrajectoryFile = serde_json::from_value(v)?;
        if f.arcs.is_empty() {
            return Err(aslopt_core::Error::InvalidInput("empty ASL".into()).into());
        }
        let traj = extract_asl(&sys, &f.spec(), &f.x0_vec(), tol)?;
        (traj, f.xf_vec())
    };
    let xf = file_xf.or_else(|| problem.xf());
    if let Some(x) = &xf {
        if x.len() != sys.n() {
            bail!("xf has length {}, expected {}", x.len(), sys.n());
        }
    }
    Ok(Loaded { sys, traj, xf })
}
