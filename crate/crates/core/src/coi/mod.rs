//! Chain-of-integrator problems with box constraints: shorthand notation, DOF
//! accounting, switch-count screens, chattering recursions and a seed planner.

pub mod chatter;
pub mod notation;
pub mod seed;

pub use chatter::{
    chattering_det, chattering_series_analysis, chattering_step, f_m, n4_gap_step, n4_r_recursion,
    write_recursion_csv, ChatterReport, ChatterStep,
};
pub use notation::{parse_coi_asl, CoiAsl, CoiEnd, CoiTok, DofReport, Screen};
pub use seed::rest_to_rest_seed;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::arcs::ConstraintId;
use crate::linsys::{chain_matrices, Constraint, LinearSystem, StateVector};
use crate::{Error, Result};

/// `x1' = u`, `xk' = x(k-1)`, `|u| <= u_max`, `|x_k| <= x_m[k-1]`.
/// A `null` bound is infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoiProblem {
    pub n: usize,
    pub u_max: f64,
    pub x_m: Vec<Option<f64>>,
    pub x0: Vec<f64>,
    pub xf: Vec<f64>,
}

impl CoiProblem {
    pub fn new(u_max: f64, x_m: Vec<Option<f64>>, x0: Vec<f64>, xf: Vec<f64>) -> Result<Self> {
        let p = CoiProblem {
            n: x_m.len(),
            u_max,
            x_m,
            x0,
            xf,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 || self.x_m.len() != n || self.x0.len() != n || self.xf.len() != n {
            return Err(Error::InvalidInput("x_m, x0 and xf must all have length n".into()));
        }
        if !(self.u_max.is_finite() && self.u_max > 0.0) {
            return Err(Error::InvalidInput("u_max must be positive".into()));
        }
        for k in 0..n {
            if let Some(m) = self.x_m[k] {
                if !(m > 0.0) || m.is_nan() {
                    return Err(Error::InvalidInput(format!("bound on x{} must be positive", k + 1)));
                }
            }
            let m = self.bound(k + 1);
            if self.x0[k].abs() > m || self.xf[k].abs() > m {
                return Err(Error::InvalidInput(format!("boundary state violates |x{}| <= x_m", k + 1)));
            }
        }
        Ok(())
    }

    /// Bound on `x_k` (1-based), infinite when absent.
    pub fn bound(&self, k: usize) -> f64 {
        self.x_m[k - 1].unwrap_or(f64::INFINITY)
    }

    pub fn has_state_bounds(&self) -> bool {
        self.x_m.iter().any(|m| m.is_some_and(f64::is_finite))
    }

    /// Constraint id of `x_k <= x_mk` (`upper`) or `-x_k <= x_mk`.
    /// Only finite bounds produce constraints; they are numbered in order of `k`,
    /// lower before upper.
    pub fn constraint_id(&self, k: usize, upper: bool) -> Option<ConstraintId> {
        if k == 0 || k > self.n || !self.bound(k).is_finite() {
            return None;
        }
        let before = (1..k).filter(|&j| self.bound(j).is_finite()).count();
        Some(2 * before + usize::from(upper))
    }

    /// Inverse of [`CoiProblem::constraint_id`]: `(k, upper)`.
    pub fn constraint_of(&self, id: ConstraintId) -> Option<(usize, bool)> {
        (1..=self.n)
            .flat_map(|k| [(k, false), (k, true)])
            .find(|&(k, up)| self.constraint_id(k, up) == Some(id))
    }

    pub fn system(&self) -> Result<LinearSystem> {
        self.validate()?;
        let (a, b) = chain_matrices(self.n);
        let mut cons = Vec::new();
        for k in 1..=self.n {
            let m = self.bound(k);
            if !m.is_finite() {
                continue;
            }
            for s in [-1.0, 1.0] {
                let mut c = DVector::zeros(self.n);
                c[k - 1] = s;
                cons.push(Constraint { c, d: -m });
            }
        }
        LinearSystem::new(a, b, cons, self.u_max)
    }

    pub fn x0_vec(&self) -> StateVector {
        DVector::from_vec(self.x0.clone())
    }

    pub fn xf_vec(&self) -> StateVector {
        DVector::from_vec(self.xf.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Cor1Verdict {
    pub switches: usize,
    pub bound: usize,
    /// `false` when the switch count exceeds `n - 1`.
    pub admissible: bool,
}

/// Switch-count screen for chains without state bounds.
pub fn corollary1_bound(problem: &CoiProblem, switches: usize) -> Result<Cor1Verdict> {
    if problem.has_state_bounds() {
        return Err(Error::Regime(
            "the switch-count bound only applies when every state bound is infinite".into(),
        ));
    }
    let bound = problem.n - 1;
    Ok(Cor1Verdict {
        switches,
        bound,
        admissible: switches <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_ids_skip_infinite_bounds() {
        let p = CoiProblem::new(1.0, vec![Some(1.0), None, Some(2.0)], vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(p.constraint_id(1, false), Some(0));
        assert_eq!(p.constraint_id(1, true), Some(1));
        assert_eq!(p.constraint_id(2, true), None);
        assert_eq!(p.constraint_id(3, false), Some(2));
        assert_eq!(p.constraint_of(3), Some((3, true)));
        let sys = p.system().unwrap();
        assert_eq!(sys.num_constraints(), 4);
        assert_eq!(sys.constraints[3].c[2], 1.0);
        assert_eq!(sys.constraints[3].d, -2.0);
    }

    #[test]
    fn rejects_boundary_outside_box() {
        assert!(CoiProblem::new(1.0, vec![Some(1.0)], vec![1.5], vec![0.0]).is_err());
    }

    #[test]
    fn switch_bound() {
        let p = CoiProblem::new(1.0, vec![None, None], vec![0.0; 2], vec![0.0, 1.0]).unwrap();
        assert!(corollary1_bound(&p, 1).unwrap().admissible);
        assert!(!corollary1_bound(&p, 2).unwrap().admissible);
        let q = CoiProblem::new(1.0, vec![Some(1.0), None], vec![0.0; 2], vec![0.0, 1.0]).unwrap();
        assert!(matches!(corollary1_bound(&q, 1), Err(Error::Regime(_))));
    }

    #[test]
    fn json_with_infinite_bound() {
        let p: CoiProblem = serde_json::from_str(
            r#"{"n":2,"u_max":1,"x_m":[0.5,null],"x0":[0,0],"xf":[0,1]}"#,
        )
        .unwrap();
        assert_eq!(p.bound(2), f64::INFINITY);
        assert_eq!(p.system().unwrap().num_constraints(), 2);
    }
}
