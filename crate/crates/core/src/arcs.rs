//! System behaviors: unconstrained bang arcs and constrained (singular) arcs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linsys::{ConstraintOrderInfo, LinearSystem, StateVector};
use crate::{linalg, Error, Result, Tolerances};

/// Index into the extended constraint list: `0..P` are state constraints,
/// `P` is `u <= u_max` and `P + 1` is `-u <= u_max`.
pub type ConstraintId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BehaviorKind {
    Unconstrained { sign: i8 },
    Constrained { active: Vec<usize> },
}

impl std::fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BehaviorKind::Unconstrained { sign } => write!(f, "{}", if *sign > 0 { "+" } else { "-" }),
            BehaviorKind::Constrained { active } => {
                let ids: Vec<String> = active.iter().map(|p| p.to_string()).collect();
                write!(f, "c[{}]", ids.join(","))
            }
        }
    }
}

/// Where an equality row of a behavior came from.
#[derive(Debug, Clone, PartialEq)]
pub enum RowOrigin {
    /// `c_p^T A^r x (+ d_p if r = 0) = 0`.
    Order { p: usize, r: usize },
    /// `c_q^T (A + b a_p^T)^r x = 0`.
    Consistency { p: usize, q: usize, r: usize },
}

#[derive(Debug, Clone)]
pub struct SystemBehavior {
    pub kind: BehaviorKind,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DVector<f64>,
    /// Equality rows `F x + g = 0`, full row rank (0 rows when unconstrained).
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
    pub origins: Vec<RowOrigin>,
    /// Orders and gains of the active constraints, sorted by index.
    pub gains: Vec<ConstraintOrderInfo>,
}

impl PartialEq for SystemBehavior {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.a_hat == other.a_hat && self.b_hat == other.b_hat
    }
}

impl SystemBehavior {
    pub fn is_constrained(&self) -> bool {
        matches!(self.kind, BehaviorKind::Constrained { .. })
    }

    pub fn active(&self) -> &[usize] {
        match &self.kind {
            BehaviorKind::Constrained { active } => active,
            BehaviorKind::Unconstrained { .. } => &[],
        }
    }

    pub fn sign(&self) -> Option<i8> {
        match self.kind {
            BehaviorKind::Unconstrained { sign } => Some(sign),
            _ => None,
        }
    }

    /// Feedback gain realized on a constrained arc (`u = gain^T x`).
    pub fn gain(&self) -> Option<&DVector<f64>> {
        self.gains.first().map(|g| &g.gain)
    }

    pub fn rows(&self) -> usize {
        self.f.nrows()
    }

    /// Largest equality residual `|F x + g|` at `x`.
    pub fn residual(&self, x: &StateVector) -> f64 {
        if self.f.nrows() == 0 {
            return 0.0;
        }
        (&self.f * x + &self.g).amax()
    }
}

pub fn make_unconstrained(sys: &LinearSystem, sign: i8) -> Result<SystemBehavior> {
    if sign != 1 && sign != -1 {
        return Err(Error::InvalidInput(format!("sign must be +1 or -1, got {sign}")));
    }
    let n = sys.n();
    Ok(SystemBehavior {
        kind: BehaviorKind::Unconstrained { sign },
        a_hat: sys.a.clone(),
        b_hat: &sys.b * (sign as f64 * sys.u_max),
        f: DMatrix::zeros(0, n),
        g: DVector::zeros(0),
        origins: Vec::new(),
        gains: Vec::new(),
    })
}

pub fn make_constrained(
    sys: &LinearSystem,
    active: &[usize],
    tol: &Tolerances,
) -> Result<SystemBehavior> {
    let mut set: Vec<usize> = active.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.is_empty() {
        return Err(Error::InvalidInput("empty active set".into()));
    }
    if let Some(&p) = set.iter().find(|&&p| p >= sys.num_constraints()) {
        return Err(Error::InvalidInput(format!("no state constraint {p}")));
    }
    let n = sys.n();
    let gains = set
        .iter()
        .map(|&p| sys.constraint_order(p, tol.piv))
        .collect::<Result<Vec<_>>>()?;
    let (rows, offsets, origins) = candidate_rows(sys, &gains);

    if let Some((p, q)) = first_inconsistency(sys, &gains, tol) {
        return Err(Error::Inconsistent { p, q });
    }
    let keep = linalg::independent_rows(&[], &rows, tol.row);
    let mut f = DMatrix::zeros(keep.len(), n);
    let mut g = DVector::zeros(keep.len());
    let mut kept_origins = Vec::with_capacity(keep.len());
    for (i, &k) in keep.iter().enumerate() {
        f.set_row(i, &rows[k].transpose());
        g[i] = offsets[k];
        kept_origins.push(origins[k].clone());
    }
    let a_hat = &sys.a + &sys.b * gains[0].gain.transpose();
    Ok(SystemBehavior {
        kind: BehaviorKind::Constrained { active: set },
        a_hat,
        b_hat: DVector::zeros(n),
        f,
        g,
        origins: kept_origins,
        gains,
    })
}

type Rows = (Vec<DVector<f64>>, Vec<f64>, Vec<RowOrigin>);

fn candidate_rows(sys: &LinearSystem, gains: &[ConstraintOrderInfo]) -> Rows {
    let n = sys.n();
    let at = sys.a.transpose();
    let mut rows = Vec::new();
    let mut offsets = Vec::new();
    let mut origins = Vec::new();
    for gi in gains {
        let con = &sys.constraints[gi.index];
        let mut row = con.c.clone();
        rows.push(row.clone());
        offsets.push(con.d);
        origins.push(RowOrigin::Order { p: gi.index, r: 0 });
        for r in 1..gi.order {
            row = &at * row;
            rows.push(row.clone());
            offsets.push(0.0);
            origins.push(RowOrigin::Order { p: gi.index, r });
        }
    }
    for gp in gains {
        let ap_t = (&sys.a + &sys.b * gp.gain.transpose()).transpose();
        for gq in gains {
            let mut row = sys.constraints[gq.index].c.clone();
            for r in 1..=n {
                row = &ap_t * row;
                rows.push(row.clone());
                offsets.push(0.0);
                origins.push(RowOrigin::Consistency {
                    p: gp.index,
                    q: gq.index,
                    r,
                });
            }
        }
    }
    (rows, offsets, origins)
}

fn consistent(sys: &LinearSystem, gains: &[ConstraintOrderInfo], tol: &Tolerances) -> bool {
    let (rows, offsets, _) = candidate_rows(sys, gains);
    let n = sys.n();
    let mut m = DMatrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        m.set_row(i, &r.transpose());
    }
    let rhs = -DVector::from_vec(offsets);
    let gnorm = rhs.norm();
    if gnorm == 0.0 {
        return true;
    }
    let x = linalg::min_norm_solve(&m, &rhs, 1e-12);
    (&m * x - &rhs).norm() <= tol.consistency * gnorm
}

fn first_inconsistency(
    sys: &LinearSystem,
    gains: &[ConstraintOrderInfo],
    tol: &Tolerances,
) -> Option<(usize, usize)> {
    if consistent(sys, gains, tol) {
        return None;
    }
    for i in 0..gains.len() {
        if !consistent(sys, &gains[i..=i], tol) {
            return Some((gains[i].index, gains[i].index));
        }
    }
    for i in 0..gains.len() {
        for j in i + 1..gains.len() {
            if !consistent(sys, &[gains[i].clone(), gains[j].clone()], tol) {
                return Some((gains[i].index, gains[j].index));
            }
        }
    }
    Some((gains[0].index, gains[gains.len() - 1].index))
}

pub fn arc_control(sys: &LinearSystem, behavior: &SystemBehavior, x: &StateVector) -> f64 {
    match behavior.kind {
        BehaviorKind::Unconstrained { sign } => sign as f64 * sys.u_max,
        BehaviorKind::Constrained { .. } => behavior.gain().map_or(0.0, |g| g.dot(x)),
    }
}

pub fn behavior_from_kind(
    sys: &LinearSystem,
    kind: &BehaviorKind,
    tol: &Tolerances,
) -> Result<SystemBehavior> {
    match kind {
        BehaviorKind::Unconstrained { sign } => make_unconstrained(sys, *sign),
        BehaviorKind::Constrained { active } => make_constrained(sys, active, tol),
    }
}

/// Affine functional `(w, w0)` whose value `w^T x + w0 <= 0` expresses constraint
/// `id` on the given arc. Control constraints are only functionals of the state on
/// constrained arcs; on bang arcs they are constant and `None` is returned.
pub fn constraint_functional(
    sys: &LinearSystem,
    behavior: &SystemBehavior,
    id: ConstraintId,
) -> Option<(DVector<f64>, f64)> {
    let p = sys.num_constraints();
    if id < p {
        let c = &sys.constraints[id];
        return Some((c.c.clone(), c.d));
    }
    let gain = behavior.gain()?;
    match id - p {
        0 => Some((gain.clone(), -sys.u_max)),
        1 => Some((-gain.clone(), -sys.u_max)),
        _ => None,
    }
}

pub fn constraint_name(sys: &LinearSystem, id: ConstraintId) -> String {
    let p = sys.num_constraints();
    if id < p {
        format!("state constraint {id}")
    } else if id == p {
        "u <= u_max".to_string()
    } else {
        "-u <= u_max".to_string()
    }
}

/// Derivative ladder `L_r = w^T A^(r-1) (A x + b)`, `r = 1..=k`.
pub fn ladder(w: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, x: &StateVector, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    let mut v = a * x + b;
    for _ in 0..k {
        out.push(w.dot(&v));
        v = a * v;
    }
    out
}

/// Scale of each ladder entry, used for relative zero tests.
pub fn ladder_scale(w: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, x: &StateVector, k: usize) -> Vec<f64> {
    let an = a.norm();
    let base = an * x.norm() + b.norm();
    (0..k)
        .map(|r| (w.norm() * an.powi(r as i32) * base).max(w.norm() * 1e-300))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{chain_matrices, Constraint};

    fn chain_box(n: usize, bounds: &[f64]) -> LinearSystem {
        let (a, b) = chain_matrices(n);
        let mut cons = Vec::new();
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            cons.push(Constraint { c: -e.clone(), d: -bounds[k] });
            cons.push(Constraint { c: e, d: -bounds[k] });
        }
        LinearSystem::new(a, b, cons, 1.0).unwrap()
    }

    #[test]
    fn chain_constrained_arc_is_box_face() {
        let sys = chain_box(4, &[1.0, 0.7, 2.0, 3.0]);
        let beh = make_constrained(&sys, &[3], &Tolerances::default()).unwrap();
        assert_eq!(beh.rows(), 2);
        let x = DVector::from_vec(vec![0.0, 0.7, -0.3, 1.1]);
        assert!(beh.residual(&x) < 1e-15);
        assert_eq!(arc_control(&sys, &beh, &x), 0.0);
        assert_eq!(beh.b_hat, DVector::zeros(4));
    }

    #[test]
    fn example_one_consistency() {
        let (a, b) = chain_matrices(3);
        let cons = vec![
            Constraint { c: DVector::from_vec(vec![1.0, 0.0, 1.0]), d: -1.0 },
            Constraint { c: DVector::from_vec(vec![0.0, 1.0, 0.0]), d: 0.0 },
            Constraint { c: DVector::from_vec(vec![0.0, 1.0, 0.0]), d: -1.0 },
        ];
        let sys = LinearSystem::new(a, b, cons, 1.0).unwrap();
        let tol = Tolerances::default();
        let ok = make_constrained(&sys, &[0, 1], &tol).unwrap();
        // the only solution is x = (0, 0, 1)
        assert_eq!(ok.rows(), 3);
        let x = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(ok.residual(&x) < 1e-14);
        match make_constrained(&sys, &[0, 2], &tol) {
            Err(Error::Inconsistent { p, q }) => assert_eq!((p, q), (0, 2)),
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn unconstrained_dynamics() {
        let sys = chain_box(2, &[1.0, 1.0]);
        let up = make_unconstrained(&sys, 1).unwrap();
        assert_eq!(up.b_hat, sys.b);
        assert_eq!(up, make_unconstrained(&sys, 1).unwrap());
        assert_ne!(up, make_unconstrained(&sys, -1).unwrap());
    }

    #[test]
    fn behavior_json() {
        let k: BehaviorKind = serde_json::from_str(r#"{"kind":"constrained","active":[2,0]}"#).unwrap();
        assert_eq!(k, BehaviorKind::Constrained { active: vec![2, 0] });
        let u: BehaviorKind = serde_json::from_str(r#"{"kind":"unconstrained","sign":-1}"#).unwrap();
        assert_eq!(serde_json::to_string(&u).unwrap(), r#"{"kind":"unconstrained","sign":-1}"#);
    }
}
