//! Terminal-time descent along the manifold `H(t) = 0` of a fixed ASL.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arcs::BehaviorKind;
use crate::arcs::behavior_from_kind;
use crate::asl::{
    AdditionalEndConstraint, AugmentedSwitchingLaw, EndTouch, KeypointKind, SideOrder, assemble, build_equality_system, check_feasible, check_schedule, extract_from, re_extract, EqualitySystem,
    TimedTrajectory,
};
use crate::linalg::{independent_rows, min_norm_solve};
use crate::linsys::{LinearSystem, StateVector};
use crate::optimality::{necessary_condition_test, OptimalityVerdict};
use crate::{Error, Result, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub tol: Tolerances,
    /// Outer descent iterations.
    pub max_iter: usize,
    pub newton_max_iter: usize,
    /// Largest Newton displacement, as a fraction of the horizon.
    pub newton_radius: f64,
    /// Initial trust step, as a fraction of the shortest arc.
    pub trust_init: f64,
    pub trust_grow: f64,
    pub trust_shrink: f64,
    /// Smallest step tried, relative to `t_M`.
    pub step_floor: f64,
    /// Arcs shorter than this (relative to `max(1, t_M)`) are deleted.
    pub collapse_tol: f64,
    pub bisect_iter: usize,
    /// Allowed growth of `t_M` when snapping onto a new contact.
    pub snap_slack: f64,
    /// Try constrained-arc insertion at boundary contacts when the descent stalls.
    pub insert_arcs: bool,
    /// Length of an inserted arc, relative to `max(1, t_M)`.
    pub insert_len: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tol: Tolerances::default(),
            max_iter: 200,
            newton_max_iter: 50,
            newton_radius: 0.25,
            trust_init: 1e-2,
            trust_grow: 2.0,
            trust_shrink: 0.5,
            step_floor: 1e-12,
            collapse_tol: 1e-5,
            bisect_iter: 80,
            snap_slack: 1e-9,
            insert_arcs: true,
            insert_len: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.tol.validate()?;
        let pos = [
            self.newton_radius,
            self.trust_init,
            self.step_floor,
            self.collapse_tol,
            self.snap_slack,
            self.insert_len,
        ];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || !(self.trust_grow > 1.0)
            || !(self.trust_shrink > 0.0 && self.trust_shrink < 1.0)
            || self.newton_max_iter == 0
        {
            return Err(Error::InvalidInput("invalid optimizer parameters".into()));
        }
        Ok(())
    }
}

/// Newton iteration on the unpinned keypoint times (indices `1..=M`).
pub fn newton_solve(
    h: &EqualitySystem,
    times: &[f64],
    pinned: &[usize],
    targets: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Vec<f64>> {
    let m = h.m();
    if times.len() != m + 1 || pinned.len() != targets.len() {
        return Err(Error::InvalidInput("pinned indices and targets differ in length".into()));
    }
    if pinned.iter().any(|&k| k == 0 || k > m) {
        return Err(Error::InvalidInput("pinned index out of range".into()));
    }
    let mut t = times.to_vec();
    for (&k, &v) in pinned.iter().zip(targets) {
        t[k] = v;
    }
    let free: Vec<usize> = (1..=m).filter(|k| !pinned.contains(k)).collect();
    let horizon = (times[m] - times[0]).max(1e-12);
    let radius = cfg.newton_radius * horizon;
    let start = t.clone();
    for it in 0..=cfg.newton_max_iter {
        check_schedule(&t).map_err(|_| Error::Projection("keypoint order lost".into()))?;
        let r = h.evaluate(&t)?;
        // Aim below the audit bound so restored points pass it with margin.
        if r.amax() <= 0.01 * cfg.tol.eq || (it == cfg.newton_max_iter && r.amax() <= cfg.tol.eq) {
            return Ok(t);
        }
        if it == cfg.newton_max_iter || free.is_empty() {
            break;
        }
        let j = h.jacobian(&t)?;
        let jf = DMatrix::from_fn(j.nrows(), free.len(), |i, c| j[(i, free[c] - 1)]);
        let d = min_norm_solve(&jf, &(-&r), cfg.tol.rank);
        let mut lam = 1.0;
        loop {
            let mut trial = t.clone();
            for (c, &k) in free.iter().enumerate() {
                trial[k] += lam * d[c];
            }
            let ordered = check_schedule(&trial).is_ok();
            let inside = free.iter().all(|&k| (trial[k] - start[k]).abs() <= radius);
            if ordered && inside {
                if let Ok(rt) = h.evaluate(&trial) {
                    if rt.norm() < r.norm() || lam < 1.0 / 64.0 {
                        t = trial;
                        break;
                    }
                }
            }
            lam *= 0.5;
            if lam < 1e-6 {
                return Err(Error::Projection(if inside {
                    "Newton step cannot keep keypoint order".into()
                } else {
                    "Newton step leaves the trust region".into()
                }));
            }
        }
    }
    let r = h.evaluate(&t)?;
    Err(Error::Projection(format!(
        "no convergence in {} iterations (residual {:.3e})",
        cfg.newton_max_iter,
        r.amax()
    )))
}

/// Restores `H(t) = 0` after pinning the given keypoint times.
pub fn newton_project(
    sys: &LinearSystem,
    traj: &TimedTrajectory,
    xf: &StateVector,
    pinned: &[usize],
    targets: &[f64],
    cfg: &OptimizerConfig,
) -> Result<TimedTrajectory> {
    let h = assemble(sys, traj, xf, &cfg.tol);
    let t = newton_solve(&h, &traj.times, pinned, targets, cfg)?;
    traj.with_times(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iter: usize,
    pub t_m: f64,
    pub dof: i64,
    pub rank: usize,
    pub rows: usize,
    pub cols: usize,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DescentStatus {
    /// Same ASL, smaller `t_M`.
    Improved,
    /// A boundary contact changed the ASL.
    Contact(String),
    /// Vanishing arcs were deleted.
    Collapsed(usize),
    /// A constrained arc was inserted at a contact.
    Inserted(String),
    /// The necessary condition holds; nothing to do.
    Converged,
    Stalled(String),
}

#[derive(Debug, Clone)]
pub struct DescentState {
    pub traj: TimedTrajectory,
    pub h: EqualitySystem,
    pub verdict: OptimalityVerdict,
    pub xf: StateVector,
    /// Current trust step.
    pub step: f64,
    pub history: Vec<HistoryEntry>,
    pub iter: usize,
    /// Structures already abandoned, to avoid cycling.
    tabu: Vec<Vec<BehaviorKind>>,
}

impl DescentState {
    pub fn new(sys: &LinearSystem, traj: TimedTrajectory, xf: &StateVector, cfg: &OptimizerConfig) -> Result<Self> {
        let rep = check_feasible(sys, &traj, Some(xf), &cfg.tol)?;
        if !rep.feasible {
            return Err(Error::Infeasible {
                constraint: rep.violations.join("; "),
                time: traj.final_time(),
                excess: rep.max_residual,
            });
        }
        let h = build_equality_system(sys, &traj, xf, &cfg.tol)?;
        let verdict = necessary_condition_test(&h, &cfg.tol)?;
        let step = cfg.trust_init * min_arc(&traj);
        let mut s = DescentState {
            traj,
            h,
            verdict,
            xf: xf.clone(),
            step,
            history: Vec::new(),
            iter: 0,
            tabu: Vec::new(),
        };
        s.record("seed");
        Ok(s)
    }

    pub fn final_time(&self) -> f64 {
        self.traj.final_time()
    }

    pub fn dof(&self) -> i64 {
        self.h.dof()
    }

    fn record(&mut self, action: &str) {
        self.history.push(HistoryEntry {
            iter: self.iter,
            t_m: self.traj.final_time(),
            dof: self.h.dof(),
            rank: self.verdict.rank,
            rows: self.verdict.rows,
            cols: self.verdict.cols,
            action: action.to_string(),
        });
    }

    /// Replaces the iterate; the caller has already audited it.
    fn adopt(&mut self, sys: &LinearSystem, traj: TimedTrajectory, cfg: &OptimizerConfig, action: &str) -> Result<()> {
        let h = build_equality_system(sys, &traj, &self.xf, &cfg.tol)?;
        self.verdict = necessary_condition_test(&h, &cfg.tol)?;
        if traj.law != self.traj.law {
            self.step = cfg.trust_init * min_arc(&traj);
        }
        self.h = h;
        self.traj = traj;
        self.iter += 1;
        self.record(action);
        Ok(())
    }
}

fn min_arc(traj: &TimedTrajectory) -> f64 {
    traj.arc_durations().into_iter().fold(f64::INFINITY, f64::min)
}

/// Columns (0-based) forming a row basis of the Jacobian, chosen from `t_M` backwards.
fn choose_basis(j: &DMatrix<f64>, rel: f64) -> Vec<usize> {
    let m = j.ncols();
    let order: Vec<usize> = (0..m).rev().collect();
    let cols: Vec<DVector<f64>> = order.iter().map(|&c| j.column(c).into_owned()).collect();
    let mut picked: Vec<usize> = independent_rows(&[], &cols, rel).into_iter().map(|i| order[i]).collect();
    picked.sort_unstable();
    picked
}

/// `dt_M / dt_c` for each non-basic column `c` under the implicit function.
fn sensitivities(j: &DMatrix<f64>, basis: &[usize], rel: f64) -> Vec<(usize, f64)> {
    let m = j.ncols();
    let Some(pos) = basis.iter().position(|&c| c == m - 1) else {
        return Vec::new();
    };
    let jb = DMatrix::from_fn(j.nrows(), basis.len(), |i, c| j[(i, basis[c])]);
    (0..m)
        .filter(|c| !basis.contains(c))
        .map(|c| {
            let col = j.column(c).into_owned();
            let y = min_norm_solve(&jb, &col, rel);
            (c, -y[pos])
        })
        .collect()
}

enum Trial {
    Same(TimedTrajectory),
    Changed(TimedTrajectory),
    Bad(BadReason),
}

#[derive(Debug, Clone, PartialEq)]
enum BadReason {
    Projection,
    NoDecrease,
    Schedule,
    Audit(String),
    Extraction(String),
}

struct Move<'a> {
    sys: &'a LinearSystem,
    state: &'a DescentState,
    col: usize,
    dir: f64,
    pinned: Vec<usize>,
    cfg: &'a OptimizerConfig,
}

impl Move<'_> {
    fn eval(&self, s: f64) -> Trial {
        let t0 = &self.state.traj.times;
        let m = t0.len() - 1;
        let targets: Vec<f64> = self
            .pinned
            .iter()
            .map(|&k| if k == self.col { t0[k] + self.dir * s } else { t0[k] })
            .collect();
        if check_schedule(&{
            let mut tt = t0.clone();
            tt[self.col] += self.dir * s;
            tt
        })
        .is_err()
        {
            return Trial::Bad(BadReason::Schedule);
        }
        let t = match newton_solve(&self.state.h, t0, &self.pinned, &targets, self.cfg) {
            Ok(t) => t,
            Err(_) => return Trial::Bad(BadReason::Projection),
        };
        if !(t[m] < t0[m]) {
            return Trial::Bad(BadReason::NoDecrease);
        }
        let cand = match self.state.traj.with_times(t) {
            Ok(c) => c,
            Err(_) => return Trial::Bad(BadReason::Schedule),
        };
        match check_feasible(self.sys, &cand, Some(&self.state.xf), &self.cfg.tol) {
            Ok(rep) if rep.feasible => {}
            Ok(rep) => return Trial::Bad(BadReason::Audit(rep.violations.join("; "))),
            Err(e) => return Trial::Bad(BadReason::Audit(e.to_string())),
        }
        match re_extract(self.sys, &cand, &self.cfg.tol) {
            Ok(re) if re.law == cand.law => Trial::Same(cand),
            Ok(re) => Trial::Changed(re),
            Err(e) => Trial::Bad(BadReason::Extraction(e.to_string())),
        }
    }
}

enum Outcome {
    Same(TimedTrajectory, f64),
    Changed(TimedTrajectory),
    /// Blocked at the boundary `lo` (best feasible point, if any) with the reason found beyond.
    Blocked(Option<TimedTrajectory>, BadReason),
}

fn line_search(mv: &Move, step: f64, cfg: &OptimizerConfig) -> Outcome {
    let floor = cfg.step_floor * mv.state.traj.final_time().abs().max(1.0);
    let s = step.max(floor);
    let mut best: Option<TimedTrajectory> = None;
    let (mut lo, mut hi) = (0.0, s);
    let mut reason = match mv.eval(s) {
        Trial::Same(tr) => return Outcome::Same(tr, s),
        Trial::Changed(tr) => return Outcome::Changed(tr),
        Trial::Bad(r) => r,
    };
    for _ in 0..cfg.bisect_iter {
        if hi - lo <= floor {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match mv.eval(mid) {
            Trial::Same(tr) => {
                lo = mid;
                best = Some(tr);
            }
            Trial::Changed(tr) => return Outcome::Changed(tr),
            Trial::Bad(r) => {
                hi = mid;
                reason = r;
            }
        }
    }
    log::debug!("t{} blocked in [{lo:e}, {hi:e}]: {reason:?}", mv.col);
    Outcome::Blocked(best, reason)
}

/// Deletes arcs shorter than `tol` and merges equal neighbours, then re-extracts.
pub fn collapse_zero_arcs(
    sys: &LinearSystem,
    traj: &TimedTrajectory,
    tol_duration: f64,
    tol: &Tolerances,
) -> Result<TimedTrajectory> {
    let durs = traj.arc_durations();
    if durs.iter().all(|d| *d >= tol_duration) {
        return Ok(traj.clone());
    }
    let mut spec: Vec<(BehaviorKind, f64)> = Vec::new();
    for (k, d) in traj.law.kinds().into_iter().zip(durs) {
        if d < tol_duration {
            continue;
        }
        match spec.last_mut() {
            Some((pk, pd)) if *pk == k => *pd += d,
            _ => spec.push((k, d)),
        }
    }
    if spec.is_empty() {
        return Err(Error::Restructure("every arc vanished".into()));
    }
    extract_from(sys, &spec, &traj.x0, traj.times[0], tol).map_err(|e| Error::Restructure(e.to_string()))
}

/// Projects a re-structured trajectory onto its own equality system, keeping
/// `t_M` pinned when possible, and confirms the ASL is reproduced.
fn snap(
    sys: &LinearSystem,
    traj: &TimedTrajectory,
    xf: &StateVector,
    t_limit: f64,
    cfg: &OptimizerConfig,
) -> Result<TimedTrajectory> {
    snap_pinned(sys, traj, xf, t_limit, &[], cfg)
}

/// As [`snap`], first trying with the given keypoint times held fixed.
fn snap_pinned(
    sys: &LinearSystem,
    traj: &TimedTrajectory,
    xf: &StateVector,
    t_limit: f64,
    pins: &[usize],
    cfg: &OptimizerConfig,
) -> Result<TimedTrajectory> {
    let mut cur = traj.clone();
    for round in 0..4 {
        let h = assemble(sys, &cur, xf, &cfg.tol);
        let m = cur.m();
        let pin = cur.times[m].min(t_limit);
        let first = if round == 0 && !pins.is_empty() {
            let targets: Vec<f64> = pins.iter().map(|&k| cur.times[k]).collect();
            newton_solve(&h, &cur.times, pins, &targets, cfg)
        } else {
            Err(Error::Projection("no preferred pins".into()))
        };
        let t = first
            .or_else(|_| newton_solve(&h, &cur.times, &[m], &[pin], cfg))
            .or_else(|_| newton_solve(&h, &cur.times, &[], &[], cfg))?;
        let next = cur.with_times(t)?;
        let re = re_extract(sys, &next, &cfg.tol)?;
        if re.law == next.law {
            if next.final_time() > t_limit {
                return Err(Error::Restructure(format!(
                    "snap raised t_M to {} above {}",
                    next.final_time(),
                    t_limit
                )));
            }
            let rep = check_feasible(sys, &next, Some(xf), &cfg.tol)?;
            if !rep.feasible {
                return Err(Error::Restructure(rep.violations.join("; ")));
            }
            build_equality_system(sys, &next, xf, &cfg.tol)?;
            return Ok(next);
        }
        cur = re;
    }
    Err(Error::Restructure("extraction does not settle".into()))
}

/// One descent step from `state`.
pub fn descend_terminal_time(sys: &LinearSystem, state: &mut DescentState, cfg: &OptimizerConfig) -> Result<DescentStatus> {
    if state.verdict.satisfied {
        return Ok(DescentStatus::Converged);
    }
    let times = state.traj.times.clone();
    let m = state.traj.m();
    let j = state.h.jacobian(&times)?;
    let basis = choose_basis(&j, cfg.tol.rank);
    let mut cands = sensitivities(&j, &basis, cfg.tol.rank);
    if cands.is_empty() {
        return Ok(DescentStatus::Stalled("t_M is not a basic variable".into()));
    }
    cands.retain(|(_, s)| s.abs() > cfg.tol.rank);
    cands.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap().then(a.0.cmp(&b.0)));
    let pinned: Vec<usize> = (0..m).filter(|c| !basis.contains(c)).map(|c| c + 1).collect();
    let t_now = state.final_time();
    let mut last = String::from("no sensitive column");
    for (c, s) in cands {
        let mv = Move {
            sys,
            state,
            col: c + 1,
            dir: -s.signum(),
            pinned: pinned.clone(),
            cfg,
        };
        match line_search(&mv, state.step, cfg) {
            Outcome::Same(tr, used) => {
                let step = used * cfg.trust_grow;
                state.adopt(sys, tr, cfg, &format!("move t{}", c + 1))?;
                state.step = step;
                return Ok(DescentStatus::Improved);
            }
            Outcome::Changed(tr) => {
                match snap(sys, &tr, &state.xf.clone(), t_now + cfg.snap_slack, cfg) {
                    Ok(next) => {
                        let what = describe_change(&state.traj, &next);
                        state.adopt(sys, next, cfg, &format!("contact t{}: {what}", c + 1))?;
                        return Ok(DescentStatus::Contact(what));
                    }
                    Err(e) => {
                        log::debug!("t{}: contact not kept: {e}", c + 1);
                        last = format!("t{}: {e}", c + 1)
                    }
                }
            }
            Outcome::Blocked(best, reason) => {
                let base = best.unwrap_or_else(|| state.traj.clone());
                let tcol = cfg.collapse_tol * base.final_time().abs().max(1.0);
                if min_arc(&base) < tcol {
                    let collapsed = collapse_zero_arcs(sys, &base, tcol, &cfg.tol)
                        .and_then(|tr| snap(sys, &tr, &state.xf.clone(), t_now + cfg.snap_slack, cfg));
                    match collapsed {
                        Ok(next) => {
                            let removed = state.traj.law.num_arcs() as i64 - next.law.num_arcs() as i64;
                            state.adopt(sys, next, cfg, &format!("collapse t{}", c + 1))?;
                            return Ok(DescentStatus::Collapsed(removed.max(0) as usize));
                        }
                        Err(e) => last = format!("t{}: {e}", c + 1),
                    }
                } else if base.final_time() < t_now && base.law == state.traj.law {
                    state.adopt(sys, base, cfg, &format!("move t{} (blocked)", c + 1))?;
                    state.step = (state.step * cfg.trust_shrink).max(cfg.step_floor);
                    return Ok(DescentStatus::Improved);
                } else {
                    last = format!("t{}: {:?}", c + 1, reason);
                }
            }
        }
    }
    Ok(DescentStatus::Stalled(last))
}

fn describe_change(old: &TimedTrajectory, new: &TimedTrajectory) -> String {
    let ko: Vec<String> = old.law.kinds().iter().map(|k| k.to_string()).collect();
    let kn: Vec<String> = new.law.kinds().iter().map(|k| k.to_string()).collect();
    if ko != kn {
        return format!("arcs {}", kn.join(" "));
    }
    format!(
        "markers {} -> {}, end contacts {} -> {}",
        old.law.num_markers(),
        new.law.num_markers(),
        old.law.end_constraints.iter().map(|e| e.touched.len()).sum::<usize>(),
        new.law.end_constraints.iter().map(|e| e.touched.len()).sum::<usize>()
    )
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub state: DescentState,
    pub status: DescentStatus,
    pub seed_time: f64,
}

impl OptimizeReport {
    pub fn reduction(&self) -> f64 {
        let t0 = self.seed_time - self.state.traj.times[0];
        (self.seed_time - self.state.final_time()) / t0
    }
}

/// Repeats descent steps until the rank test holds, the descent stalls, or `max_iter`.
pub fn optimize(
    sys: &LinearSystem,
    traj: TimedTrajectory,
    xf: &StateVector,
    cfg: &OptimizerConfig,
) -> Result<OptimizeReport> {
    cfg.validate()?;
    let mut state = DescentState::new(sys, traj, xf, cfg)?;
    let seed_time = state.final_time();
    let mut status = DescentStatus::Converged;
    for _ in 0..cfg.max_iter {
        status = descend_terminal_time(sys, &mut state, cfg)?;
        if let DescentStatus::Stalled(_) = status {
            if cfg.insert_arcs {
                if let Some(what) = crate::optimizer::insert::try_insert(sys, &mut state, cfg)? {
                    status = DescentStatus::Inserted(what);
                    continue;
                }
            }
            break;
        }
        if status == DescentStatus::Converged {
            break;
        }
    }
    Ok(OptimizeReport {
        state,
        status,
        seed_time,
    })
}

pub fn write_history_csv<W: Write>(out: W, history: &[HistoryEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "t_M", "DOF", "rank", "rows", "cols", "action"])?;
    for h in history {
        w.write_record([
            h.iter.to_string(),
            crate::asl::fmt17(h.t_m),
            h.dof.to_string(),
            h.rank.to_string(),
            h.rows.to_string(),
            h.cols.to_string(),
            h.action.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

mod insert {
    use super::*;

    /// Boundary contact where a constrained arc could start.
    #[derive(Debug, Clone)]
    enum Site {
        /// Junction `j` (between arcs `j` and `j + 1`) touching constraint `id`.
        Junction { j: usize, id: usize },
        /// Marker `index` of arc `arc` touching `id`.
        Marker { arc: usize, index: usize, id: usize },
    }

    impl Site {
        fn id(&self) -> usize {
            match *self {
                Site::Junction { id, .. } | Site::Marker { id, .. } => id,
            }
        }
    }

    fn sites(sys: &LinearSystem, traj: &TimedTrajectory) -> Vec<Site> {
        let p = sys.num_constraints();
        let mut out = Vec::new();
        for (j, e) in traj.law.end_constraints.iter().enumerate() {
            for t in &e.touched {
                let both = matches!(t.left, SideOrder::Order(_)) && matches!(t.right, SideOrder::Order(_));
                if t.id < p && both {
                    out.push(Site::Junction { j, id: t.id });
                }
            }
        }
        for (arc, ms) in traj.law.markers.iter().enumerate() {
            for (index, m) in ms.iter().enumerate() {
                for &(id, _) in &m.touched {
                    if id < p {
                        out.push(Site::Marker { arc, index, id });
                    }
                }
            }
        }
        out
    }

    /// Law and times with a constrained arc of length `eps` inserted at `site`.
    /// Later keypoints shift by `eps`; the snap that follows restores `H = 0`.
    fn inserted(
        sys: &LinearSystem,
        traj: &TimedTrajectory,
        site: &Site,
        eps: f64,
        tol: &Tolerances,
    ) -> Result<(TimedTrajectory, [usize; 2])> {
        let law = &traj.law;
        let con = behavior_from_kind(sys, &BehaviorKind::Constrained { active: vec![site.id()] }, tol)?;
        let ends = law.arc_end_keypoints();
        let mut arcs = law.arcs.clone();
        let mut markers = law.markers.clone();
        let mut endc = law.end_constraints.clone();
        let split_kp = match *site {
            Site::Junction { j, id } => {
                let e = &law.end_constraints[j];
                let t = e.touched.iter().find(|t| t.id == id).unwrap();
                arcs.insert(j + 1, con);
                markers.insert(j + 1, Vec::new());
                let mut left = e.clone();
                for tt in &mut left.touched {
                    if tt.id == id {
                        tt.right = SideOrder::Active;
                    }
                }
                let right = AdditionalEndConstraint {
                    touched: vec![EndTouch { id, left: SideOrder::Active, right: t.right }],
                };
                endc[j] = left;
                endc.insert(j + 1, right);
                ends[j]
            }
            Site::Marker { arc, index, id } => {
                let m = &law.markers[arc][index];
                let r = m.touched.iter().find(|t| t.0 == id).unwrap().1;
                let host = law.arcs[arc].clone();
                arcs.insert(arc + 1, con);
                arcs.insert(arc + 2, host);
                let tail = markers[arc].split_off(index + 1);
                markers[arc].pop();
                markers.insert(arc + 1, Vec::new());
                markers.insert(arc + 2, tail);
                let left = AdditionalEndConstraint {
                    touched: m
                        .touched
                        .iter()
                        .map(|&(q, rq)| EndTouch {
                            id: q,
                            left: SideOrder::Order(rq),
                            right: if q == id { SideOrder::Active } else { SideOrder::Order(rq) },
                        })
                        .collect(),
                };
                let right = AdditionalEndConstraint {
                    touched: vec![EndTouch { id, left: SideOrder::Active, right: SideOrder::Order(r) }],
                };
                endc.insert(arc, left);
                endc.insert(arc + 1, right);
                let kp = law.keypoints();
                let k = kp
                    .iter()
                    .position(|p| p.arc == arc && p.kind == KeypointKind::Marker(index))
                    .unwrap()
                    + 1;
                k
            }
        };
        let new_law = AugmentedSwitchingLaw { arcs, markers, end_constraints: endc };
        let mut times = traj.times[..=split_kp].to_vec();
        times.push(traj.times[split_kp] + eps);
        times.extend(traj.times[split_kp + 1..].iter().map(|t| t + eps));
        Ok((TimedTrajectory::new(new_law, traj.x0.clone(), times)?, [split_kp, split_kp + 1]))
    }

    /// Inserts a short constrained arc at a contact and keeps it only if the
    /// next descent step improves `t_M`.
    pub(super) fn try_insert(sys: &LinearSystem, state: &mut DescentState, cfg: &OptimizerConfig) -> Result<Option<String>> {
        let t_now = state.final_time();
        let eps = cfg.insert_len * t_now.abs().max(1.0);
        for site in sites(sys, &state.traj) {
            let Ok((cand, pins)) = inserted(sys, &state.traj, &site, eps, &cfg.tol) else {
                continue;
            };
            let kinds = cand.law.kinds();
            if state.tabu.contains(&kinds) {
                continue;
            }
            state.tabu.push(kinds);
            let next = match snap_pinned(sys, &cand, &state.xf, t_now + cfg.snap_slack, &pins, cfg) {
                Ok(c) => c,
                Err(e) => {
                    log::debug!("insert {site:?}: {e}");
                    continue;
                }
            };
            let what = format!("{site:?}");
            let mut trial = state.clone();
            trial.adopt(sys, next, cfg, &format!("insert {what}"))?;
            let status = descend_terminal_time(sys, &mut trial, cfg)?;
            let progressed = matches!(
                status,
                DescentStatus::Improved | DescentStatus::Contact(_) | DescentStatus::Collapsed(_)
            );
            log::debug!("insert {site:?}: {status:?}, t_M {}", trial.final_time());
            if progressed && trial.final_time() < t_now {
                *state = trial;
                return Ok(Some(what));
            }
        }
        Ok(None)
    }
}
