//! Brute-force cross-checks: a grid search over bang-bang-singular arc
//! sequences and central-difference keypoint Jacobians.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arcs::{behavior_from_kind, BehaviorKind, SystemBehavior};
use crate::asl::{check_feasible, extract_asl, keypoint_states, TimedTrajectory};
use crate::linalg::min_norm_solve;
use crate::linsys::{propagate, LinearSystem, StateVector};
use crate::{Error, Result, Tolerances};

/// `blocks[i][j] = dx_(i+1)/dt_(j+1)` by central differences of re-propagated states.
pub fn finite_difference_jacobian(
    dynamics: &[(DMatrix<f64>, DVector<f64>)],
    x0: &StateVector,
    times: &[f64],
    h: f64,
) -> Result<Vec<Vec<DVector<f64>>>> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let m = dynamics.len();
    let mut blocks = vec![vec![DVector::zeros(x0.len()); m]; m];
    for j in 0..m {
        let mut tp = times.to_vec();
        let mut tm = times.to_vec();
        tp[j + 1] += h;
        tm[j + 1] -= h;
        let xp = states_unchecked(dynamics, x0, &tp)?;
        let xm = states_unchecked(dynamics, x0, &tm)?;
        for i in 0..m {
            blocks[i][j] = (&xp[i + 1] - &xm[i + 1]) / (2.0 * h);
        }
    }
    Ok(blocks)
}

/// Like `keypoint_states` but tolerates a perturbation that briefly reverses an
/// interval, by propagating backwards through the matrix exponential.
fn states_unchecked(
    dynamics: &[(DMatrix<f64>, DVector<f64>)],
    x0: &StateVector,
    times: &[f64],
) -> Result<Vec<StateVector>> {
    if times.windows(2).all(|w| w[1] >= w[0]) {
        return keypoint_states(dynamics, x0, times);
    }
    let mut xs = vec![x0.clone()];
    for (k, (a, b)) in dynamics.iter().enumerate() {
        let dt = times[k + 1] - times[k];
        let x = xs.last().unwrap();
        let next = if dt >= 0.0 {
            propagate(a, b, x, dt)?
        } else {
            let na = -a;
            let nb = -b;
            propagate(&na, &nb, x, -dt)?
        };
        xs.push(next);
    }
    Ok(xs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Longest arc sequence enumerated.
    pub max_arcs: usize,
    /// Largest total duration searched.
    pub horizon: f64,
    /// Grid points per duration in the first round.
    pub grid: usize,
    pub rounds: usize,
    /// Density multiplier per refinement round.
    pub refine: usize,
    /// Allow constrained arcs on single state constraints.
    pub constrained_arcs: bool,
    /// Candidates polished per pattern and round.
    pub polish: usize,
    pub tol: Tolerances,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_arcs: 4,
            horizon: 10.0,
            grid: 8,
            rounds: 3,
            refine: 4,
            constrained_arcs: true,
            polish: 6,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub t_f: f64,
    /// Arc kinds and durations of the best candidate.
    pub arcs: Vec<(BehaviorKind, f64)>,
    /// Switching times `t_1 .. t_(N-1)`.
    pub switch_times: Vec<f64>,
    pub switches: usize,
    /// Grid spacing of the last round.
    pub resolution: f64,
    /// Smallest normalized margin per constraint.
    pub margins: Vec<(String, f64)>,
    pub terminal_error: f64,
}

struct Pattern {
    kinds: Vec<BehaviorKind>,
    behs: Vec<SystemBehavior>,
}

fn patterns(sys: &LinearSystem, cfg: &OracleConfig) -> Vec<Pattern> {
    let mut alphabet = vec![BehaviorKind::Unconstrained { sign: 1 }, BehaviorKind::Unconstrained { sign: -1 }];
    let mut behs: Vec<SystemBehavior> = alphabet
        .iter()
        .map(|k| behavior_from_kind(sys, k, &cfg.tol).expect("bang arcs always exist"))
        .collect();
    if cfg.constrained_arcs {
        for p in 0..sys.num_constraints() {
            let k = BehaviorKind::Constrained { active: vec![p] };
            if let Ok(b) = behavior_from_kind(sys, &k, &cfg.tol) {
                alphabet.push(k);
                behs.push(b);
            }
        }
    }
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = (0..alphabet.len()).map(|i| vec![i]).collect();
    while let Some(seq) = stack.pop() {
        out.push(Pattern {
            kinds: seq.iter().map(|&i| alphabet[i].clone()).collect(),
            behs: seq.iter().map(|&i| behs[i].clone()).collect(),
        });
        if seq.len() < cfg.max_arcs {
            for i in 0..alphabet.len() {
                if i != *seq.last().unwrap() {
                    let mut s = seq.clone();
                    s.push(i);
                    stack.push(s);
                }
            }
        }
    }
    out.sort_by(|a, b| a.kinds.len().cmp(&b.kinds.len()).then_with(|| format!("{:?}", a.kinds).cmp(&format!("{:?}", b.kinds))));
    out
}

/// Terminal error plus the entry equalities of constrained arcs.
fn residual(pat: &Pattern, x0: &StateVector, xf: &StateVector, d: &[f64]) -> Option<DVector<f64>> {
    let mut x = x0.clone();
    let mut r = Vec::new();
    for (beh, &dt) in pat.behs.iter().zip(d) {
        if beh.is_constrained() {
            let e = &beh.f * &x + &beh.g;
            r.extend(e.iter().copied());
        }
        x = propagate(&beh.a_hat, &beh.b_hat, &x, dt).ok()?;
    }
    r.extend((x - xf).iter().copied());
    Some(DVector::from_vec(r))
}

/// Gauss-Newton on the durations with a forward-difference Jacobian.
fn polish(pat: &Pattern, x0: &StateVector, xf: &StateVector, start: &[f64], tol: &Tolerances) -> Option<Vec<f64>> {
    let mut d = start.to_vec();
    let k = d.len();
    for _ in 0..40 {
        let r = residual(pat, x0, xf, &d)?;
        if r.amax() <= 1e-11 {
            return Some(d);
        }
        let mut j = DMatrix::zeros(r.len(), k);
        for c in 0..k {
            let h = 1e-7 * d[c].max(1.0);
            let mut dp = d.clone();
            dp[c] += h;
            let rp = residual(pat, x0, xf, &dp)?;
            j.set_column(c, &((rp - &r) / h));
        }
        let step = min_norm_solve(&j, &(-&r), tol.rank);
        let mut lam = 1.0;
        loop {
            let trial: Vec<f64> = d.iter().zip(step.iter()).map(|(a, s)| a + lam * s).collect();
            if trial.iter().all(|v| *v > 0.0) {
                if let Some(rt) = residual(pat, x0, xf, &trial) {
                    if rt.norm() < r.norm() {
                        d = trial;
                        break;
                    }
                }
            }
            lam *= 0.5;
            if lam < 1e-4 {
                return None;
            }
        }
    }
    None
}

#[derive(Clone)]
struct Candidate {
    t_f: f64,
    durations: Vec<f64>,
    pattern: usize,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    // times equal up to roundoff: the shorter pattern wins
    if (a.t_f - b.t_f).abs() <= 1e-9 * a.t_f.abs().max(1.0) && a.durations.len() != b.durations.len() {
        return a.durations.len() < b.durations.len();
    }
    match a.t_f.total_cmp(&b.t_f) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.durations.partial_cmp(&b.durations) == Some(std::cmp::Ordering::Less),
    }
}

/// Lattice points `center_i + h * (k - half)` with positive entries.
fn lattice(center: &[f64], h: f64, per_dim: usize, offset: f64) -> Vec<Vec<f64>> {
    let k = center.len();
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let p: Vec<f64> = (0..k).map(|i| center[i] + h * (idx[i] as f64 - offset)).collect();
        if p.iter().all(|v| *v > 0.0) {
            out.push(p);
        }
        let mut c = 0;
        loop {
            if c == k {
                return out;
            }
            idx[c] += 1;
            if idx[c] < per_dim {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
    }
}

fn search_pattern(
    sys: &LinearSystem,
    pat: &Pattern,
    pid: usize,
    x0: &StateVector,
    xf: &StateVector,
    points: &[Vec<f64>],
    h: f64,
    cfg: &OracleConfig,
) -> Option<Candidate> {
    let scale = xf.norm().max(x0.norm()).max(1.0);
    // Rank grid points by time, keeping those whose terminal error is within
    // what one grid step can correct.
    let mut near: Vec<(f64, f64, &Vec<f64>)> = points
        .iter()
        .filter(|p| p.iter().sum::<f64>() <= cfg.horizon)
        .filter_map(|p| residual(pat, x0, xf, p).map(|r| (p.iter().sum::<f64>(), r.norm(), p)))
        .filter(|(_, e, _)| *e <= 4.0 * h * scale * (pat.behs.len() as f64))
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut best: Option<Candidate> = None;
    for (_, _, p) in near.iter().take(cfg.polish) {
        let Some(d) = polish(pat, x0, xf, p, &cfg.tol) else { continue };
        let cand = Candidate {
            t_f: d.iter().sum(),
            durations: d,
            pattern: pid,
        };
        if cand.t_f > cfg.horizon || !feasible(sys, pat, x0, xf, &cand.durations, &cfg.tol) {
            continue;
        }
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    best
}

fn feasible(sys: &LinearSystem, pat: &Pattern, x0: &StateVector, xf: &StateVector, d: &[f64], tol: &Tolerances) -> bool {
    let spec: Vec<(BehaviorKind, f64)> = pat.kinds.iter().cloned().zip(d.iter().copied()).collect();
    match extract_asl(sys, &spec, x0, tol) {
        Ok(tr) => check_feasible(sys, &tr, Some(xf), tol).is_ok_and(|r| r.feasible),
        Err(_) => false,
    }
}

/// Drops arcs of roundoff length left by the polish and merges equal
/// neighbours, keeping the original when the pruned sequence fails the audit.
fn prune(
    sys: &LinearSystem,
    spec: Vec<(BehaviorKind, f64)>,
    x0: &StateVector,
    xf: &StateVector,
    tol: &Tolerances,
) -> Vec<(BehaviorKind, f64)> {
    let t_f: f64 = spec.iter().map(|a| a.1).sum();
    let min_len = 1e-8 * t_f.max(1.0);
    if spec.iter().all(|a| a.1 >= min_len) {
        return spec;
    }
    let mut out: Vec<(BehaviorKind, f64)> = Vec::new();
    for (k, d) in spec.iter().filter(|a| a.1 >= min_len).cloned() {
        match out.last_mut() {
            Some((pk, pd)) if *pk == k => *pd += d,
            _ => out.push((k, d)),
        }
    }
    let ok = !out.is_empty()
        && extract_asl(sys, &out, x0, tol)
            .and_then(|tr| check_feasible(sys, &tr, Some(xf), tol))
            .is_ok_and(|r| r.feasible);
    if ok {
        out
    } else {
        spec
    }
}

/// Minimum-time feasible arc sequence from `x0` to `xf` found on a refined grid.
pub fn grid_bbs_oracle(sys: &LinearSystem, x0: &StateVector, xf: &StateVector, cfg: &OracleConfig) -> Result<OracleResult> {
    if cfg.max_arcs == 0 || cfg.grid < 2 || cfg.refine < 2 || !(cfg.horizon > 0.0) {
        return Err(Error::InvalidInput("invalid oracle grid".into()));
    }
    if x0.len() != sys.n() || xf.len() != sys.n() {
        return Err(Error::InvalidInput("boundary states have wrong dimension".into()));
    }
    let pats = patterns(sys, cfg);
    let mut h = cfg.horizon / cfg.grid as f64;
    let found: Vec<Candidate> = pats
        .par_iter()
        .enumerate()
        .filter_map(|(pid, pat)| {
            let k = pat.kinds.len();
            let pts = lattice(&vec![h; k], h, cfg.grid, 0.0);
            search_pattern(sys, pat, pid, x0, xf, &pts, h, cfg)
        })
        .collect();
    let mut best = found
        .into_iter()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .ok_or(Error::NoSolution(h))?;
    // Refine around the incumbent: every pattern, lattice centred on the incumbent
    // durations when the pattern matches, coarse lattice otherwise.
    for _ in 1..cfg.rounds {
        h /= cfg.refine as f64;
        let per_dim = 2 * cfg.refine + 1;
        let pat = &pats[best.pattern];
        let pts = lattice(&best.durations, h, per_dim, cfg.refine as f64);
        if let Some(c) = search_pattern(sys, pat, best.pattern, x0, xf, &pts, h, cfg) {
            if better(&c, &best) {
                best = c;
            }
        }
    }
    let pat = &pats[best.pattern];
    let raw: Vec<(BehaviorKind, f64)> = pat.kinds.iter().cloned().zip(best.durations.iter().copied()).collect();
    let spec = prune(sys, raw, x0, xf, &cfg.tol);
    let traj: TimedTrajectory = extract_asl(sys, &spec, x0, &cfg.tol)?;
    let rep = check_feasible(sys, &traj, Some(xf), &cfg.tol)?;
    let err = (traj.final_state()? - xf).amax();
    let mut switch_times = Vec::new();
    let mut t = 0.0;
    for (_, d) in &spec[..spec.len() - 1] {
        t += d;
        switch_times.push(t);
    }
    Ok(OracleResult {
        t_f: spec.iter().map(|a| a.1).sum(),
        switches: switch_times.len(),
        switch_times,
        arcs: spec,
        resolution: h,
        margins: rep.margins.iter().map(|m| (m.name.clone(), m.min_margin)).collect(),
        terminal_error: err,
    })
}
