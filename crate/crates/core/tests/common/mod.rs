#![allow(dead_code)]

use aslopt_core::arcs::BehaviorKind;
use aslopt_core::asl::{extract_asl, TimedTrajectory};
use aslopt_core::linalg;
use aslopt_core::linsys::{chain_matrices, Constraint, LinearSystem};
use aslopt_core::Tolerances;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bang(sign: i8) -> BehaviorKind {
    BehaviorKind::Unconstrained { sign }
}

pub fn cruise(p: usize) -> BehaviorKind {
    BehaviorKind::Constrained { active: vec![p] }
}

/// Chain of integrators with `|x_k| <= bounds[k]`, lower before upper.
pub fn chain_box(n: usize, bounds: &[f64]) -> LinearSystem {
    let (a, b) = chain_matrices(n);
    let mut cons = Vec::new();
    for (k, &m) in bounds.iter().enumerate() {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        cons.push(Constraint { c: -e.clone(), d: -m });
        cons.push(Constraint { c: e, d: -m });
    }
    LinearSystem::new(a, b, cons, 1.0).unwrap()
}

pub fn chain_free(n: usize) -> LinearSystem {
    let (a, b) = chain_matrices(n);
    LinearSystem::new(a, b, Vec::new(), 1.0).unwrap()
}

/// Random matrix with Frobenius norm `norm`.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let s = m.norm();
    m * (norm / s)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// Random piecewise dynamics and an increasing schedule starting at 0.
pub fn random_schedule(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
) -> (Vec<(DMatrix<f64>, DVector<f64>)>, DVector<f64>, Vec<f64>) {
    let dynamics = (0..m)
        .map(|_| {
            let norm = rng.random_range(0.1..2.0);
            (random_matrix(rng, n, norm), random_vector(rng, n, 1.0))
        })
        .collect();
    let x0 = random_vector(rng, n, 1.0);
    let mut times = vec![0.0];
    for _ in 0..m {
        let d = rng.random_range(0.05..0.6);
        times.push(times.last().unwrap() + d);
    }
    (dynamics, x0, times)
}

/// Unconstrained bang-bang trajectory of the chain with alternating signs.
pub fn alternating_chain(n: usize, durations: &[f64], first: i8) -> (LinearSystem, TimedTrajectory) {
    let sys = chain_free(n);
    let mut sign = first;
    let spec: Vec<(BehaviorKind, f64)> = durations
        .iter()
        .map(|&d| {
            let k = bang(sign);
            sign = -sign;
            (k, d)
        })
        .collect();
    let traj = extract_asl(&sys, &spec, &DVector::zeros(n), &Tolerances::default()).unwrap();
    (sys, traj)
}

/// Row space equality of two matrices with the same column count.
pub fn same_row_space(a: &DMatrix<f64>, b: &DMatrix<f64>, rel: f64) -> bool {
    let ra = linalg::rank(a, rel);
    let rb = linalg::rank(b, rel);
    let stacked = DMatrix::from_fn(a.nrows() + b.nrows(), a.ncols(), |i, j| {
        if i < a.nrows() {
            a[(i, j)]
        } else {
            b[(i - a.nrows(), j)]
        }
    });
    ra == rb && linalg::rank(&stacked, rel) == ra
}

/// Greedy column basis of `jac`, scanned from the last column backwards.
pub fn column_basis(jac: &DMatrix<f64>, rel: f64) -> Vec<usize> {
    let mut basis: Vec<usize> = Vec::new();
    for j in (0..jac.ncols()).rev() {
        let mut cols = basis.clone();
        cols.push(j);
        let sub = jac.select_columns(cols.iter());
        if linalg::rank(&sub, rel) == cols.len() {
            basis.push(j);
        }
        if basis.len() == jac.nrows() {
            break;
        }
    }
    basis
}
