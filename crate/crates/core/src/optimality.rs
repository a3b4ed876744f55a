//! Keypoint Jacobians and the rank test on the ASL equality system.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::asl::{keypoint_states, EqualitySystem};
use crate::linsys::{flow, StateVector};
use crate::{linalg, Error, Result, Tolerances};

/// `blocks[i][j] = dx_(i+1)/dt_(j+1)` for keypoints `1..=M`.
pub fn keypoint_jacobian(
    dynamics: &[(DMatrix<f64>, DVector<f64>)],
    times: &[f64],
    states: &[StateVector],
) -> Result<Vec<Vec<DVector<f64>>>> {
    let m = dynamics.len();
    if times.len() != m + 1 || states.len() != m + 1 {
        return Err(Error::InvalidInput("times/states length must be M + 1".into()));
    }
    crate::asl::check_schedule(times)?;
    let n = states[0].len();
    let phis = dynamics
        .iter()
        .enumerate()
        .map(|(k, (a, b))| flow(a, b, times[k + 1] - times[k]).map(|f| f.0))
        .collect::<Result<Vec<_>>>()?;
    let mut blocks = vec![vec![DVector::zeros(n); m]; m];
    for j in 0..m {
        let (aj, bj) = &dynamics[j];
        let xj = &states[j + 1];
        blocks[j][j] = aj * xj + bj;
        if j + 1 < m {
            let (an, bn) = &dynamics[j + 1];
            let mut d = (aj - an) * xj + bj - bn;
            for i in j + 1..m {
                d = &phis[i] * d;
                blocks[i][j] = d.clone();
            }
        }
    }
    Ok(blocks)
}

/// `dH/dt`, an `M' x M` matrix.
pub fn equality_jacobian(h: &EqualitySystem, times: &[f64]) -> Result<DMatrix<f64>> {
    let xs = keypoint_states(&h.dynamics, &h.x0, times)?;
    let blocks = keypoint_jacobian(&h.dynamics, times, &xs)?;
    let m = h.m();
    let mut jac = DMatrix::zeros(h.num_rows(), m);
    for (r, row) in h.rows.iter().enumerate() {
        let i = row.keypoint - 1;
        for j in 0..=i {
            jac[(r, j)] = row.w.dot(&blocks[i][j]);
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalityVerdict {
    pub rows: usize,
    pub cols: usize,
    /// Rank of the first `M - 1` columns.
    pub rank: usize,
    /// Rank with the last column included.
    pub full_rank: usize,
    pub satisfied: bool,
    pub marginal: bool,
    pub singular_values: Vec<f64>,
    /// 1-based columns (excluding `t_M`) that can be pinned while the remaining
    /// columns keep full row rank.
    pub free_columns: Vec<usize>,
    #[serde(skip)]
    pub jacobian: DMatrix<f64>,
}

impl OptimalityVerdict {
    pub fn dof(&self) -> i64 {
        self.cols as i64 - self.rows as i64
    }
}

pub fn necessary_condition_test(h: &EqualitySystem, tol: &Tolerances) -> Result<OptimalityVerdict> {
    if h.num_rows() == 0 || h.m() == 0 {
        return Err(Error::Degenerate("empty equality system".into()));
    }
    let full = h.jacobian(&h.times)?;
    verdict_from_jacobian(&full, tol)
}

pub fn verdict_from_jacobian(full: &DMatrix<f64>, tol: &Tolerances) -> Result<OptimalityVerdict> {
    let rows = full.nrows();
    let m = full.ncols();
    if rows == 0 || m == 0 {
        return Err(Error::Degenerate("empty equality system".into()));
    }
    let head = full.columns(0, m - 1).into_owned();
    let sv = linalg::singular_values(&head);
    let rank = linalg::numerical_rank(&sv, tol.rank);
    let full_rank = linalg::rank(full, tol.rank);
    let marginal = sv.first().is_some_and(|&smax| {
        smax > 0.0
            && sv
                .iter()
                .any(|&s| s / smax >= tol.rank / 10.0 && s / smax <= tol.rank * 10.0)
    });
    let mut free_columns = Vec::new();
    if full_rank == rows {
        for j in 0..m - 1 {
            let mut rest = full.clone().remove_column(j);
            if rest.ncols() == 0 {
                rest = DMatrix::zeros(rows, 0);
            }
            if linalg::rank(&rest, tol.rank) == rows {
                free_columns.push(j + 1);
            }
        }
    }
    Ok(OptimalityVerdict {
        rows,
        cols: m,
        rank,
        full_rank,
        satisfied: rank < rows,
        marginal,
        singular_values: sv,
        free_columns,
        jacobian: head,
    })
}
