//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Singular values in descending order (empty matrix gives an empty list).
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values at or above `rel * sigma_max`.
pub fn numerical_rank(sv: &[f64], rel: f64) -> usize {
    match sv.first() {
        Some(&smax) if smax > 0.0 => sv.iter().filter(|&&s| s >= rel * smax).count(),
        _ => 0,
    }
}

pub fn rank(m: &DMatrix<f64>, rel: f64) -> usize {
    numerical_rank(&singular_values(m), rel)
}

/// Greedy row selection: walks `rows` in order and keeps those whose component
/// orthogonal to the already kept rows (and to `basis`) exceeds `rel` times the
/// row norm. Returns indices of kept rows.
pub fn independent_rows(basis: &[DVector<f64>], rows: &[DVector<f64>], rel: f64) -> Vec<usize> {
    let mut q: Vec<DVector<f64>> = Vec::new();
    for v in basis {
        push_orthonormal(&mut q, v, rel);
    }
    let mut kept = Vec::new();
    for (i, v) in rows.iter().enumerate() {
        if push_orthonormal(&mut q, v, rel) {
            kept.push(i);
        }
    }
    kept
}

fn push_orthonormal(q: &mut Vec<DVector<f64>>, v: &DVector<f64>, rel: f64) -> bool {
    let norm = v.norm();
    if norm == 0.0 {
        return false;
    }
    let mut w = v.clone();
    // two passes of Gram-Schmidt
    for _ in 0..2 {
        for e in q.iter() {
            let c = e.dot(&w);
            w.axpy(-c, e, 1.0);
        }
    }
    let r = w.norm();
    if r > rel.max(1e-13) * norm && r > 1e-12 * norm {
        q.push(w / r);
        true
    } else {
        false
    }
}

/// Minimum-norm least-squares solution of `m x = rhs`.
pub fn min_norm_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, rel: f64) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(m.ncols());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = rel * smax;
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut x = DVector::zeros(m.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > eps && s > 0.0 {
            let coef = u.column(k).dot(rhs) / s;
            x += vt.row(k).transpose() * coef;
        }
    }
    x
}

/// Orthonormal basis of the null space of `m` (columns).
pub fn null_space(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // pad to at least n rows so the full V is returned
    let mut padded = DMatrix::zeros(m.nrows().max(n), n);
    padded.rows_mut(0, m.nrows()).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..n)
        .filter(|&k| svd.singular_values[k] < rel * smax || smax == 0.0)
        .collect();
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, &k) in cols.iter().enumerate() {
        out.set_column(j, &vt.row(k).transpose());
    }
    out
}

pub fn pow(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut r = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        r = &r * m;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        assert_eq!(rank(&m, 1e-9), 1);
    }

    #[test]
    fn independent_rows_drops_duplicates() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 0.0]);
        let c = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(independent_rows(&[], &[a.clone(), b, c], 1e-10), vec![0, 2]);
        assert_eq!(independent_rows(&[a], &[DVector::from_vec(vec![3.0, 0.0])], 1e-10), Vec::<usize>::new());
    }

    #[test]
    fn min_norm_solution() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = min_norm_solve(&m, &DVector::from_vec(vec![2.0]), 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn null_space_dimension() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).norm() < 1e-14);
    }
}
