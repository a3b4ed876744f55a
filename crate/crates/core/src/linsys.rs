//! Single-input linear plants `x' = Ax + bu` with affine state constraints,
//! exact propagation and constraint orders.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{linalg, Error, Result};

pub type StateVector = DVector<f64>;

/// One state constraint `c^T x + d <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub c: DVector<f64>,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemJson", into = "SystemJson")]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub constraints: Vec<Constraint>,
    pub u_max: f64,
}

#[derive(Serialize, Deserialize)]
struct ConstraintJson {
    c: Vec<f64>,
    d: f64,
}

#[derive(Serialize, Deserialize)]
struct SystemJson {
    /// Optional; checked against `A` when given.
    #[serde(default)]
    n: Option<usize>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(default)]
    constraints: Vec<ConstraintJson>,
    u_max: f64,
}

impl TryFrom<SystemJson> for LinearSystem {
    type Error = Error;

    fn try_from(j: SystemJson) -> Result<Self> {
        let n = j.n.unwrap_or(j.a.len());
        if j.a.len() != n || j.a.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!("A must be {n}x{n}")));
        }
        let a = DMatrix::from_fn(n, n, |i, k| j.a[i][k]);
        let cons = j
            .constraints
            .into_iter()
            .map(|c| Constraint {
                c: DVector::from_vec(c.c),
                d: c.d,
            })
            .collect();
        LinearSystem::new(a, DVector::from_vec(j.b), cons, j.u_max)
    }
}

impl From<LinearSystem> for SystemJson {
    fn from(s: LinearSystem) -> Self {
        SystemJson {
            n: Some(s.n()),
            a: s.a.row_iter().map(|r| r.iter().copied().collect()).collect(),
            b: s.b.iter().copied().collect(),
            constraints: s
                .constraints
                .into_iter()
                .map(|c| ConstraintJson {
                    c: c.c.iter().copied().collect(),
                    d: c.d,
                })
                .collect(),
            u_max: s.u_max,
        }
    }
}

/// Order, gain and pivot of one state constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintOrderInfo {
    pub index: usize,
    pub order: usize,
    pub gain: DVector<f64>,
    pub pivot: f64,
}

impl LinearSystem {
    /// Validates shapes, finiteness, nonzero constraint rows and controllability.
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        constraints: Vec<Constraint>,
        u_max: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.len() != n {
            return Err(Error::InvalidInput("inconsistent dimensions of A and b".into()));
        }
        if !(u_max.is_finite() && u_max > 0.0) {
            return Err(Error::InvalidInput("u_max must be positive".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in A or b".into()));
        }
        for (p, c) in constraints.iter().enumerate() {
            if c.c.len() != n || !c.d.is_finite() || c.c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("constraint {p} malformed")));
            }
            if c.c.norm() == 0.0 {
                return Err(Error::InvalidInput(format!("constraint {p} has c = 0")));
            }
        }
        let sys = LinearSystem {
            a,
            b,
            constraints,
            u_max,
        };
        if !sys.is_controllable(1e-10) {
            return Err(Error::InvalidInput("(A, b) is not controllable".into()));
        }
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut k = DMatrix::zeros(n, n);
        let mut v = self.b.clone();
        for j in 0..n {
            k.set_column(j, &v);
            v = &self.a * v;
        }
        k
    }

    pub fn is_controllable(&self, rel: f64) -> bool {
        linalg::rank(&self.controllability_matrix(), rel) == self.n()
    }

    /// Smallest r with `c_p^T A^(r-1) b` above the scale-aware pivot threshold.
    pub fn constraint_order(&self, p: usize, eps_piv: f64) -> Result<ConstraintOrderInfo> {
        let con = self
            .constraints
            .get(p)
            .ok_or_else(|| Error::InvalidInput(format!("no constraint {p}")))?;
        let (order, pivot, row) = order_of(&con.c, &self.a, &self.b, eps_piv)
            .ok_or(Error::Uncontrollable { index: p })?;
        Ok(ConstraintOrderInfo {
            index: p,
            order,
            gain: -row / pivot,
            pivot,
        })
    }
}

/// Returns (r, c^T A^(r-1) b, (c^T A^r)^T) for the first non-vanishing pivot.
pub fn order_of(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    eps_piv: f64,
) -> Option<(usize, f64, DVector<f64>)> {
    let n = a.nrows();
    let anorm = a.norm();
    let mut row = c.clone(); // (c^T A^(r-1))^T
    for r in 1..=n {
        let piv = row.dot(b);
        let scale = c.norm() * anorm.powi(r as i32 - 1) * b.norm();
        if piv.abs() > eps_piv * scale {
            return Some((r, piv, a.transpose() * &row));
        }
        row = a.transpose() * row;
    }
    None
}

/// `e^M`; nilpotent matrices use the finite Taylor sum.
pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    let n = m.nrows();
    if let Some(e) = nilpotent_exp(m, n) {
        return Ok(e);
    }
    Ok(m.exp())
}

fn nilpotent_exp(m: &DMatrix<f64>, n: usize) -> Option<DMatrix<f64>> {
    let norm = m.norm();
    if norm == 0.0 {
        return Some(DMatrix::identity(n, n));
    }
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=n {
        term = &term * m / k as f64;
        if k < n {
            sum += &term;
        }
    }
    // term = M^n / n!
    if term.norm() <= 1e-15 * norm.powi(n as i32) {
        Some(sum)
    } else {
        None
    }
}

/// Flow map and forced response of `x' = Ax + b` over `dt`:
/// returns `(e^{A dt}, int_0^dt e^{A s} ds b)`.
pub fn flow(a: &DMatrix<f64>, b: &DVector<f64>, dt: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("negative or non-finite duration {dt}")));
    }
    let n = a.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, 1)).copy_from(&(b * dt));
    let e = matrix_exponential(&aug)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, 1)).column(0).into_owned(),
    ))
}

pub fn propagate(
    a_hat: &DMatrix<f64>,
    b_hat: &DVector<f64>,
    x0: &StateVector,
    dt: f64,
) -> Result<StateVector> {
    if dt == 0.0 {
        return Ok(x0.clone());
    }
    let (phi, gamma) = flow(a_hat, b_hat, dt)?;
    Ok(phi * x0 + gamma)
}

/// `(t^k / k!)` for `k = 1..=m`.
pub fn phi_vector(t: f64, m: usize) -> DVector<f64> {
    let mut v = DVector::zeros(m);
    let mut term = 1.0;
    for k in 1..=m {
        term *= t / k as f64;
        v[k - 1] = term;
    }
    v
}

/// Chain of integrators `x1' = u, xk' = x(k-1)`.
pub fn chain_matrices(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k, k - 1)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[0] = 1.0;
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq21() -> LinearSystem {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
        );
        let b = DVector::from_vec(vec![0.0, 0.0, 2.0, -1.0]);
        let cons = vec![
            Constraint {
                c: DVector::from_vec(vec![-1.0, 0.0, 0.0, 0.0]),
                d: -0.7,
            },
            Constraint {
                c: DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]),
                d: -0.5,
            },
        ];
        LinearSystem::new(a, b, cons, 1.0).unwrap()
    }

    #[test]
    fn order_three_constraint() {
        let s = eq21();
        let info = s.constraint_order(0, 1e-10).unwrap();
        assert_eq!(info.order, 3);
    }

    #[test]
    fn order_one_constraint_gain() {
        let s = eq21();
        let info = s.constraint_order(1, 1e-10).unwrap();
        assert_eq!(info.order, 1);
        assert_eq!(info.pivot, 1.0);
        assert_eq!(info.gain.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn chain_exponential_is_exact() {
        let (a, _) = chain_matrices(3);
        let e = matrix_exponential(&a).unwrap();
        let fact = [1.0, 1.0, 2.0];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i >= j { 1.0 / fact[i - j] } else { 0.0 };
                assert!((e[(i, j)] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn diagonal_exponential() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        let e = matrix_exponential(&m).unwrap();
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((e[(1, 1)] - 2.0f64.exp()).abs() < 1e-12);
        assert!(e[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn double_integrator_step() {
        let (a, b) = chain_matrices(2);
        let x = propagate(&a, &b, &DVector::zeros(2), 1.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_dynamics_and_zero_time() {
        let a = DMatrix::zeros(2, 2);
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let x0 = DVector::from_vec(vec![0.3, 0.1]);
        let x = propagate(&a, &b, &x0, 0.5).unwrap();
        assert!((x - (&x0 + &b * 0.5)).norm() < 1e-15);
        assert_eq!(propagate(&a, &b, &x0, 0.0).unwrap(), x0);
        assert!(propagate(&a, &b, &x0, -1.0).is_err());
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_vector(0.0, 3).as_slice(), &[0.0, 0.0, 0.0]);
        let v = phi_vector(1.0, 3);
        assert!((v[0] - 1.0).abs() < 1e-16 && (v[1] - 0.5).abs() < 1e-16 && (v[2] - 1.0 / 6.0).abs() < 1e-16);
        assert_eq!(phi_vector(2.0, 2).as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn json_round_trip() {
        let s = eq21();
        let txt = serde_json::to_string(&s).unwrap();
        let back: LinearSystem = serde_json::from_str(&txt).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rejects_uncontrollable() {
        let a = DMatrix::zeros(2, 2);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert!(LinearSystem::new(a, b, vec![], 1.0).is_err());
    }
}
