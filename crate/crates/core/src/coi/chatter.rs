//! Junction-time recursion for chattering induced by `x2 <= x_m2` and its
//! fourth-order rate analysis.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::{Error, Result};

/// `(b + 3a)^m - 3(3b + a)^m + 3(c + 3b)^m - (3c + b)^m`.
pub fn f_m(a: f64, b: f64, c: f64, m: i32) -> f64 {
    (b + 3.0 * a).powi(m) - 3.0 * (3.0 * b + a).powi(m) + 3.0 * (c + 3.0 * b).powi(m)
        - (3.0 * c + b).powi(m)
}

/// Determinant of `(f_(i+1)(tau_(k-j-1), tau_(k-j), tau_(k-j+1)))_(i,j in [n-2])`
/// with `window = (tau_(k-n+1), ..., tau_(k-1))` and `tau_k = next`.
pub fn chattering_det(n: usize, window: &[f64], next: f64) -> f64 {
    let m = n - 2;
    let mut taus = window.to_vec();
    taus.push(next);
    let k = taus.len() - 1;
    let mat = DMatrix::from_fn(m, m, |i, j| {
        let j = j + 1;
        f_m(taus[k - j - 1], taus[k - j], taus[k - j + 1], i as i32 + 2)
    });
    mat.determinant()
}

/// Hadamard-style magnitude of the determinant, used for relative zero tests.
fn det_scale(n: usize, window: &[f64]) -> f64 {
    let t = window[0].abs().max(1e-300);
    (2..n).map(|m| (8.0 * t).powi(m as i32)).product::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ChatterStep {
    /// Next junction distance `tau_k`; `multiple` is set when several admissible
    /// roots existed and the smallest was taken.
    Next { tau: f64, multiple: bool },
    /// No admissible root: the window cannot continue a chattering sequence.
    Terminated,
    /// The determinant vanishes for every candidate `tau_k`.
    Degenerate,
}

fn check_window(n: usize, window: &[f64]) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidInput("the recursion needs n >= 3".into()));
    }
    if window.len() != n - 1 {
        return Err(Error::InvalidInput(format!("window must hold n - 1 = {} values", n - 1)));
    }
    if window.iter().any(|t| !(t.is_finite() && *t > 0.0)) || window.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("window must be strictly decreasing and positive".into()));
    }
    Ok(())
}

/// Closed-form fourth-order step: the root of
/// `(z1 - z2) z^2 + (z1^2 + z1 z2 - z2^2) z - z2 (z1^2 + z1 z2 - z2^2) = 0`
/// in `(0, z2)`, with `z1` the older and `z2` the newer gap.
pub fn n4_gap_step(z1: f64, z2: f64) -> Option<f64> {
    if !(z1 > 0.0 && z2 > 0.0) {
        return None;
    }
    let a = z1 - z2;
    let q = z1 * z1 + z1 * z2 - z2 * z2;
    let c = -z2 * q;
    let roots: Vec<f64> = if a.abs() <= 1e-15 * z1 {
        vec![-c / q]
    } else {
        let disc = q * q - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        // stable pair: one root from the quadratic formula, the other from c / a
        let s = disc.sqrt();
        let t = -0.5 * (q + q.signum() * s);
        if t == 0.0 {
            vec![0.0]
        } else {
            vec![t / a, c / t]
        }
    };
    let z = roots
        .into_iter()
        .filter(|&z| z > 0.0 && z < z2)
        .fold(f64::NAN, f64::min);
    let strict = z.is_finite() && (z2 - z) > 1e-12 * z2;
    strict.then_some(z)
}

/// Next junction distance `tau_k` from the last `n - 1` values.
pub fn chattering_step(n: usize, window: &[f64]) -> Result<ChatterStep> {
    check_window(n, window)?;
    let last = window[n - 2];
    let prev_gap = window[n - 3] - last;
    if n == 4 {
        let z1 = window[0] - window[1];
        return Ok(match n4_gap_step(z1, prev_gap) {
            Some(z) if last - z > 0.0 => ChatterStep::Next {
                tau: last - z,
                multiple: false,
            },
            _ => ChatterStep::Terminated,
        });
    }
    let grid = 256;
    let scale = det_scale(n, window);
    let f = |t: f64| chattering_det(n, window, t);
    let pts: Vec<(f64, f64)> = (0..=grid)
        .map(|i| {
            let t = last * i as f64 / grid as f64;
            (t, f(t))
        })
        .collect();
    if pts.iter().all(|&(_, v)| v.abs() <= 1e-12 * scale) {
        return Ok(ChatterStep::Degenerate);
    }
    let mut roots = Vec::new();
    for w in pts.windows(2) {
        let ((a, fa), (b, fb)) = (w[0], w[1]);
        if fa == 0.0 && a > 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            roots.push(bisect(&f, a, b, fa));
        }
    }
    // a root repeating the previous gap continues an arithmetic progression,
    // which never contracts; it is not an admissible strict step. The floor
    // covers bisection error, which scales with tau rather than the gap.
    let same_gap = (1e-9 * prev_gap).max(1e-10 * last);
    roots.retain(|&t| t > 0.0 && t < last && ((last - t) - prev_gap).abs() > same_gap);
    Ok(match roots.first() {
        Some(&tau) => ChatterStep::Next {
            tau,
            multiple: roots.len() > 1,
        },
        None => ChatterStep::Terminated,
    })
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a) <= 1e-13 * b.abs().max(f64::MIN_POSITIVE) {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Smaller root of `r'^2 - (3 + 1/(r(1-r))) r' + 1 = 0`, which lies in `(0, r)`.
pub fn n4_r_recursion(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("rate {r} outside (0, 1)")));
    }
    let b = 3.0 + 1.0 / (r * (1.0 - r));
    // roots multiply to 1, so the small one is 2 / (b + sqrt(b^2 - 4))
    Ok(2.0 / (b + (b * b - 4.0).sqrt()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatterReport {
    pub n: usize,
    /// Recursion steps that produced an admissible junction distance.
    pub steps: usize,
    /// Step at which the recursion stopped, if it did.
    pub terminated_at: Option<usize>,
    pub degenerate: bool,
    /// Strict decrease of the junction distances (and of the rates for n = 4)
    /// at every computed step.
    pub monotone: bool,
    pub taus: Vec<f64>,
    /// Fourth order only: gaps `z_i`, rates `r_i` (first entries only, the full
    /// series is summarized below).
    pub z_head: Vec<f64>,
    pub r_head: Vec<f64>,
    /// `i r_i / (1 - r_i)` at the last rate step.
    pub tail_statistic: Option<f64>,
    /// `(N, sum_{i <= N} z_i)` at powers of ten.
    pub partial_sums: Vec<(usize, f64)>,
    /// `S(N) / S(N / 100)` at the final `N`.
    pub divergence_ratio: Option<f64>,
}

const HEAD: usize = 64;

/// Iterates the recursion from a window of `n - 1` junction distances.
/// For `n = 4` the gap rates are additionally iterated `iterations` times
/// through the closed-form rate recursion.
pub fn chattering_series_analysis(n: usize, window: &[f64], iterations: usize) -> Result<ChatterReport> {
    check_window(n, window)?;
    let mut taus = window.to_vec();
    let mut monotone = true;
    let mut terminated_at = None;
    let mut degenerate = false;
    let mut steps = 0;
    let tau_limit = if n == 4 { iterations.min(10_000) } else { iterations };
    for k in 1..=tau_limit {
        let w = &taus[taus.len() - (n - 1)..];
        match chattering_step(n, w)? {
            ChatterStep::Next { tau, .. } => {
                if !(tau < *taus.last().unwrap() && tau > 0.0) {
                    monotone = false;
                }
                taus.push(tau);
                steps += 1;
            }
            ChatterStep::Terminated => {
                terminated_at = Some(k);
                break;
            }
            ChatterStep::Degenerate => {
                degenerate = true;
                terminated_at = Some(k);
                break;
            }
        }
    }
    let mut report = ChatterReport {
        n,
        steps,
        terminated_at,
        degenerate,
        monotone,
        taus,
        z_head: Vec::new(),
        r_head: Vec::new(),
        tail_statistic: None,
        partial_sums: Vec::new(),
        divergence_ratio: None,
    };
    if n == 4 {
        let z1 = window[0] - window[1];
        let z2 = window[1] - window[2];
        rate_series(&mut report, z1, z2, iterations)?;
    }
    Ok(report)
}

fn rate_series(report: &mut ChatterReport, z1: f64, z2: f64, iterations: usize) -> Result<()> {
    let mut r = 1.0 - z2 / z1;
    if !(r > 0.0 && r < 1.0) {
        report.monotone = false;
        return Ok(());
    }
    let mut z = z1;
    let mut sum = 0.0;
    let mut sums = Vec::new();
    let mut next_mark = 1usize;
    let mut tail = None;
    for i in 1..=iterations {
        sum += z;
        if i == next_mark {
            sums.push((i, sum));
            next_mark *= 10;
        }
        if report.z_head.len() < HEAD {
            report.z_head.push(z);
            report.r_head.push(r);
        }
        tail = Some(i as f64 * r / (1.0 - r));
        let rn = n4_r_recursion(r)?;
        let zn = z * (1.0 - r);
        if !(rn > 0.0 && rn < r && zn > 0.0 && zn < z) {
            report.monotone = false;
        }
        r = rn;
        z = zn;
    }
    if sums.last().map(|s| s.0) != Some(iterations) && iterations > 0 {
        sums.push((iterations, sum));
    }
    if iterations >= 100 {
        let target = iterations / 100;
        let mut s = 0.0;
        let mut zz = z1;
        let mut rr = 1.0 - z2 / z1;
        for _ in 0..target {
            s += zz;
            zz *= 1.0 - rr;
            rr = n4_r_recursion(rr)?;
        }
        report.divergence_ratio = Some(sum / s);
    }
    report.tail_statistic = tail;
    report.partial_sums = sums;
    Ok(())
}

/// `k,tau_k,z_k,r_k`; missing values are left empty.
pub fn write_recursion_csv<W: Write>(report: &ChatterReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "tau_k", "z_k", "r_k"])?;
    let rows = report.taus.len().max(report.z_head.len() + 1);
    for k in 0..rows {
        let tau = report.taus.get(k).map(|v| format!("{v:.16e}")).unwrap_or_default();
        let (z, r) = if k >= 1 {
            (
                report.z_head.get(k - 1).map(|v| format!("{v:.16e}")).unwrap_or_default(),
                report.r_head.get(k - 1).map(|v| format!("{v:.16e}")).unwrap_or_default(),
            )
        } else {
            (String::new(), String::new())
        };
        w.write_record([k.to_string(), tau, z, r])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_values() {
        assert!(f_m(0.7, 0.7, 0.7, 3).abs() < 1e-12);
        assert!(f_m(1.3, -0.2, 4.0, 1).abs() < 1e-12);
        assert!((f_m(1.0, 0.5, 0.25, 2) - 1.125).abs() < 1e-12);
        // second order factorizes as 6 (a - c)(a + c - 2b)
        let (a, b, c) = (2.0, 1.3, 0.4);
        assert!((f_m(a, b, c, 2) - 6.0 * (a - c) * (a + c - 2.0 * b)).abs() < 1e-12);
    }

    #[test]
    fn third_order_terminates() {
        assert_eq!(chattering_step(3, &[2.0, 1.5]).unwrap(), ChatterStep::Terminated);
        assert_eq!(chattering_step(3, &[2.0, 0.5]).unwrap(), ChatterStep::Terminated);
    }

    #[test]
    fn fourth_order_closed_form_matches_determinant() {
        let z = n4_gap_step(1.0, 0.5).unwrap();
        assert!((z - (-1.25 + 2.8125f64.sqrt())).abs() < 1e-14);
        let w = [3.0, 2.0, 1.5];
        assert!(chattering_det(4, &w, 1.5 - z).abs() < 1e-9);
        assert_eq!(n4_gap_step(0.5, 0.5), None);
    }

    #[test]
    fn rate_recursion() {
        assert!((n4_r_recursion(0.5).unwrap() - (7.0 - 45f64.sqrt()) / 2.0).abs() < 1e-14);
        // the remainder after r - 4r^2 scales like r^3
        for r in [1e-3, 1e-4] {
            let rem = n4_r_recursion(r).unwrap() - (r - 4.0 * r * r);
            assert!(rem.abs() < 20.0 * r * r * r);
        }
        assert!(n4_r_recursion(1.0).is_err());
    }

    #[test]
    fn window_validation() {
        assert!(matches!(chattering_step(4, &[1.0, 2.0, 0.5]), Err(Error::Domain(_))));
        assert!(chattering_step(4, &[2.0, 1.0]).is_err());
    }
}
