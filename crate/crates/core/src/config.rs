use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative pivot threshold for constraint orders.
    pub piv: f64,
    /// Relative singular-value threshold for numerical rank.
    pub rank: f64,
    /// Feasibility slack on normalized margins.
    pub feas: f64,
    /// Equality residual bound for H(t).
    pub eq: f64,
    /// Relative threshold for dropping dependent rows.
    pub row: f64,
    /// Relative least-squares residual accepted as consistent.
    pub consistency: f64,
    /// Normalized margin below which a boundary counts as touched.
    pub touch: f64,
    /// Samples per arc for touch detection and audits.
    pub samples: usize,
    /// Bisection tolerance in time.
    pub time: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            piv: 1e-10,
            rank: 1e-9,
            feas: 1e-8,
            eq: 1e-9,
            row: 1e-10,
            consistency: 1e-8,
            touch: 1e-7,
            samples: 512,
            time: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.piv,
            self.rank,
            self.feas,
            self.eq,
            self.row,
            self.consistency,
            self.touch,
            self.time,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.samples < 4 {
            return Err(crate::Error::InvalidInput(
                "tolerances must be positive and samples >= 4".into(),
            ));
        }
        Ok(())
    }
}
