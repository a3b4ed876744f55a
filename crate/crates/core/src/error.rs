use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("constraint {index}: c^T A^(r-1) b vanishes for every r <= n (system not controllable along it)")]
    Uncontrollable { index: usize },

    #[error("inconsistent active set: constraint {p} conflicts with constraint {q}")]
    Inconsistent { p: usize, q: usize },

    #[error("infeasible trajectory: {constraint} violated by {excess:.3e} at t = {time}")]
    Infeasible {
        constraint: String,
        time: f64,
        excess: f64,
    },

    #[error("{constraint} lies identically on its boundary at t = {time}; the arc must be reclassified")]
    OnBoundary { constraint: String, time: f64 },

    #[error("invalid junction {junction}: {reason}")]
    InvalidJunction { junction: usize, reason: String },

    #[error("stale trajectory: residual {residual:.3e} in row '{row}'")]
    Stale { row: String, residual: f64 },

    #[error("projection failed: {0}")]
    Projection(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("restructure failed: {0}")]
    Restructure(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("wrong regime: {0}")]
    Regime(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no solution at grid resolution {0}")]
    NoSolution(f64),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
