//! Augmented switching laws for bang-bang-singular trajectories of single-input
//! linear systems, with a state-only rank test for time optimality and an
//! ASL-preserving terminal-time descent.

pub mod arcs;
pub mod asl;
pub mod coi;
pub mod experiments;
mod config;
mod error;
pub mod linalg;
pub mod linsys;
pub mod optimality;
pub mod optimizer;
pub mod oracle;

pub use config::Tolerances;
pub use error::{Error, Result};
