use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use aslopt_core::optimizer::OptimizerConfig;
use aslopt_core::oracle::OracleConfig;
use aslopt_core::Tolerances;
use serde::{Deserialize, Serialize};

use crate::Cli;

/// Everything that affects a run. Written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub tolerances: Tolerances,
    /// `optimizer.tol` is overwritten by `tolerances`.
    pub optimizer: OptimizerConfig,
    /// `oracle.tol` is overwritten by `tolerances`.
    pub oracle: OracleConfig,
    /// Dense samples per keypoint interval in trajectory CSVs.
    pub samples_per_interval: usize,
    /// Iterations of the chattering rate recursion in `repro chatter4`.
    pub chatter_iterations: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tolerances: Tolerances::default(),
            optimizer: OptimizerConfig::default(),
            oracle: OracleConfig::default(),
            samples_per_interval: 64,
            chatter_iterations: 1_000_000,
            out: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn resolve(cli: &Cli) -> anyhow::Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = cli.tol_rank {
            cfg.tolerances.rank = v;
        }
        if let Some(v) = cli.tol_feas {
            cfg.tolerances.feas = v;
        }
        if let Some(v) = cli.max_iter {
            cfg.optimizer.max_iter = v;
        }
        if let Some(v) = cli.grid_density {
            cfg.oracle.grid = v;
        }
        if let Some(p) = &cli.out {
            cfg.out = p.clone();
        }
        cfg.optimizer.tol = cfg.tolerances;
        cfg.oracle.tol = cfg.tolerances;
        cfg.tolerances.validate()?;
        cfg.optimizer.validate()?;
        if cfg.samples_per_interval == 0 {
            bail!("samples_per_interval must be positive");
        }
        Ok(cfg)
    }
}
