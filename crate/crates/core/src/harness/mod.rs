//! Config-driven experiments: benchmarks, variance studies and budget sweeps.
//!
//! Every study writes a CSV with a fixed header. Trials run on a worker pool,
//! each with its own seed derived from the master seed and the trial index,
//! and rows are ordered by trial index, so identical configs give identical
//! bytes.

mod benchmark;
pub mod config;
mod sweep;
mod variance;

use std::path::Path;

use thiserror::Error;

pub use benchmark::{run_benchmark, BenchmarkReport, Summary, TrialRecord};
pub use config::{ExperimentConfig, Overrides, Scenario, ScenarioName, StudyKind, VarianceConfig};
pub use sweep::{run_budget_sweep, SweepReport, SweepRow};
pub use variance::{run_variance_study, VarianceReport, VarianceRow};

use crate::model::ModelError;
use crate::problems::{CarNavigation, Chain, PendulumTorque, Tiger};
use crate::solver::{Algorithm, Budget, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}

/// Builds the scenario's model as `$model` (over `f64`) and evaluates `$body`.
macro_rules! with_model {
    ($scenario:expr, $model:ident => $body:expr) => {
        match $scenario {
            $crate::harness::Scenario::Tiger(c) => {
                let $model = $crate::problems::Tiger::<f64>::new(c)?;
                $body
            }
            $crate::harness::Scenario::Car(c) => {
                let $model = $crate::problems::CarNavigation::<f64>::new(c)?;
                $body
            }
            $crate::harness::Scenario::Pendulum(c) => {
                let $model = $crate::problems::PendulumTorque::<f64>::new(c)?;
                $body
            }
            $crate::harness::Scenario::Chain(c) => {
                let $model = $crate::problems::Chain::<f64>::new(c)?;
                $body
            }
        }
    };
}
pub(crate) use with_model;

pub(crate) fn check_model(scenario: &Scenario) -> Result<(), HarnessError> {
    match scenario {
        Scenario::Tiger(c) => Tiger::<f64>::new(c).map(drop),
        Scenario::Car(c) => CarNavigation::<f64>::new(c).map(drop),
        Scenario::Pendulum(c) => PendulumTorque::<f64>::new(c).map(drop),
        Scenario::Chain(c) => Chain::<f64>::new(c).map(drop),
    }
    .map_err(Into::into)
}

/// Seed of trial `index` under master seed `master` (SplitMix64 finaliser).
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn solver_config(cfg: &ExperimentConfig, budget: Budget) -> SolverConfig<f64> {
    SolverConfig {
        exploration: cfg.exploration,
        level_exploration: cfg.level_exploration,
        budget,
        particles: cfg.particles,
        pairs_per_episode: cfg.pairs_per_episode,
    }
}

pub(crate) fn pool(threads: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))
}

pub(crate) fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(p) = path {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(p, bytes)?;
    }
    Ok(())
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Finite values as shortest round-trip decimals; NaN and infinities as missing.
pub(crate) fn fmt_finite(x: f64) -> String {
    fmt_opt(Some(x).filter(|v| v.is_finite()))
}

pub(crate) fn algorithm_label(a: Algorithm) -> String {
    a.to_string()
}
