//! Single-level Monte-Carlo tree search baseline.
//!
//! Runs the same tree, selection and backup code as the multilevel planner,
//! but samples every episode with one fixed approximation level `l*` and keeps
//! only level-0 statistics, so `Q(h, a)` is the plain mean return.

use crate::model::PomdpModel;
use crate::scalar::Scalar;
use crate::solver::{
    run_trial, Algorithm, Budget, Planner, SolverConfig, SolverError, TerminalKind, TrialResult,
};

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig<F> {
    /// Planning level `l*`.
    pub level: usize,
    pub exploration: F,
    pub budget: Budget,
    pub particles: usize,
}

impl<F: Scalar> BaselineConfig<F> {
    pub fn new(level: usize, exploration: F, budget: Budget) -> Self {
        Self {
            level,
            exploration,
            budget,
            particles: 2000,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        Algorithm::SingleLevel { level: self.level }
    }

    pub fn solver_config(&self) -> SolverConfig<F> {
        SolverConfig {
            exploration: self.exploration,
            level_exploration: self.exploration,
            budget: self.budget,
            particles: self.particles,
            pairs_per_episode: 0,
        }
    }
}

pub fn baseline_planner<'m, M: PomdpModel>(
    model: &'m M,
    cfg: &BaselineConfig<M::Scalar>,
    seed: u64,
) -> Result<Planner<'m, M>, SolverError> {
    Planner::new(model, cfg.solver_config(), cfg.algorithm(), seed)
}

pub fn run_baseline_trial<M: TerminalKind>(
    model: &M,
    cfg: &BaselineConfig<M::Scalar>,
    seed: u64,
) -> Result<TrialResult<M::State, M::Observation, M::Scalar>, SolverError> {
    run_trial(model, &cfg.solver_config(), cfg.algorithm(), seed)
}
