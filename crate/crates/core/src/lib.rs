//! Online POMDP planning with multilevel Monte-Carlo tree search.
//!
//! Models expose a hierarchy of deterministic simulators `f_0, ..., f_L` of
//! increasing accuracy. The planner grows a history tree with cheap level-0
//! episodes and corrects their value estimates with return differences of
//! correlated episode pairs on adjacent levels.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

// Negated comparisons are deliberate: they reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod baseline;
pub mod belief;
pub mod harness;
pub mod model;
pub mod problems;
pub mod scalar;
pub mod solver;
pub mod stats;
pub mod tree;

pub use baseline::{baseline_planner, run_baseline_trial, BaselineConfig};
pub use belief::{sir_update, sir_update_with_recovery, BeliefError, ParticleBelief, UpdateStatus};
pub use model::{
    check_support, Action, DiscreteModel, LevelSchedule, ModelError, NoiseDraw, ObsKey, PomdpModel,
    Transition,
};
pub use scalar::Scalar;
pub use solver::{
    run_trial, sample_level, Algorithm, Budget, Outcome, PlanOutcome, PlanStats, Planner,
    SolverConfig, SolverError, TerminalKind, TrialResult,
};
pub use stats::RunningStats;
pub use tree::{Episode, NodeId, SearchTree, TreeDump, TreeError};

pub type Tiger64 = problems::Tiger<f64>;
pub type Tiger32 = problems::Tiger<f32>;
pub type Chain64 = problems::Chain<f64>;
pub type CarNavigation64 = problems::CarNavigation<f64>;
pub type CarNavigation32 = problems::CarNavigation<f32>;
pub type Pendulum64 = problems::PendulumTorque<f64>;
pub type Pendulum32 = problems::PendulumTorque<f32>;
pub type LevelSchedule64 = LevelSchedule<f64>;
pub type RunningStats64 = RunningStats<f64>;
pub type SearchTree64 = SearchTree<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
