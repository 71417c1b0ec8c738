//! The multilevel planning loop.
//!
//! Each iteration samples one episode with the coarsest model `f_0` and backs
//! its returns up into `Q_0`, then samples a correlated pair on a random level
//! `l >= 1` (chosen with probability proportional to `2^-l`) and backs the
//! return differences up into `dQ_l`. The coarse member of a pair replays the
//! fine member's initial state, action sequence and noise sequence through
//! `f_{l-1}`.
//!
//! Three independent random streams are derived from one seed: the level-0
//! stage, the correlated stage, and the simulated world (execution and belief
//! updates). Keeping the level-0 stream separate means a model whose levels
//! are all identical plans exactly like a single-level search.

use num_traits::{One, Zero};
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{sir_update_with_recovery, BeliefError, ParticleBelief, UpdateStatus};
use crate::model::{Action, ModelError, NoiseDraw, ObsKey, PomdpModel};
use crate::scalar::Scalar;
use crate::tree::{Episode, EpisodeStep, NodeId, SearchTree, TreeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Planning-loop iterations per step.
    Episodes(u64),
    /// Wall-clock milliseconds per step.
    Millis(u64),
    /// Simulation cost per step, in units of `step_cost`; deterministic
    /// stand-in for a wall-clock budget when simulation dominates run time.
    Cost(u64),
}

impl Budget {
    pub fn is_positive(&self) -> bool {
        match *self {
            Budget::Episodes(n) | Budget::Millis(n) | Budget::Cost(n) => n > 0,
        }
    }
}

impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Budget::Episodes(n) => write!(f, "{n}"),
            Budget::Millis(n) => write!(f, "{n}ms"),
            Budget::Cost(n) => write!(f, "{n}sim"),
        }
    }
}

impl std::str::FromStr for Budget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let parse = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|e| format!("bad budget {s:?}: {e}"))
        };
        if let Some(ms) = s.strip_suffix("ms") {
            Ok(Budget::Millis(parse(ms)?))
        } else if let Some(c) = s.strip_suffix("sim") {
            Ok(Budget::Cost(parse(c)?))
        } else {
            Ok(Budget::Episodes(parse(s)?))
        }
    }
}

/// Which estimator the planner runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Level-0 episodes plus correlated pairs on all finer levels.
    Mlpp,
    /// Plain Monte-Carlo tree search using only `f_level`.
    SingleLevel { level: usize },
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Mlpp => write!(f, "mlpp"),
            Algorithm::SingleLevel { level } => write!(f, "baseline@{level}"),
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "mlpp" => Ok(Algorithm::Mlpp),
            other => other
                .strip_prefix("baseline@")
                .and_then(|l| l.parse().ok())
                .map(|level| Algorithm::SingleLevel { level })
                .ok_or_else(|| {
                    format!("unknown solver {other:?} (expected mlpp or baseline@<level>)")
                }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<F> {
    /// UCB1 exploration constant `c_0` of the level-0 stage.
    pub exploration: F,
    /// Exploration constant `c_l` shared by the finer levels.
    pub level_exploration: F,
    pub budget: Budget,
    /// Particle count `N_p` of the belief filter.
    pub particles: usize,
    /// Correlated pairs sampled after each level-0 episode.
    pub pairs_per_episode: usize,
}

impl<F: Scalar> SolverConfig<F> {
    pub fn new(exploration: F, budget: Budget) -> Self {
        Self {
            exploration,
            level_exploration: exploration,
            budget,
            particles: 2000,
            pairs_per_episode: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !self.budget.is_positive() {
            return Err(SolverError::Config(
                "planning budget must be positive".into(),
            ));
        }
        if self.particles == 0 {
            return Err(SolverError::Config(
                "particle count must be positive".into(),
            ));
        }
        if !(self.exploration >= F::zero()) || !(self.level_exploration >= F::zero()) {
            return Err(SolverError::Config(
                "exploration constants must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

/// Work done during planning.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PlanStats {
    pub iterations: u64,
    /// Episodes sampled per level; each correlated pair counts once at its fine level.
    pub episodes: Vec<u64>,
    /// Calls to `f_l` per level.
    pub simulate_calls: Vec<u64>,
    /// Sum of `step_cost(l)` over all calls.
    pub cost: u64,
    pub elapsed: Duration,
}

impl PlanStats {
    pub fn new(num_levels: usize) -> Self {
        Self {
            episodes: vec![0; num_levels],
            simulate_calls: vec![0; num_levels],
            ..Default::default()
        }
    }

    pub fn accumulate(&mut self, other: &PlanStats) {
        if self.episodes.len() < other.episodes.len() {
            self.episodes.resize(other.episodes.len(), 0);
            self.simulate_calls.resize(other.simulate_calls.len(), 0);
        }
        self.iterations += other.iterations;
        for (a, b) in self.episodes.iter_mut().zip(&other.episodes) {
            *a += b;
        }
        for (a, b) in self.simulate_calls.iter_mut().zip(&other.simulate_calls) {
            *a += b;
        }
        self.cost += other.cost;
        self.elapsed += other.elapsed;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    pub action: Action,
    /// No action was visited within the budget; `action` is uniformly random.
    pub fallback: bool,
    pub stats: PlanStats,
}

/// Draws `l in 1..=max_level` with probability `2^-l / sum_j 2^-j`.
pub fn sample_level<R: Rng + ?Sized>(rng: &mut R, max_level: usize) -> usize {
    assert!(max_level >= 1, "no correlated stage without a finer level");
    let total: f64 = (1..=max_level).map(|l| 0.5f64.powi(l as i32)).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for l in 1..=max_level {
        acc += 0.5f64.powi(l as i32);
        if u < acc {
            return l;
        }
    }
    max_level
}

/// The three random streams used by one planner/trial.
pub fn rng_streams(seed: u64) -> [ChaCha8Rng; 3] {
    [0, 1, 2].map(|stream| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    })
}

type Ep<M> =
    Episode<<M as PomdpModel>::State, <M as PomdpModel>::Observation, <M as PomdpModel>::Scalar>;

/// Online planner owning the search tree rooted at the current history.
pub struct Planner<'m, M: PomdpModel> {
    model: &'m M,
    config: SolverConfig<M::Scalar>,
    algorithm: Algorithm,
    tree: SearchTree<M::Scalar>,
    rng: ChaCha8Rng,
    pair_rng: ChaCha8Rng,
    depth_limit: usize,
    stats: PlanStats,
}

impl<'m, M: PomdpModel> Planner<'m, M> {
    pub fn new(
        model: &'m M,
        config: SolverConfig<M::Scalar>,
        algorithm: Algorithm,
        seed: u64,
    ) -> Result<Self, SolverError> {
        let [rng, pair_rng, _] = rng_streams(seed);
        Self::with_rngs(model, config, algorithm, rng, pair_rng)
    }

    pub fn with_rngs(
        model: &'m M,
        config: SolverConfig<M::Scalar>,
        algorithm: Algorithm,
        rng: ChaCha8Rng,
        pair_rng: ChaCha8Rng,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        if model.num_actions() == 0 {
            return Err(SolverError::Config("model has no actions".into()));
        }
        let tree_levels = match algorithm {
            Algorithm::Mlpp => model.num_levels(),
            Algorithm::SingleLevel { level } => {
                if level >= model.num_levels() {
                    return Err(ModelError::InvalidLevel {
                        level,
                        max: model.max_level(),
                    }
                    .into());
                }
                1
            }
        };
        Ok(Self {
            model,
            tree: SearchTree::new(model.num_actions(), tree_levels),
            stats: PlanStats::new(model.num_levels()),
            config,
            algorithm,
            rng,
            pair_rng,
            depth_limit: model.max_steps(),
        })
    }

    pub fn tree(&self) -> &SearchTree<M::Scalar> {
        &self.tree
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn config(&self) -> &SolverConfig<M::Scalar> {
        &self.config
    }

    /// Caps episode length, normally at the steps left in the trial.
    pub fn set_depth_limit(&mut self, limit: usize) {
        self.depth_limit = limit.max(1);
    }

    fn simulation_level(&self) -> usize {
        match self.algorithm {
            Algorithm::Mlpp => 0,
            Algorithm::SingleLevel { level } => level,
        }
    }

    /// Runs the planning loop from the root until the budget is spent and
    /// returns `argmax_a Q(h, a)`.
    pub fn plan(
        &mut self,
        belief: &ParticleBelief<M::State, M::Scalar>,
    ) -> Result<PlanOutcome, SolverError> {
        if belief.is_empty() {
            return Err(BeliefError::Empty.into());
        }
        self.stats = PlanStats::new(self.model.num_levels());
        let start = Instant::now();
        let correlated = matches!(self.algorithm, Algorithm::Mlpp) && self.model.max_level() >= 1;
        loop {
            let done = match self.config.budget {
                Budget::Episodes(n) => self.stats.iterations >= n,
                Budget::Millis(ms) => {
                    self.stats.iterations > 0 && start.elapsed() >= Duration::from_millis(ms)
                }
                // Each iteration counts at least one unit so terminal beliefs still stop.
                Budget::Cost(c) => {
                    self.stats.iterations > 0 && self.stats.cost.max(self.stats.iterations) >= c
                }
            };
            if done {
                break;
            }
            let episode = self.sample_episode(belief, 0)?;
            self.tree.backup_episode(&episode, self.model.discount())?;
            if correlated {
                for _ in 0..self.config.pairs_per_episode {
                    self.sample_correlated_episodes(belief)?;
                }
            }
            self.stats.iterations += 1;
        }
        self.stats.elapsed = start.elapsed();
        let (action, fallback) = match self.tree.best_action(self.tree.root()) {
            Some(a) => (a, false),
            None => {
                log::warn!("no action visited within the planning budget; acting randomly");
                (
                    Action(self.rng.random_range(0..self.model.num_actions())),
                    true,
                )
            }
        };
        Ok(PlanOutcome {
            action,
            fallback,
            stats: self.stats.clone(),
        })
    }

    /// Samples one episode from the root. `level` is the statistics level:
    /// 0 for the coarse stage (simulated with the planner's base model), or
    /// the fine level of a correlated pair.
    pub fn sample_episode(
        &mut self,
        belief: &ParticleBelief<M::State, M::Scalar>,
        level: usize,
    ) -> Result<Ep<M>, SolverError> {
        let (sim_level, exploration) = if level == 0 {
            (self.simulation_level(), self.config.exploration)
        } else {
            (level, self.config.level_exploration)
        };
        let rng = if level == 0 {
            &mut self.rng
        } else {
            &mut self.pair_rng
        };
        let state = belief.sample_state(rng)?.clone();
        let episode = walk_tree(
            self.model,
            &mut self.tree,
            state,
            level,
            sim_level,
            exploration,
            self.depth_limit,
            rng,
            &mut self.stats,
        );
        self.stats.episodes[sim_level] += 1;
        Ok(episode)
    }

    /// Samples a correlated pair on a random level and backs up its return differences.
    pub fn sample_correlated_episodes(
        &mut self,
        belief: &ParticleBelief<M::State, M::Scalar>,
    ) -> Result<(Ep<M>, Ep<M>), SolverError> {
        let level = sample_level(&mut self.pair_rng, self.model.max_level());
        let fine = self.sample_episode(belief, level)?;
        let root = self.tree.root();
        let coarse = replay(
            self.model,
            &fine,
            level - 1,
            Some((&mut self.tree, root)),
            &mut self.stats,
        );
        self.tree
            .backup_difference(&fine, &coarse, level, self.model.discount())?;
        Ok((fine, coarse))
    }

    /// Moves the root to `child(root, a, o)` after executing `a` and perceiving `o`.
    pub fn advance(&mut self, action: Action, observation: &M::Observation) {
        let key = self.model.observation_key(observation);
        let root = self.tree.root();
        let child = self.tree.child(root, action, key);
        self.tree.reroot(child);
    }
}

#[allow(clippy::too_many_arguments)]
fn walk_tree<M: PomdpModel, R: Rng + ?Sized>(
    model: &M,
    tree: &mut SearchTree<M::Scalar>,
    mut state: M::State,
    select_level: usize,
    sim_level: usize,
    exploration: M::Scalar,
    depth_limit: usize,
    rng: &mut R,
    stats: &mut PlanStats,
) -> Ep<M> {
    let mut episode = Episode::empty(sim_level, state.clone(), false);
    let mut h = tree.root();
    while !model.is_terminal(&state) && episode.len() < depth_limit {
        let Some(sel) = tree.ucb1_select(h, select_level, exploration, rng) else {
            break;
        };
        let noise = NoiseDraw::sample(rng, model.noise_dim());
        let tr = model.transition(sim_level, &state, sel.action, &noise, M::Scalar::one());
        stats.simulate_calls[sim_level] += 1;
        stats.cost += model.step_cost(sim_level);
        let next_h = tree.child(h, sel.action, model.observation_key(&tr.observation));
        episode.nodes.push(h);
        episode.noise.push(noise);
        episode.steps.push(EpisodeStep {
            state,
            action: sel.action,
            observation: tr.observation,
            reward: tr.reward,
        });
        state = tr.next_state;
        h = next_h;
        if sel.unvisited {
            break;
        }
    }
    close_episode(model, &mut episode, state);
    episode
}

/// Every episode that stops in a non-terminal state gets the heuristic as its
/// tail value; terminal states get 0.
fn close_episode<M: PomdpModel>(model: &M, episode: &mut Ep<M>, state: M::State) {
    episode.terminal = model.is_terminal(&state);
    episode.tail = if episode.terminal {
        M::Scalar::zero()
    } else {
        model.heuristic(&state)
    };
    episode.final_state = state;
}

/// Replays `fine`'s initial state, actions and noise through `f_level`,
/// stopping early if the replay reaches a terminal state. When a tree is
/// given, the replay's path is attached to it (creating nodes as needed).
pub fn replay<M: PomdpModel>(
    model: &M,
    fine: &Ep<M>,
    level: usize,
    mut tree: Option<(&mut SearchTree<M::Scalar>, NodeId)>,
    stats: &mut PlanStats,
) -> Ep<M> {
    let mut state = fine.first_state().clone();
    let mut episode = Episode::empty(level, state.clone(), false);
    for (step, noise) in fine.steps.iter().zip(&fine.noise) {
        if model.is_terminal(&state) {
            break;
        }
        let tr = model.transition(level, &state, step.action, noise, M::Scalar::one());
        stats.simulate_calls[level] += 1;
        stats.cost += model.step_cost(level);
        if let Some((t, h)) = tree.as_mut() {
            let next_h = t.child(*h, step.action, model.observation_key(&tr.observation));
            episode.nodes.push(*h);
            *h = next_h;
        }
        episode.noise.push(noise.clone());
        episode.steps.push(EpisodeStep {
            state,
            action: step.action,
            observation: tr.observation,
            reward: tr.reward,
        });
        state = tr.next_state;
    }
    close_episode(model, &mut episode, state);
    episode
}

/// Episode following the frozen tree policy (`argmax_a Q`) from the root,
/// simulated at `level`; stops with a heuristic tail when it leaves the tree.
pub fn policy_episode<M: PomdpModel, R: Rng + ?Sized>(
    model: &M,
    tree: &SearchTree<M::Scalar>,
    state: M::State,
    level: usize,
    depth_limit: usize,
    rng: &mut R,
) -> Ep<M> {
    let mut state = state;
    let mut episode = Episode::empty(level, state.clone(), false);
    let mut h = Some(tree.root());
    let mut stats = PlanStats::new(model.num_levels());
    while let Some(node) = h {
        if model.is_terminal(&state) || episode.len() >= depth_limit {
            break;
        }
        let Some(action) = tree.best_action(node) else {
            break;
        };
        let noise = NoiseDraw::sample(rng, model.noise_dim());
        let tr = model.transition(level, &state, action, &noise, M::Scalar::one());
        stats.simulate_calls[level] += 1;
        h = tree.find_child(node, action, &model.observation_key(&tr.observation));
        episode.noise.push(noise);
        episode.steps.push(EpisodeStep {
            state,
            action,
            observation: tr.observation,
            reward: tr.reward,
        });
        state = tr.next_state;
    }
    close_episode(model, &mut episode, state);
    episode
}

/// How a trial ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Goal,
    Collision,
    Timeout,
    OtherTerminal,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Goal => "goal",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
            Outcome::OtherTerminal => "other-terminal",
        })
    }
}

/// Models that can say why a terminal state is terminal.
pub trait TerminalKind: PomdpModel {
    fn terminal_outcome(&self, _state: &Self::State) -> Outcome {
        Outcome::OtherTerminal
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryStep<S, O, F> {
    pub state: S,
    pub action: Action,
    pub observation: O,
    pub reward: F,
    pub fallback: bool,
    pub belief_update: Option<UpdateStatus>,
}

#[derive(Clone, Debug)]
pub struct TrialResult<S, O, F> {
    pub trajectory: Vec<TrajectoryStep<S, O, F>>,
    pub final_state: S,
    pub discounted_return: F,
    pub steps: usize,
    pub outcome: Outcome,
    pub stats: PlanStats,
}

impl<S, O, F> TrialResult<S, O, F> {
    pub fn actions(&self) -> Vec<Action> {
        self.trajectory.iter().map(|s| s.action).collect()
    }
}

/// Plans, executes on the reference model with fresh noise, filters the
/// belief and re-roots the tree until a terminal state or the step cap.
pub fn run_trial<M: TerminalKind>(
    model: &M,
    config: &SolverConfig<M::Scalar>,
    algorithm: Algorithm,
    seed: u64,
) -> Result<TrialResult<M::State, M::Observation, M::Scalar>, SolverError> {
    let [plan_rng, pair_rng, mut world] = rng_streams(seed);
    let mut planner = Planner::with_rngs(model, config.clone(), algorithm, plan_rng, pair_rng)?;
    let mut state = model.initial_state(&mut world);
    let mut belief =
        ParticleBelief::from_sampler(config.particles, || model.initial_state(&mut world))?;
    run_from(model, &mut planner, &mut belief, &mut state, &mut world)
}

/// Trial loop from an explicit true state and belief.
pub fn run_from<M: TerminalKind, R: Rng>(
    model: &M,
    planner: &mut Planner<'_, M>,
    belief: &mut ParticleBelief<M::State, M::Scalar>,
    state: &mut M::State,
    world: &mut R,
) -> Result<TrialResult<M::State, M::Observation, M::Scalar>, SolverError> {
    run_from_with(model, planner, belief, state, world, |_| {
        ControlFlow::Continue(())
    })
}

/// What a [`run_from_with`] observer sees right after each planning call.
pub struct StepView<'a, 'm, M: PomdpModel> {
    pub step: usize,
    pub planner: &'a Planner<'m, M>,
    pub belief: &'a ParticleBelief<M::State, M::Scalar>,
    pub state: &'a M::State,
    pub plan: &'a PlanOutcome,
}

/// [`run_from`] calling `observe` after every planning call, before the
/// chosen action is executed. Returning `ControlFlow::Break` ends the trial
/// there, with the planned action not executed.
pub fn run_from_with<M: TerminalKind, R: Rng>(
    model: &M,
    planner: &mut Planner<'_, M>,
    belief: &mut ParticleBelief<M::State, M::Scalar>,
    state: &mut M::State,
    world: &mut R,
    mut observe: impl FnMut(StepView<'_, '_, M>) -> ControlFlow<()>,
) -> Result<TrialResult<M::State, M::Observation, M::Scalar>, SolverError> {
    let gamma = model.discount();
    let top = model.max_level();
    let mut discount = M::Scalar::one();
    let mut total = M::Scalar::zero();
    let mut trajectory = Vec::new();
    let mut stats = PlanStats::new(model.num_levels());
    let mut outcome = Outcome::Timeout;
    if model.is_terminal(state) {
        outcome = model.terminal_outcome(state);
    }
    while !model.is_terminal(state) && trajectory.len() < model.max_steps() {
        planner.set_depth_limit(model.max_steps() - trajectory.len());
        let plan = planner.plan(belief)?;
        stats.accumulate(&plan.stats);
        let flow = observe(StepView {
            step: trajectory.len(),
            planner,
            belief,
            state,
            plan: &plan,
        });
        if flow.is_break() {
            break;
        }
        let noise = NoiseDraw::sample(world, model.noise_dim());
        let tr = model.simulate_step(top, state, plan.action, &noise)?;
        total += discount * tr.reward;
        discount *= gamma;
        let mut step = TrajectoryStep {
            state: state.clone(),
            action: plan.action,
            observation: tr.observation.clone(),
            reward: tr.reward,
            fallback: plan.fallback,
            belief_update: None,
        };
        *state = tr.next_state;
        if tr.terminal {
            outcome = model.terminal_outcome(state);
            trajectory.push(step);
            break;
        }
        let (next_belief, status) =
            sir_update_with_recovery(belief, plan.action, &tr.observation, model, world)?;
        // The episode goes on, which rules out terminal particles. If none
        // survive, the previous belief is kept rather than planning from a
        // belief with nothing to plan for.
        let alive = |s: &M::State| !model.is_terminal(s);
        *belief = match next_belief.condition(alive) {
            Some(b) => b,
            None => {
                log::warn!("every particle terminal after update; keeping previous belief");
                belief.condition(alive).unwrap_or(next_belief)
            }
        };
        step.belief_update = Some(status);
        planner.advance(plan.action, &tr.observation);
        trajectory.push(step);
    }
    Ok(TrialResult {
        steps: trajectory.len(),
        trajectory,
        final_state: state.clone(),
        discounted_return: total,
        outcome,
        stats,
    })
}

/// Key of an observation under `model`; convenience for tests and tools.
pub fn observation_key<M: PomdpModel>(model: &M, o: &M::Observation) -> ObsKey {
    model.observation_key(o)
}
