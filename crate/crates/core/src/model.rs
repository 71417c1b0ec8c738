//! POMDP model abstraction with a hierarchy of deterministic simulative
//! transition models `f_0, ..., f_L`, where `f_L` is the reference model.
//!
//! All randomness a transition consumes is passed in explicitly as a
//! [`NoiseDraw`]: a fixed-length vector of uniforms. Feeding the same draw to
//! two levels yields a coupled pair of transitions, which is what the
//! multilevel estimator relies on.

use num_traits::{One, Zero};
use std::fmt::Debug;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::scalar::Scalar;

/// Index into a model's finite, ordered action set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub usize);

impl Action {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Discrete key of an observation, used to label edges of the search tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObsKey(pub SmallVec<[i64; 4]>);

impl ObsKey {
    pub fn single(k: i64) -> Self {
        Self(SmallVec::from_slice(&[k]))
    }

    /// Uniform-grid discretisation of a continuous observation vector.
    pub fn grid<F: Scalar>(values: &[F], cell: &[F]) -> Self {
        debug_assert_eq!(values.len(), cell.len());
        Self(
            values
                .iter()
                .zip(cell)
                .map(|(v, w)| (*v / *w).floor().to_i64().unwrap_or(i64::MAX))
                .collect(),
        )
    }
}

/// One uniform noise vector `psi`, consumed by a single call to `f_l`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseDraw<F>(SmallVec<[F; 8]>);

impl<F: Scalar> NoiseDraw<F> {
    pub fn new(values: &[F]) -> Result<Self, ModelError> {
        if let Some(bad) = values
            .iter()
            .position(|v| !(*v >= F::zero() && *v <= F::one()))
        {
            return Err(ModelError::NoiseOutOfRange {
                index: bad,
                value: values[bad].as_f64(),
            });
        }
        Ok(Self(SmallVec::from_slice(values)))
    }

    /// Every entry at the median, which maps Gaussian noise to exactly zero.
    pub fn median(dim: usize) -> Self {
        Self(SmallVec::from_elem(F::lit(0.5), dim))
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        Self((0..dim).map(|_| F::lit(rng.random::<f64>())).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[F] {
        &self.0
    }
}

impl<F> std::ops::Index<usize> for NoiseDraw<F> {
    type Output = F;
    fn index(&self, i: usize) -> &F {
        &self.0[i]
    }
}

/// Result of one call to a simulative model.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S, O, F> {
    pub next_state: S,
    pub observation: O,
    pub reward: F,
    pub terminal: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("level {level} out of range (model has levels 0..={max})")]
    InvalidLevel { level: usize, max: usize },
    #[error("noise draw has {got} entries, model consumes {expected}")]
    NoiseLength { expected: usize, got: usize },
    #[error("noise entry {index} = {value} is outside [0, 1]")]
    NoiseOutOfRange { index: usize, value: f64 },
    #[error("action {action} out of range ({count} actions)")]
    InvalidAction { action: usize, count: usize },
    #[error("invalid model parameter: {0}")]
    Parameter(String),
}

/// Level schedule `C1 * 2^(-C2 * l)` mapping a level to its time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule<F> {
    pub c1: F,
    pub c2: F,
    /// Finest level index `L`; the schedule covers `0..=L`.
    pub max_level: usize,
}

impl<F: Scalar> LevelSchedule<F> {
    pub fn new(c1: F, c2: F, max_level: usize) -> Result<Self, ModelError> {
        if !(c1 > F::zero()) || !(c2 > F::zero()) {
            return Err(ModelError::Parameter(format!(
                "level schedule needs C1 > 0 and C2 > 0, got C1={c1}, C2={c2}"
            )));
        }
        Ok(Self { c1, c2, max_level })
    }

    pub fn num_levels(&self) -> usize {
        self.max_level + 1
    }

    pub fn parameter(&self, level: usize) -> Result<F, ModelError> {
        if level > self.max_level {
            return Err(ModelError::InvalidLevel {
                level,
                max: self.max_level,
            });
        }
        Ok(self.c1 * F::lit(2.0).powf(-self.c2 * F::from_count(level as u64)))
    }

    /// Number of equal substeps that tile `duration` at `level`: level 0
    /// rounds `duration / C1` up, finer levels scale that count by
    /// `2^(C2 l)` (rounded up), so every substep is at most `parameter(level)`
    /// and, for integer `C2`, each level refines the one below it.
    pub fn substeps(&self, level: usize, duration: F) -> Result<usize, ModelError> {
        self.parameter(level)?;
        let eps = F::lit(1e-9);
        let base = (duration / self.c1 - eps).ceil().max(F::one());
        let scale = F::lit(2.0).powf(self.c2 * F::from_count(level as u64));
        let n = (base * scale - eps).ceil().to_usize().unwrap_or(1);
        Ok(n.max(1))
    }
}

/// A POMDP with level-indexed deterministic simulative transition models.
///
/// Implementations are immutable after construction; every method is a pure
/// function of its arguments.
pub trait PomdpModel: Send + Sync {
    type Scalar: Scalar;
    type State: Clone + Debug + Send + Sync;
    type Observation: Clone + Debug + Send + Sync;

    /// `L + 1`, always at least one.
    fn num_levels(&self) -> usize;
    /// Number of uniforms one call to `f_l` consumes (the same at every level).
    fn noise_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn discount(&self) -> Self::Scalar;
    fn max_steps(&self) -> usize;

    fn action_name(&self, action: Action) -> String {
        format!("a{}", action.0)
    }

    /// Draws a state from the initial belief.
    fn initial_state(&self, rng: &mut dyn RngCore) -> Self::State;

    /// `f_l(s, a, psi)` with every Gaussian noise scale multiplied by
    /// `noise_scale`. Callers guarantee level, action and noise length are
    /// valid; use [`PomdpModel::simulate_step`] for the checked entry point.
    fn transition(
        &self,
        level: usize,
        state: &Self::State,
        action: Action,
        noise: &NoiseDraw<Self::Scalar>,
        noise_scale: Self::Scalar,
    ) -> Transition<Self::State, Self::Observation, Self::Scalar>;

    /// Reward of executing `action` in `state`. Terminal rewards are
    /// attributed to the step that enters the terminal state, so the
    /// reached state is passed as well.
    fn reward(&self, state: &Self::State, action: Action, next: &Self::State) -> Self::Scalar;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Cheap deterministic-relaxation estimate of the optimal value-to-go.
    fn heuristic(&self, state: &Self::State) -> Self::Scalar;

    /// `p(o | s', a)`: probability mass for discrete observations, density
    /// for continuous ones.
    fn observation_likelihood(
        &self,
        action: Action,
        next: &Self::State,
        observation: &Self::Observation,
    ) -> Self::Scalar;

    fn observation_key(&self, observation: &Self::Observation) -> ObsKey;

    /// Relative cost of one call to `f_l` (integration substeps).
    fn step_cost(&self, _level: usize) -> u64 {
        1
    }

    fn max_level(&self) -> usize {
        self.num_levels() - 1
    }

    /// Checked `f_l(s, a, psi)`.
    fn simulate_step(
        &self,
        level: usize,
        state: &Self::State,
        action: Action,
        noise: &NoiseDraw<Self::Scalar>,
    ) -> Result<Transition<Self::State, Self::Observation, Self::Scalar>, ModelError> {
        if level >= self.num_levels() {
            return Err(ModelError::InvalidLevel {
                level,
                max: self.max_level(),
            });
        }
        if action.0 >= self.num_actions() {
            return Err(ModelError::InvalidAction {
                action: action.0,
                count: self.num_actions(),
            });
        }
        if noise.len() != self.noise_dim() {
            return Err(ModelError::NoiseLength {
                expected: self.noise_dim(),
                got: noise.len(),
            });
        }
        Ok(self.transition(level, state, action, noise, Self::Scalar::one()))
    }
}

/// A model with enumerable states and observations and explicit
/// per-level outcome probabilities.
pub trait DiscreteModel: PomdpModel
where
    Self::State: PartialEq,
    Self::Observation: PartialEq,
{
    fn states(&self) -> Vec<Self::State>;
    fn observations(&self) -> Vec<Self::Observation>;

    /// Joint probability `T_l(s, a, s') Z(s', a, o)`.
    fn outcome_probability(
        &self,
        level: usize,
        state: &Self::State,
        action: Action,
        next: &Self::State,
        observation: &Self::Observation,
    ) -> Self::Scalar;
}

/// An outcome reachable under the reference model but not under a coarser level.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportViolation<S, O> {
    pub level: usize,
    pub state: S,
    pub action: Action,
    pub next: S,
    pub observation: O,
}

/// Checks that every `(s, a, s', o)` with positive probability at level `L`
/// has positive probability at every level. Pointwise support inclusion
/// implies it for every product along an action sequence.
pub fn check_support<M>(model: &M) -> Result<(), SupportViolation<M::State, M::Observation>>
where
    M: DiscreteModel,
    M::State: PartialEq,
    M::Observation: PartialEq,
{
    let top = model.max_level();
    let states = model.states();
    let observations = model.observations();
    for s in states.iter().filter(|s| !model.is_terminal(s)) {
        for a in (0..model.num_actions()).map(Action) {
            for next in &states {
                for o in &observations {
                    if model.outcome_probability(top, s, a, next, o) <= M::Scalar::zero() {
                        continue;
                    }
                    for level in 0..top {
                        if model.outcome_probability(level, s, a, next, o) <= M::Scalar::zero() {
                            return Err(SupportViolation {
                                level,
                                state: s.clone(),
                                action: a,
                                next: next.clone(),
                                observation: o.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Standard normal quantile of a uniform draw. The draw is clamped away from
/// 0 and 1 so the result is always finite.
pub fn standard_normal<F: Scalar>(u: F) -> F {
    let p = u.as_f64().clamp(1e-12, 1.0 - 1e-12);
    if p == 0.5 {
        return F::zero();
    }
    F::lit(Normal::standard().inverse_cdf(p))
}

pub fn normal_density<F: Scalar>(x: F, mean: F, sd: F) -> F {
    let z = (x - mean) / sd;
    (-(z * z) / F::lit(2.0)).exp() / (sd * F::TAU().sqrt())
}

/// Index of the cell of a cumulative distribution that contains `u`.
/// `weights` need not be normalised.
pub fn categorical<F: Scalar>(weights: &[F], u: F) -> usize {
    let total: F = weights.iter().copied().sum();
    let target = u * total;
    let mut acc = F::zero();
    for (i, w) in weights.iter().enumerate() {
        acc += *w;
        if target < acc {
            return i;
        }
    }
    weights
        .iter()
        .rposition(|w| *w > F::zero())
        .unwrap_or(weights.len() - 1)
}
