//! The Tiger problem, used as an exactly solvable reference.
//!
//! Two doors, a tiger behind one. Listening costs 1 and reports the correct
//! side with probability 0.85; opening a door ends the episode with +10 (no
//! tiger) or -100 (tiger). Every approximation level is the same model.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::model::{Action, DiscreteModel, ModelError, NoiseDraw, ObsKey, PomdpModel, Transition};
use crate::scalar::Scalar;
use crate::solver::TerminalKind;

pub const LISTEN: Action = Action(0);
pub const OPEN_LEFT: Action = Action(1);
pub const OPEN_RIGHT: Action = Action(2);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TigerState {
    Left,
    Right,
    /// A door has been opened.
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TigerObservation {
    HearLeft,
    HearRight,
    Nothing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TigerConfig {
    /// `L`; all `L + 1` levels are identical.
    pub max_level: usize,
    pub accuracy: f64,
    pub listen_reward: f64,
    pub treasure_reward: f64,
    pub tiger_reward: f64,
    pub discount: f64,
    pub max_steps: usize,
}

impl Default for TigerConfig {
    fn default() -> Self {
        Self {
            max_level: 0,
            accuracy: 0.85,
            listen_reward: -1.0,
            treasure_reward: 10.0,
            tiger_reward: -100.0,
            discount: 0.95,
            max_steps: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Tiger<F> {
    levels: usize,
    accuracy: F,
    listen_reward: F,
    treasure_reward: F,
    tiger_reward: F,
    discount: F,
    max_steps: usize,
}

impl<F: Scalar> Tiger<F> {
    pub fn new(config: &TigerConfig) -> Result<Self, ModelError> {
        if !(0.5..=1.0).contains(&config.accuracy) {
            return Err(ModelError::Parameter(format!(
                "listen accuracy {} outside [0.5, 1]",
                config.accuracy
            )));
        }
        if !(config.discount > 0.0 && config.discount < 1.0) {
            return Err(ModelError::Parameter("discount must lie in (0, 1)".into()));
        }
        Ok(Self {
            levels: config.max_level + 1,
            accuracy: F::lit(config.accuracy),
            listen_reward: F::lit(config.listen_reward),
            treasure_reward: F::lit(config.treasure_reward),
            tiger_reward: F::lit(config.tiger_reward),
            discount: F::lit(config.discount),
            max_steps: config.max_steps,
        })
    }

    /// Standard Tiger with `max_level + 1` identical levels.
    pub fn with_levels(max_level: usize) -> Self {
        Self::new(&TigerConfig {
            max_level,
            ..TigerConfig::default()
        })
        .expect("default config is valid")
    }

    pub fn accuracy(&self) -> F {
        self.accuracy
    }

    /// Exact posterior `P(tiger left)` after listening and hearing `obs`.
    pub fn posterior_left(&self, prior_left: F, obs: TigerObservation) -> F {
        let p = self.accuracy;
        let (l, r) = match obs {
            TigerObservation::HearLeft => (p, F::one() - p),
            TigerObservation::HearRight => (F::one() - p, p),
            TigerObservation::Nothing => return prior_left,
        };
        let num = l * prior_left;
        num / (num + r * (F::one() - prior_left))
    }
}

impl<F: Scalar> Default for Tiger<F> {
    fn default() -> Self {
        Self::with_levels(0)
    }
}

impl<F: Scalar> PomdpModel for Tiger<F> {
    type Scalar = F;
    type State = TigerState;
    type Observation = TigerObservation;

    fn num_levels(&self) -> usize {
        self.levels
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn discount(&self) -> F {
        self.discount
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn action_name(&self, action: Action) -> String {
        match action {
            LISTEN => "listen",
            OPEN_LEFT => "open-left",
            OPEN_RIGHT => "open-right",
            _ => "invalid",
        }
        .into()
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> TigerState {
        if rng.random::<bool>() {
            TigerState::Left
        } else {
            TigerState::Right
        }
    }

    fn transition(
        &self,
        _level: usize,
        state: &TigerState,
        action: Action,
        noise: &NoiseDraw<F>,
        _noise_scale: F,
    ) -> Transition<TigerState, TigerObservation, F> {
        let (next, observation) = match (action, state) {
            (_, TigerState::Done) => (TigerState::Done, TigerObservation::Nothing),
            (LISTEN, s) => {
                let correct = noise[0] < self.accuracy;
                let heard_left = (*s == TigerState::Left) == correct;
                let o = if heard_left {
                    TigerObservation::HearLeft
                } else {
                    TigerObservation::HearRight
                };
                (*s, o)
            }
            _ => (TigerState::Done, TigerObservation::Nothing),
        };
        Transition {
            reward: self.reward(state, action, &next),
            terminal: self.is_terminal(&next),
            next_state: next,
            observation,
        }
    }

    fn reward(&self, state: &TigerState, action: Action, _next: &TigerState) -> F {
        match (action, state) {
            (_, TigerState::Done) => F::zero(),
            (LISTEN, _) => self.listen_reward,
            (OPEN_LEFT, TigerState::Left) | (OPEN_RIGHT, TigerState::Right) => self.tiger_reward,
            _ => self.treasure_reward,
        }
    }

    fn is_terminal(&self, state: &TigerState) -> bool {
        *state == TigerState::Done
    }

    /// Largest single reward; no episode can collect more than one door reward.
    fn heuristic(&self, state: &TigerState) -> F {
        if self.is_terminal(state) {
            F::zero()
        } else {
            self.treasure_reward
        }
    }

    fn observation_likelihood(&self, action: Action, next: &TigerState, o: &TigerObservation) -> F {
        self.observation_probability(action, next, o)
    }

    fn observation_key(&self, o: &TigerObservation) -> ObsKey {
        ObsKey::single(*o as i64)
    }
}

impl<F: Scalar> Tiger<F> {
    fn observation_probability(
        &self,
        action: Action,
        next: &TigerState,
        o: &TigerObservation,
    ) -> F {
        use TigerObservation::*;
        match (action, next, o) {
            (LISTEN, TigerState::Left, HearLeft) | (LISTEN, TigerState::Right, HearRight) => {
                self.accuracy
            }
            (LISTEN, TigerState::Left, HearRight) | (LISTEN, TigerState::Right, HearLeft) => {
                F::one() - self.accuracy
            }
            (LISTEN, TigerState::Done, Nothing) => F::one(),
            (LISTEN, _, _) => F::zero(),
            (_, _, Nothing) => F::one(),
            _ => F::zero(),
        }
    }
}

impl<F: Scalar> TerminalKind for Tiger<F> {}

impl<F: Scalar> DiscreteModel for Tiger<F> {
    fn states(&self) -> Vec<TigerState> {
        vec![TigerState::Left, TigerState::Right, TigerState::Done]
    }

    fn observations(&self) -> Vec<TigerObservation> {
        vec![
            TigerObservation::HearLeft,
            TigerObservation::HearRight,
            TigerObservation::Nothing,
        ]
    }

    fn outcome_probability(
        &self,
        _level: usize,
        state: &TigerState,
        action: Action,
        next: &TigerState,
        o: &TigerObservation,
    ) -> F {
        let expected_next = match (action, state) {
            (_, TigerState::Done) => TigerState::Done,
            (LISTEN, s) => *s,
            _ => TigerState::Done,
        };
        if *next != expected_next {
            return F::zero();
        }
        if *state == TigerState::Done {
            return if *o == TigerObservation::Nothing {
                F::one()
            } else {
                F::zero()
            };
        }
        self.observation_probability(action, next, o)
    }
}

/// Value iteration over a uniform grid on `P(tiger left)` with linear
/// interpolation between grid points.
#[derive(Clone, Debug)]
pub struct TigerOracle {
    values: Vec<f64>,
    accuracy: f64,
    listen: f64,
    treasure: f64,
    tiger: f64,
    discount: f64,
}

impl TigerOracle {
    pub fn solve(config: &TigerConfig, grid_points: usize, tolerance: f64) -> Self {
        assert!(grid_points >= 2);
        let mut oracle = Self {
            values: vec![0.0; grid_points],
            accuracy: config.accuracy,
            listen: config.listen_reward,
            treasure: config.treasure_reward,
            tiger: config.tiger_reward,
            discount: config.discount,
        };
        loop {
            let next: Vec<f64> = (0..grid_points)
                .map(|i| {
                    let b = i as f64 / (grid_points - 1) as f64;
                    oracle.q_values(b).into_iter().fold(f64::MIN, f64::max)
                })
                .collect();
            let delta = next
                .iter()
                .zip(&oracle.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            oracle.values = next;
            if delta < tolerance {
                break;
            }
        }
        oracle
    }

    pub fn value(&self, left: f64) -> f64 {
        let n = self.values.len() - 1;
        let x = left.clamp(0.0, 1.0) * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let t = x - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// `[listen, open-left, open-right]` action values at belief `P(left) = left`.
    pub fn q_values(&self, left: f64) -> [f64; 3] {
        let p = self.accuracy;
        let p_hear_left = p * left + (1.0 - p) * (1.0 - left);
        let post_left = p * left / p_hear_left;
        let post_right = (1.0 - p) * left / (1.0 - p_hear_left);
        let listen = self.listen
            + self.discount
                * (p_hear_left * self.value(post_left)
                    + (1.0 - p_hear_left) * self.value(post_right));
        let open_left = left * self.tiger + (1.0 - left) * self.treasure;
        let open_right = left * self.treasure + (1.0 - left) * self.tiger;
        [listen, open_left, open_right]
    }

    pub fn best_action(&self, left: f64) -> Action {
        let q = self.q_values(left);
        let mut best = 0;
        for a in 1..3 {
            if q[a] > q[best] {
                best = a;
            }
        }
        Action(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(u: f64) -> NoiseDraw<f64> {
        NoiseDraw::new(&[u]).unwrap()
    }

    #[test]
    fn listen_with_median_noise_hears_truth() {
        let t = Tiger::<f64>::default();
        let tr = t
            .simulate_step(0, &TigerState::Left, LISTEN, &noise(0.5))
            .unwrap();
        assert_eq!(tr.next_state, TigerState::Left);
        assert_eq!(tr.observation, TigerObservation::HearLeft);
        let tr = t
            .simulate_step(0, &TigerState::Left, LISTEN, &noise(0.9))
            .unwrap();
        assert_eq!(tr.observation, TigerObservation::HearRight);
    }

    #[test]
    fn deterministic_given_noise() {
        let t = Tiger::<f32>::with_levels(2);
        let n = NoiseDraw::new(&[0.8437f32]).unwrap();
        for l in 0..3 {
            let a = t.simulate_step(l, &TigerState::Right, LISTEN, &n).unwrap();
            let b = t.simulate_step(l, &TigerState::Right, LISTEN, &n).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn checked_step_errors() {
        let t = Tiger::<f64>::with_levels(1);
        assert!(matches!(
            t.simulate_step(2, &TigerState::Left, LISTEN, &noise(0.1)),
            Err(ModelError::InvalidLevel { level: 2, max: 1 })
        ));
        assert!(matches!(
            t.simulate_step(0, &TigerState::Left, LISTEN, &NoiseDraw::median(2)),
            Err(ModelError::NoiseLength {
                expected: 1,
                got: 2
            })
        ));
        assert!(matches!(
            t.simulate_step(0, &TigerState::Left, Action(3), &noise(0.1)),
            Err(ModelError::InvalidAction { .. })
        ));
    }

    #[test]
    fn rewards() {
        let t = Tiger::<f64>::default();
        let d = TigerState::Done;
        assert_eq!(t.reward(&TigerState::Left, OPEN_RIGHT, &d), 10.0);
        assert_eq!(t.reward(&TigerState::Left, OPEN_LEFT, &d), -100.0);
        assert_eq!(
            t.reward(&TigerState::Right, LISTEN, &TigerState::Right),
            -1.0
        );
        assert_eq!(t.heuristic(&TigerState::Left), 10.0);
        assert_eq!(t.heuristic(&TigerState::Done), 0.0);
    }

    #[test]
    fn oracle_policy() {
        let oracle = TigerOracle::solve(&TigerConfig::default(), 10_001, 1e-10);
        assert_eq!(oracle.best_action(0.5), LISTEN);
        assert_eq!(oracle.best_action(1.0), OPEN_RIGHT);
        assert_eq!(oracle.best_action(0.0), OPEN_LEFT);
        assert!((oracle.q_values(1.0)[2] - 10.0).abs() < 1e-12);
        // Listening never beats a certain +10.
        assert!((oracle.value(1.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn posterior_after_listen() {
        let t = Tiger::<f64>::default();
        assert!((t.posterior_left(0.5, TigerObservation::HearLeft) - 0.85).abs() < 1e-12);
    }
}
