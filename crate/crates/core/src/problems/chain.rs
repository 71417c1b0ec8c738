//! A three-step chain with two levels and a single action.
//!
//! The walker advances by one cell with probability 0.5 on level 0 and 0.65
//! on level 1, and collects the square of its position after every step. It
//! observes the parity of its position, reported correctly with probability
//! 0.8. Small enough to enumerate every outcome path exactly.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::model::{Action, DiscreteModel, ModelError, NoiseDraw, ObsKey, PomdpModel, Transition};
use crate::scalar::Scalar;
use crate::solver::TerminalKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainState {
    pub position: u32,
    pub time: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub horizon: u32,
    /// Advance probability per level; its length fixes `L + 1`.
    pub advance: Vec<f64>,
    pub parity_accuracy: f64,
    pub discount: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            advance: vec![0.5, 0.65],
            parity_accuracy: 0.8,
            discount: 0.9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Chain<F> {
    horizon: u32,
    advance: Vec<F>,
    accuracy: F,
    discount: F,
    /// Reference-level value-to-go indexed by `[time][position]`.
    to_go: Vec<Vec<F>>,
}

impl<F: Scalar> Chain<F> {
    pub fn new(config: &ChainConfig) -> Result<Self, ModelError> {
        if config.advance.is_empty() || config.advance.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ModelError::Parameter(
                "advance probabilities must be a non-empty list in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.parity_accuracy) || config.horizon == 0 {
            return Err(ModelError::Parameter("invalid chain parameters".into()));
        }
        let advance: Vec<F> = config.advance.iter().map(|p| F::lit(*p)).collect();
        let p = *advance.last().unwrap();
        let gamma = F::lit(config.discount);
        let h = config.horizon as usize;
        let mut to_go = vec![vec![F::zero(); h + 1]; h + 1];
        for t in (0..h).rev() {
            for x in 0..=t {
                let stay = F::from_count((x * x) as u64) + gamma * to_go[t + 1][x];
                let go = F::from_count(((x + 1) * (x + 1)) as u64) + gamma * to_go[t + 1][x + 1];
                to_go[t][x] = p * go + (F::one() - p) * stay;
            }
        }
        Ok(Self {
            horizon: config.horizon,
            advance,
            accuracy: F::lit(config.parity_accuracy),
            discount: gamma,
            to_go,
        })
    }

    pub fn advance_probability(&self, level: usize) -> F {
        self.advance[level]
    }

    pub fn parity_accuracy(&self) -> F {
        self.accuracy
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }
}

impl<F: Scalar> Default for Chain<F> {
    fn default() -> Self {
        Self::new(&ChainConfig::default()).expect("default config is valid")
    }
}

impl<F: Scalar> PomdpModel for Chain<F> {
    type Scalar = F;
    type State = ChainState;
    /// Reported parity of the position.
    type Observation = u32;

    fn num_levels(&self) -> usize {
        self.advance.len()
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        1
    }

    fn discount(&self) -> F {
        self.discount
    }

    fn max_steps(&self) -> usize {
        self.horizon as usize
    }

    fn action_name(&self, _action: Action) -> String {
        "step".into()
    }

    fn initial_state(&self, _rng: &mut dyn RngCore) -> ChainState {
        ChainState {
            position: 0,
            time: 0,
        }
    }

    fn transition(
        &self,
        level: usize,
        state: &ChainState,
        action: Action,
        noise: &NoiseDraw<F>,
        _noise_scale: F,
    ) -> Transition<ChainState, u32, F> {
        let next = ChainState {
            position: state.position + u32::from(noise[0] < self.advance[level]),
            time: state.time + 1,
        };
        let parity = next.position % 2;
        let observation = if noise[1] < self.accuracy {
            parity
        } else {
            1 - parity
        };
        Transition {
            reward: self.reward(state, action, &next),
            terminal: self.is_terminal(&next),
            next_state: next,
            observation,
        }
    }

    fn reward(&self, _state: &ChainState, _action: Action, next: &ChainState) -> F {
        F::from_count(u64::from(next.position * next.position))
    }

    fn is_terminal(&self, state: &ChainState) -> bool {
        state.time >= self.horizon
    }

    /// Exact reference-level value-to-go.
    fn heuristic(&self, state: &ChainState) -> F {
        self.to_go
            .get(state.time as usize)
            .and_then(|row| row.get(state.position as usize))
            .copied()
            .unwrap_or_else(F::zero)
    }

    fn observation_likelihood(&self, _action: Action, next: &ChainState, o: &u32) -> F {
        if next.position % 2 == *o {
            self.accuracy
        } else {
            F::one() - self.accuracy
        }
    }

    fn observation_key(&self, o: &u32) -> ObsKey {
        ObsKey::single(i64::from(*o))
    }
}

impl<F: Scalar> TerminalKind for Chain<F> {}

impl<F: Scalar> DiscreteModel for Chain<F> {
    fn states(&self) -> Vec<ChainState> {
        (0..=self.horizon)
            .flat_map(|time| (0..=time).map(move |position| ChainState { position, time }))
            .collect()
    }

    fn observations(&self) -> Vec<u32> {
        vec![0, 1]
    }

    fn outcome_probability(
        &self,
        level: usize,
        state: &ChainState,
        _action: Action,
        next: &ChainState,
        o: &u32,
    ) -> F {
        if next.time != state.time + 1 {
            return F::zero();
        }
        let p = self.advance[level];
        let move_p = if next.position == state.position + 1 {
            p
        } else if next.position == state.position {
            F::one() - p
        } else {
            return F::zero();
        };
        move_p * self.observation_likelihood(Action(0), next, o)
    }
}
