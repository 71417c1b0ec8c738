//! Torque-limited pendulum swing-up.
//!
//! `theta` is measured from the hanging position, so upright is `theta = pi`.
//! Each action applies a constant torque for `action_duration` seconds,
//! integrated with RK4 at step `dt_l = C1 * 2^(-C2 l)` (rounded down so the
//! substeps tile the duration exactly). Goal and collision tests run at the
//! end of each action.
//!
//! Noise layout (`d_psi = 3`): `psi[0]` torque noise, held over the whole
//! action; `psi[1..3]` angle and velocity observation noise.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::car::wrap_angle;
use crate::model::{
    normal_density, standard_normal, Action, LevelSchedule, ModelError, NoiseDraw, ObsKey,
    PomdpModel, Transition,
};
use crate::scalar::Scalar;
use crate::solver::{Outcome, TerminalKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PendulumStatus {
    Swinging,
    Collided,
    Upright,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumState<F> {
    pub theta: F,
    pub omega: F,
    pub status: PendulumStatus,
}

impl<F: Scalar> PendulumState<F> {
    pub fn new(theta: F, omega: F) -> Self {
        Self {
            theta,
            omega,
            status: PendulumStatus::Swinging,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumObservation<F> {
    pub theta: F,
    pub omega: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumConfig {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
    pub max_torque: f64,
    pub torque_noise_std: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_level: usize,
    pub action_duration: f64,
    /// `[theta, omega]` mean of the initial belief.
    pub start: [f64; 2],
    pub start_std: [f64; 2],
    pub observation_noise_std: [f64; 2],
    pub observation_cell: [f64; 2],
    /// Half-width of the upright goal region around `theta = pi` (rad).
    pub goal_tolerance: f64,
    /// Wrapped angle interval occupied by an obstacle.
    pub obstacle: [f64; 2],
    pub collision_reward: f64,
    pub goal_reward: f64,
    pub step_reward: f64,
    pub discount: f64,
    pub max_steps: usize,
    /// Angular speed assumed by the heuristic (rad/s).
    pub heuristic_speed: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 0.5,
            gravity: 9.81,
            damping: 0.05,
            max_torque: 2.0,
            torque_noise_std: 0.3,
            c1: 0.0128,
            c2: 1.0,
            max_level: 4,
            action_duration: 0.1,
            start: [0.0, 0.0],
            start_std: [0.05, 0.05],
            observation_noise_std: [0.05, 0.2],
            observation_cell: [0.2, 0.5],
            goal_tolerance: 0.3,
            obstacle: [-2.6, -2.0],
            collision_reward: -500.0,
            goal_reward: 1000.0,
            step_reward: -1.0,
            discount: 0.98,
            max_steps: 50,
            heuristic_speed: 3.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PendulumTorque<F> {
    config: PendulumConfig,
    schedule: LevelSchedule<F>,
    substeps: Vec<usize>,
    duration: F,
    discount: F,
}

impl<F: Scalar> PendulumTorque<F> {
    pub fn new(config: &PendulumConfig) -> Result<Self, ModelError> {
        let param = |msg: &str| Err(ModelError::Parameter(msg.into()));
        if !(config.mass > 0.0 && config.length > 0.0) {
            return param("mass and length must be positive");
        }
        if !(config.action_duration > 0.0) || !(config.heuristic_speed > 0.0) {
            return param("action duration and heuristic speed must be positive");
        }
        if config.observation_noise_std.iter().any(|s| !(*s > 0.0))
            || config.observation_cell.iter().any(|c| !(*c > 0.0))
            || !(config.torque_noise_std >= 0.0)
        {
            return param("noise levels and observation cells must be positive");
        }
        if !(config.discount > 0.0 && config.discount < 1.0) {
            return param("discount must lie in (0, 1)");
        }
        if config.obstacle[0] > config.obstacle[1] {
            return param("obstacle interval needs lower <= upper");
        }
        let schedule = LevelSchedule::new(F::lit(config.c1), F::lit(config.c2), config.max_level)?;
        let duration = F::lit(config.action_duration);
        let substeps = (0..schedule.num_levels())
            .map(|l| schedule.substeps(l, duration))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            schedule,
            substeps,
            duration,
            discount: F::lit(config.discount),
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &PendulumConfig {
        &self.config
    }

    pub fn schedule(&self) -> &LevelSchedule<F> {
        &self.schedule
    }

    pub fn substeps(&self, level: usize) -> usize {
        self.substeps[level]
    }

    pub fn torque(&self, a: Action) -> F {
        if a.0 == 0 {
            -F::lit(self.config.max_torque)
        } else {
            F::lit(self.config.max_torque)
        }
    }

    fn acceleration(&self, theta: F, omega: F, torque: F) -> F {
        let c = &self.config;
        let (m, l) = (F::lit(c.mass), F::lit(c.length));
        (torque - F::lit(c.damping) * omega - m * F::lit(c.gravity) * l * theta.sin()) / (m * l * l)
    }

    /// RK4 over `duration` with `n` equal steps under constant `torque`.
    pub fn integrate(&self, theta: F, omega: F, torque: F, n: usize) -> (F, F) {
        let h = self.duration / F::from_count(n as u64);
        let half = F::lit(0.5) * h;
        let (mut th, mut om) = (theta, omega);
        for _ in 0..n {
            let k1 = (om, self.acceleration(th, om, torque));
            let k2 = (
                om + half * k1.1,
                self.acceleration(th + half * k1.0, om + half * k1.1, torque),
            );
            let k3 = (
                om + half * k2.1,
                self.acceleration(th + half * k2.0, om + half * k2.1, torque),
            );
            let k4 = (
                om + h * k3.1,
                self.acceleration(th + h * k3.0, om + h * k3.1, torque),
            );
            let sixth = h / F::lit(6.0);
            th += sixth * (k1.0 + F::lit(2.0) * (k2.0 + k3.0) + k4.0);
            om += sixth * (k1.1 + F::lit(2.0) * (k2.1 + k3.1) + k4.1);
        }
        (th, om)
    }

    /// Signed angular distance from the upright position.
    pub fn upright_error(&self, theta: F) -> F {
        wrap_angle(theta - F::PI())
    }

    fn classify(&self, theta: F) -> PendulumStatus {
        let w = wrap_angle(theta);
        let [lo, hi] = self.config.obstacle;
        if w >= F::lit(lo) && w <= F::lit(hi) {
            PendulumStatus::Collided
        } else if self.upright_error(theta).abs() <= F::lit(self.config.goal_tolerance) {
            PendulumStatus::Upright
        } else {
            PendulumStatus::Swinging
        }
    }
}

impl<F: Scalar> Default for PendulumTorque<F> {
    fn default() -> Self {
        Self::new(&PendulumConfig::default()).expect("default config is valid")
    }
}

impl<F: Scalar> PomdpModel for PendulumTorque<F> {
    type Scalar = F;
    type State = PendulumState<F>;
    type Observation = PendulumObservation<F>;

    fn num_levels(&self) -> usize {
        self.schedule.num_levels()
    }

    fn noise_dim(&self) -> usize {
        3
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn discount(&self) -> F {
        self.discount
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn action_name(&self, a: Action) -> String {
        format!("torque={}", self.torque(a))
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> PendulumState<F> {
        let mut v = [0.0; 2];
        for (i, slot) in v.iter_mut().enumerate() {
            let u: f64 = rng.random();
            *slot = self.config.start[i]
                + self.config.start_std[i] * standard_normal(u.clamp(1e-12, 1.0 - 1e-12));
        }
        let mut s = PendulumState::new(F::lit(v[0]), F::lit(v[1]));
        s.status = self.classify(s.theta);
        s
    }

    fn transition(
        &self,
        level: usize,
        state: &PendulumState<F>,
        action: Action,
        noise: &NoiseDraw<F>,
        noise_scale: F,
    ) -> Transition<PendulumState<F>, PendulumObservation<F>, F> {
        let mut s = *state;
        if s.status == PendulumStatus::Swinging {
            let torque = self.torque(action)
                + F::lit(self.config.torque_noise_std) * noise_scale * standard_normal(noise[0]);
            let (th, om) = self.integrate(s.theta, s.omega, torque, self.substeps[level]);
            s = PendulumState {
                theta: th,
                omega: om,
                status: self.classify(th),
            };
        }
        let [st, sw] = self.config.observation_noise_std;
        let observation = PendulumObservation {
            theta: s.theta + F::lit(st) * noise_scale * standard_normal(noise[1]),
            omega: s.omega + F::lit(sw) * noise_scale * standard_normal(noise[2]),
        };
        Transition {
            reward: self.reward(state, action, &s),
            terminal: self.is_terminal(&s),
            next_state: s,
            observation,
        }
    }

    fn reward(&self, state: &PendulumState<F>, _action: Action, next: &PendulumState<F>) -> F {
        if state.status != PendulumStatus::Swinging {
            return F::zero();
        }
        F::lit(match next.status {
            PendulumStatus::Collided => self.config.collision_reward,
            PendulumStatus::Upright => self.config.goal_reward,
            PendulumStatus::Swinging => self.config.step_reward,
        })
    }

    fn is_terminal(&self, state: &PendulumState<F>) -> bool {
        state.status != PendulumStatus::Swinging
    }

    /// Goal reward discounted by the steps needed to cover the remaining
    /// angle at the heuristic speed.
    fn heuristic(&self, s: &PendulumState<F>) -> F {
        let gap =
            (self.upright_error(s.theta).abs() - F::lit(self.config.goal_tolerance)).max(F::zero());
        let k = gap / (F::lit(self.config.heuristic_speed) * self.duration);
        let gk = self.discount.powf(k);
        gk * F::lit(self.config.goal_reward)
            + F::lit(self.config.step_reward) * (F::one() - gk) / (F::one() - self.discount)
    }

    fn observation_likelihood(
        &self,
        _action: Action,
        next: &PendulumState<F>,
        o: &PendulumObservation<F>,
    ) -> F {
        let [st, sw] = self.config.observation_noise_std;
        normal_density(o.theta, next.theta, F::lit(st))
            * normal_density(o.omega, next.omega, F::lit(sw))
    }

    fn observation_key(&self, o: &PendulumObservation<F>) -> ObsKey {
        let c = self.config.observation_cell;
        ObsKey::grid(&[o.theta, o.omega], &[F::lit(c[0]), F::lit(c[1])])
    }

    fn step_cost(&self, level: usize) -> u64 {
        self.substeps[level] as u64
    }
}

impl<F: Scalar> TerminalKind for PendulumTorque<F> {
    fn terminal_outcome(&self, s: &PendulumState<F>) -> Outcome {
        match s.status {
            PendulumStatus::Collided => Outcome::Collision,
            PendulumStatus::Upright => Outcome::Goal,
            PendulumStatus::Swinging => Outcome::OtherTerminal,
        }
    }
}
