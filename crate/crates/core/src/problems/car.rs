//! CarNavigation-lite: a car-like robot driving to a goal disc through a
//! walled arena, localising from noisy beacon signals.
//!
//! Levels are Euler time steps `dt_l = C1 * 2^(-C2 l)`; every level advances
//! the same duration per action by chaining substeps, and the collision and
//! goal tests run after each substep. A coarse level can therefore step over a
//! thin wall that a fine level hits.
//!
//! Noise layout (`d_psi = 5`): `psi[0..2]` acceleration and steering noise,
//! held constant over the substeps of one action; `psi[2]` picks the beacon;
//! `psi[3..5]` are the observation noise.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::geometry::{Aabb, Disc, DistanceField};
use crate::model::{
    categorical, normal_density, standard_normal, Action, LevelSchedule, ModelError, NoiseDraw,
    ObsKey, PomdpModel, Transition,
};
use crate::scalar::Scalar;
use crate::solver::{Outcome, TerminalKind};

/// Distance from the rear axle to the front axle (m).
pub const AXLE_LENGTH: f64 = 0.11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarStatus {
    Driving,
    Collided,
    AtGoal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarState<F> {
    pub x: F,
    pub y: F,
    /// Heading, wrapped to `(-pi, pi]`.
    pub theta: F,
    pub v: F,
    pub status: CarStatus,
}

impl<F: Scalar> CarState<F> {
    pub fn new(x: F, y: F, theta: F, v: F) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            v,
            status: CarStatus::Driving,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarAction<F> {
    pub acceleration: F,
    pub steering: F,
}

/// `(signal strength, speed)` with additive Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarObservation<F> {
    pub signal: F,
    pub speed: F,
}

pub fn wrap_angle<F: Scalar>(a: F) -> F {
    let two_pi = F::TAU();
    let mut w = a - two_pi * ((a + F::PI()) / two_pi).floor();
    // floor maps exactly pi to -pi; the interval is (-pi, pi].
    if w <= -F::PI() {
        w += two_pi;
    }
    w
}

/// One Euler step of the kinematic car.
pub fn car_dynamics<F: Scalar>(
    s: &CarState<F>,
    a: &CarAction<F>,
    accel_noise: F,
    steer_noise: F,
    dt: F,
) -> CarState<F> {
    CarState {
        x: s.x + dt * s.v * s.theta.cos(),
        y: s.y + dt * s.v * s.theta.sin(),
        theta: wrap_angle(s.theta + dt * (a.steering + steer_noise).tan() / F::lit(AXLE_LENGTH)),
        v: s.v + dt * (a.acceleration + accel_noise),
        status: s.status,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeaconMap {
    /// `[min_x, min_y, max_x, max_y]`; leaving it counts as a collision.
    pub arena: [f64; 4],
    pub obstacles: Vec<[f64; 4]>,
    pub beacons: Vec<[f64; 2]>,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
}

impl Default for BeaconMap {
    fn default() -> Self {
        Self {
            arena: [0.0, 0.0, 24.0, 24.0],
            obstacles: vec![[17.0, 2.0, 22.0, 7.0]],
            beacons: vec![[7.0, 9.0], [13.0, 12.0]],
            goal_center: [17.0, 17.0],
            goal_radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarConfig {
    pub map: BeaconMap,
    pub c1: f64,
    pub c2: f64,
    pub max_level: usize,
    /// Simulated time per planner action (s).
    pub action_duration: f64,
    pub accelerations: Vec<f64>,
    pub steering_angles: Vec<f64>,
    /// `[x, y, theta, v]` mean of the initial belief.
    pub start: [f64; 4],
    pub start_std: [f64; 4],
    /// Standard deviations of the acceleration and steering noise.
    pub control_noise_std: [f64; 2],
    /// Standard deviations of the signal and speed observation noise.
    pub observation_noise_std: [f64; 2],
    /// Cell sizes used to discretise observations into tree branches.
    pub observation_cell: [f64; 2],
    pub collision_reward: f64,
    pub goal_reward: f64,
    pub step_reward: f64,
    pub discount: f64,
    pub max_steps: usize,
    /// Assumed cruising speed of the distance-to-go heuristic (m/s).
    pub heuristic_speed: f64,
    pub heuristic_resolution: f64,
}

impl Default for CarConfig {
    fn default() -> Self {
        Self {
            map: BeaconMap::default(),
            c1: 0.4,
            c2: 1.0,
            max_level: 3,
            action_duration: 0.4,
            accelerations: vec![-1.0, 0.0, 1.0],
            steering_angles: vec![-0.5, 0.0, 0.5],
            start: [4.0, 4.0, 0.785, 1.0],
            start_std: [0.1, 0.1, 0.05, 0.05],
            control_noise_std: [0.2, 0.02],
            observation_noise_std: [0.01, 0.1],
            observation_cell: [0.05, 0.25],
            collision_reward: -500.0,
            goal_reward: 10000.0,
            step_reward: -1.0,
            discount: 0.99,
            max_steps: 500,
            heuristic_speed: 2.0,
            heuristic_resolution: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CarNavigation<F> {
    config: CarConfig,
    schedule: LevelSchedule<F>,
    substeps: Vec<usize>,
    arena: Aabb,
    obstacles: Vec<Aabb>,
    goal: Disc,
    actions: Vec<CarAction<F>>,
    field: Arc<DistanceField>,
    duration: F,
    discount: F,
}

impl<F: Scalar> CarNavigation<F> {
    pub fn new(config: &CarConfig) -> Result<Self, ModelError> {
        let m = &config.map;
        let arena = Aabb::new(m.arena[0], m.arena[1], m.arena[2], m.arena[3]);
        let obstacles: Vec<Aabb> = m
            .obstacles
            .iter()
            .map(|b| Aabb::new(b[0], b[1], b[2], b[3]))
            .collect();
        let goal = Disc {
            center: m.goal_center,
            radius: m.goal_radius,
        };
        let param = |msg: &str| Err(ModelError::Parameter(msg.into()));
        if !arena.is_valid() || obstacles.iter().any(|b| !b.is_valid()) {
            return param("boxes need min <= max");
        }
        if m.beacons.is_empty() {
            return param("the map needs at least one beacon");
        }
        if !(m.goal_radius > 0.0) || obstacles.iter().any(|b| goal.intersects(b)) {
            return param("goal must be a disc disjoint from every obstacle");
        }
        if config.accelerations.is_empty() || config.steering_angles.is_empty() {
            return param("action grid is empty");
        }
        if !(config.action_duration > 0.0) || !(config.heuristic_speed > 0.0) {
            return param("action duration and heuristic speed must be positive");
        }
        if config
            .control_noise_std
            .iter()
            .chain(&config.observation_noise_std)
            .chain(&config.start_std)
            .any(|s| !(*s >= 0.0))
            || config.observation_noise_std.contains(&0.0)
        {
            return param(
                "noise standard deviations must be non-negative, observation noise positive",
            );
        }
        if config.observation_cell.iter().any(|c| !(*c > 0.0)) {
            return param("observation cells must be positive");
        }
        if !(config.discount > 0.0 && config.discount < 1.0) {
            return param("discount must lie in (0, 1)");
        }
        if !(config.heuristic_resolution > 0.0) {
            return param("heuristic resolution must be positive");
        }
        let schedule = LevelSchedule::new(F::lit(config.c1), F::lit(config.c2), config.max_level)?;
        let duration = F::lit(config.action_duration);
        let substeps = (0..schedule.num_levels())
            .map(|l| schedule.substeps(l, duration))
            .collect::<Result<_, _>>()?;
        let actions = config
            .accelerations
            .iter()
            .flat_map(|a| {
                config.steering_angles.iter().map(move |p| CarAction {
                    acceleration: F::lit(*a),
                    steering: F::lit(*p),
                })
            })
            .collect();
        let field = DistanceField::build(&arena, &obstacles, &goal, config.heuristic_resolution);
        Ok(Self {
            schedule,
            substeps,
            arena,
            obstacles,
            goal,
            actions,
            field: Arc::new(field),
            duration,
            discount: F::lit(config.discount),
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &CarConfig {
        &self.config
    }

    pub fn schedule(&self) -> &LevelSchedule<F> {
        &self.schedule
    }

    pub fn substeps(&self, level: usize) -> usize {
        self.substeps[level]
    }

    pub fn action(&self, a: Action) -> CarAction<F> {
        self.actions[a.0]
    }

    pub fn collides(&self, x: F, y: F) -> bool {
        let (x, y) = (x.as_f64(), y.as_f64());
        !self.arena.contains(x, y) || self.obstacles.iter().any(|b| b.contains(x, y))
    }

    /// First event along the straight substep segment from `from` to `to`;
    /// a tie between a wall and the goal counts as a collision.
    pub fn sweep(&self, from: &CarState<F>, to: &CarState<F>) -> CarStatus {
        let p = [from.x.as_f64(), from.y.as_f64()];
        let q = [to.x.as_f64(), to.y.as_f64()];
        let wall = self
            .obstacles
            .iter()
            .filter_map(|b| b.segment_entry(p, q))
            .chain(self.arena.segment_exit(p, q))
            .min_by(f64::total_cmp);
        match (wall, self.goal.segment_entry(p, q)) {
            (Some(w), Some(g)) if g < w => CarStatus::AtGoal,
            (Some(_), _) => CarStatus::Collided,
            (None, Some(_)) => CarStatus::AtGoal,
            (None, None) => CarStatus::Driving,
        }
    }

    pub fn in_goal(&self, x: F, y: F) -> bool {
        self.goal.contains(x.as_f64(), y.as_f64())
    }

    /// Path distance from `(x, y)` to the goal boundary.
    pub fn distance_to_goal(&self, x: F, y: F) -> F {
        F::lit(self.field.distance(x.as_f64(), y.as_f64()))
    }

    /// Beacon selection probabilities at `(x, y)`, proportional to inverse distance.
    pub fn beacon_weights(&self, x: F, y: F) -> Vec<F> {
        let d: Vec<F> = self
            .config
            .map
            .beacons
            .iter()
            .map(|b| beacon_distance(b, x, y))
            .collect();
        if let Some(i) = d.iter().position(|d| *d == F::zero()) {
            let mut w = vec![F::zero(); d.len()];
            w[i] = F::one();
            return w;
        }
        let inv: Vec<F> = d.iter().map(|d| F::one() / *d).collect();
        let total: F = inv.iter().copied().sum();
        inv.into_iter().map(|w| w / total).collect()
    }

    /// `((x - bx)^2 + (y - by)^2 + 1)^-1` for beacon `i`.
    pub fn signal(&self, i: usize, x: F, y: F) -> F {
        let d = beacon_distance(&self.config.map.beacons[i], x, y);
        F::one() / (d * d + F::one())
    }

    /// Observation of `s` with beacon selector `u` and observation noise `(w0, w1)`.
    pub fn observe(&self, s: &CarState<F>, u: F, w0: F, w1: F) -> CarObservation<F> {
        let i = categorical(&self.beacon_weights(s.x, s.y), u);
        CarObservation {
            signal: self.signal(i, s.x, s.y) + w0,
            speed: s.v + w1,
        }
    }

    fn outcome_reward(&self, next: &CarState<F>) -> F {
        F::lit(match next.status {
            CarStatus::Collided => self.config.collision_reward,
            CarStatus::AtGoal => self.config.goal_reward,
            CarStatus::Driving => self.config.step_reward,
        })
    }
}

fn beacon_distance<F: Scalar>(b: &[f64; 2], x: F, y: F) -> F {
    (x - F::lit(b[0])).hypot(y - F::lit(b[1]))
}

impl<F: Scalar> Default for CarNavigation<F> {
    fn default() -> Self {
        Self::new(&CarConfig::default()).expect("default config is valid")
    }
}

impl<F: Scalar> PomdpModel for CarNavigation<F> {
    type Scalar = F;
    type State = CarState<F>;
    type Observation = CarObservation<F>;

    fn num_levels(&self) -> usize {
        self.schedule.num_levels()
    }

    fn noise_dim(&self) -> usize {
        5
    }

    fn num_actions(&self) -> usize {
        self.actions.len()
    }

    fn discount(&self) -> F {
        self.discount
    }

    fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    fn action_name(&self, a: Action) -> String {
        let c = self.actions[a.0];
        format!("accel={} steer={}", c.acceleration, c.steering)
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> CarState<F> {
        let mut v = [0.0; 4];
        for (i, slot) in v.iter_mut().enumerate() {
            let u: f64 = rng.random();
            *slot = self.config.start[i]
                + self.config.start_std[i] * standard_normal(u.clamp(1e-12, 1.0 - 1e-12));
        }
        let mut s = CarState::new(F::lit(v[0]), F::lit(v[1]), F::lit(v[2]), F::lit(v[3]));
        if self.collides(s.x, s.y) {
            s.status = CarStatus::Collided;
        } else if self.in_goal(s.x, s.y) {
            s.status = CarStatus::AtGoal;
        }
        s
    }

    fn transition(
        &self,
        level: usize,
        state: &CarState<F>,
        action: Action,
        noise: &NoiseDraw<F>,
        noise_scale: F,
    ) -> Transition<CarState<F>, CarObservation<F>, F> {
        let a = self.actions[action.0];
        let [sa, sp] = self.config.control_noise_std;
        let accel_noise = F::lit(sa) * noise_scale * standard_normal(noise[0]);
        let steer_noise = F::lit(sp) * noise_scale * standard_normal(noise[1]);
        let n = self.substeps[level];
        let dt = self.duration / F::from_count(n as u64);
        let mut s = *state;
        if s.status == CarStatus::Driving {
            for _ in 0..n {
                let next = car_dynamics(&s, &a, accel_noise, steer_noise, dt);
                let status = self.sweep(&s, &next);
                s = next;
                if status != CarStatus::Driving {
                    s.status = status;
                    break;
                }
            }
        }
        let [so, sv] = self.config.observation_noise_std;
        let observation = self.observe(
            &s,
            noise[2],
            F::lit(so) * noise_scale * standard_normal(noise[3]),
            F::lit(sv) * noise_scale * standard_normal(noise[4]),
        );
        Transition {
            reward: self.reward(state, action, &s),
            terminal: self.is_terminal(&s),
            next_state: s,
            observation,
        }
    }

    fn reward(&self, state: &CarState<F>, _action: Action, next: &CarState<F>) -> F {
        if state.status != CarStatus::Driving {
            return F::zero();
        }
        self.outcome_reward(next)
    }

    fn is_terminal(&self, state: &CarState<F>) -> bool {
        state.status != CarStatus::Driving
    }

    /// Value of driving straight to the goal at the heuristic speed:
    /// `k = D / (v_h * duration)` steps of step reward, then the goal reward.
    fn heuristic(&self, s: &CarState<F>) -> F {
        let d = self.distance_to_goal(s.x, s.y);
        let k = d / (F::lit(self.config.heuristic_speed) * self.duration);
        let gk = self.discount.powf(k);
        gk * F::lit(self.config.goal_reward)
            + F::lit(self.config.step_reward) * (F::one() - gk) / (F::one() - self.discount)
    }

    fn observation_likelihood(
        &self,
        _action: Action,
        next: &CarState<F>,
        o: &CarObservation<F>,
    ) -> F {
        let [so, sv] = self.config.observation_noise_std;
        let speed = normal_density(o.speed, next.v, F::lit(sv));
        let signal: F = self
            .beacon_weights(next.x, next.y)
            .iter()
            .enumerate()
            .map(|(i, w)| *w * normal_density(o.signal, self.signal(i, next.x, next.y), F::lit(so)))
            .sum();
        signal * speed
    }

    fn observation_key(&self, o: &CarObservation<F>) -> ObsKey {
        let c = self.config.observation_cell;
        ObsKey::grid(&[o.signal, o.speed], &[F::lit(c[0]), F::lit(c[1])])
    }

    fn step_cost(&self, level: usize) -> u64 {
        self.substeps[level] as u64
    }
}

impl<F: Scalar> TerminalKind for CarNavigation<F> {
    fn terminal_outcome(&self, s: &CarState<F>) -> Outcome {
        match s.status {
            CarStatus::Collided => Outcome::Collision,
            CarStatus::AtGoal => Outcome::Goal,
            CarStatus::Driving => Outcome::OtherTerminal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_map() -> CarConfig {
        CarConfig {
            map: BeaconMap {
                arena: [-20.0, -20.0, 20.0, 20.0],
                obstacles: vec![],
                beacons: vec![[0.0, 3.0]],
                goal_center: [15.0, 15.0],
                goal_radius: 0.5,
            },
            ..CarConfig::default()
        }
    }

    #[test]
    fn euler_step() {
        let s = CarState::new(0.0f64, 0.0, 0.0, 1.0);
        let a = CarAction {
            acceleration: 0.0,
            steering: 0.0,
        };
        let n = car_dynamics(&s, &a, 0.0, 0.0, 0.05);
        assert_eq!((n.x, n.y, n.theta, n.v), (0.05, 0.0, 0.0, 1.0));
        let still = car_dynamics(&CarState::new(1.0, 2.0, 0.3, 0.0), &a, 0.0, 0.0, 0.4);
        assert_eq!((still.x, still.y), (1.0, 2.0));
        let turn = CarAction {
            acceleration: 0.0,
            steering: 0.1,
        };
        let n = car_dynamics(&s, &turn, 0.0, 0.0, 0.4);
        assert!((n.theta - 0.4 * 0.1f64.tan() / 0.11).abs() < 1e-15);
    }

    #[test]
    fn duration_equivalence() {
        let car = CarNavigation::<f64>::new(&open_map()).unwrap();
        assert_eq!(
            (0..4).map(|l| car.substeps(l)).collect::<Vec<_>>(),
            [1, 2, 4, 8]
        );
        let s = CarState::new(0.0, 0.0, 0.0, 1.0);
        let straight = Action(4);
        assert_eq!(car.action(straight).steering, 0.0);
        let median = NoiseDraw::median(5);
        for l in 0..4 {
            let t = car.simulate_step(l, &s, straight, &median).unwrap();
            assert!((t.next_state.x - 0.4).abs() < 1e-12);
            assert_eq!(t.reward, -1.0);
        }
    }

    #[test]
    fn arcs_converge() {
        let car = CarNavigation::<f64>::new(&open_map()).unwrap();
        let s = CarState::new(0.0, 0.0, 0.0, 1.0);
        let turn = Action(5);
        let median = NoiseDraw::median(5);
        let end: Vec<_> = (0..4)
            .map(|l| car.simulate_step(l, &s, turn, &median).unwrap().next_state)
            .collect();
        let gap = |a: &CarState<f64>, b: &CarState<f64>| (a.x - b.x).hypot(a.y - b.y);
        let gaps: Vec<f64> = (1..4).map(|l| gap(&end[l], &end[l - 1])).collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn beacon_signal() {
        let car = CarNavigation::<f64>::new(&open_map()).unwrap();
        assert_eq!(car.signal(0, 0.0, 3.0), 1.0);
        assert!((car.signal(0, 0.0, 0.0) - 0.1).abs() < 1e-15);
        let o = car.observe(&CarState::new(0.0, 0.0, 0.0, 0.7), 0.3, 0.0, 0.0);
        assert!((o.signal - 0.1).abs() < 1e-15);
        assert_eq!(o.speed, 0.7);
    }

    #[test]
    fn beacon_selection_by_inverse_distance() {
        let mut cfg = open_map();
        cfg.map.beacons = vec![[1.0, 0.0], [-2.0, 0.0]];
        let car = CarNavigation::<f64>::new(&cfg).unwrap();
        let w = car.beacon_weights(0.0, 0.0);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12 && (w[1] - 1.0 / 3.0).abs() < 1e-12);
        let at = car.beacon_weights(-2.0, 0.0);
        assert_eq!(at, vec![0.0, 1.0]);
    }

    #[test]
    fn thin_wall_stops_every_level() {
        let mut cfg = open_map();
        cfg.map.obstacles = vec![[0.3, -1.0, 0.35, 1.0]];
        let car = CarNavigation::<f64>::new(&cfg).unwrap();
        let s = CarState::new(0.0, 0.0, 0.0, 1.0);
        for level in 0..=3 {
            let t = car
                .simulate_step(level, &s, Action(4), &NoiseDraw::median(5))
                .unwrap();
            assert_eq!(t.next_state.status, CarStatus::Collided, "level {level}");
            assert_eq!(t.reward, -500.0);
            assert!(t.terminal);
        }
    }

    #[test]
    fn coarse_step_cuts_corner_fine_turn_avoids() {
        let mut cfg = open_map();
        cfg.map.obstacles = vec![[0.35, -0.1, 0.5, 0.02]];
        let car = CarNavigation::<f64>::new(&cfg).unwrap();
        let s = CarState::new(0.0, 0.0, 0.0, 1.0);
        let left = Action(5);
        let median = NoiseDraw::median(5);
        let coarse = car.simulate_step(0, &s, left, &median).unwrap();
        let fine = car.simulate_step(3, &s, left, &median).unwrap();
        assert_eq!(coarse.next_state.status, CarStatus::Collided);
        assert_eq!(fine.next_state.status, CarStatus::Driving);
        assert_eq!(fine.reward, -1.0);
    }

    #[test]
    fn goal_reward_and_outcome() {
        let mut cfg = open_map();
        cfg.map.goal_center = [0.4, 0.0];
        let car = CarNavigation::<f64>::new(&cfg).unwrap();
        let t = car
            .simulate_step(
                3,
                &CarState::new(0.0, 0.0, 0.0, 1.0),
                Action(4),
                &NoiseDraw::median(5),
            )
            .unwrap();
        assert_eq!(t.reward, 10000.0);
        assert_eq!(car.terminal_outcome(&t.next_state), Outcome::Goal);
        assert_eq!(car.heuristic(&t.next_state), 10000.0);
    }

    #[test]
    fn rejects_goal_inside_obstacle() {
        let mut cfg = open_map();
        cfg.map.obstacles = vec![[14.0, 14.0, 16.0, 16.0]];
        assert!(CarNavigation::<f64>::new(&cfg).is_err());
        let mut cfg = open_map();
        cfg.map.beacons.clear();
        assert!(CarNavigation::<f64>::new(&cfg).is_err());
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-15);
        assert!((wrap_angle(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-15);
        assert!(
            (wrap_angle(3.0 * std::f64::consts::PI / 2.0) + std::f64::consts::FRAC_PI_2).abs()
                < 1e-12
        );
    }
}
