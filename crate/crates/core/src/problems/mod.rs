//! Benchmark problems.

pub mod car;
pub mod chain;
pub mod geometry;
pub mod pendulum;
pub mod tiger;

pub use car::{BeaconMap, CarConfig, CarNavigation, CarObservation, CarState, CarStatus};
pub use chain::{Chain, ChainConfig, ChainState};
pub use pendulum::{PendulumConfig, PendulumObservation, PendulumState, PendulumTorque};
pub use tiger::{Tiger, TigerConfig, TigerObservation, TigerOracle, TigerState};
