//! Level simulators against their declared outcome tables, and the support
//! property of the discrete models.

use mlpp::problems::{Chain, ChainConfig, Tiger};
use mlpp::{check_support, Action, DiscreteModel, NoiseDraw, PomdpModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson goodness-of-fit of `simulate_step` draws against
/// `outcome_probability` for every non-terminal state, action and level.
fn fits_outcome_table<M>(model: &M, draws: usize, seed: u64)
where
    M: DiscreteModel<Scalar = f64>,
    M::State: PartialEq + std::fmt::Debug,
    M::Observation: PartialEq + std::fmt::Debug,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = model.states();
    let observations = model.observations();
    for level in 0..model.num_levels() {
        for s in states.iter().filter(|s| !model.is_terminal(s)) {
            for a in (0..model.num_actions()).map(Action) {
                let cells: Vec<(usize, usize, f64)> = states
                    .iter()
                    .enumerate()
                    .flat_map(|(i, next)| {
                        observations.iter().enumerate().map(move |(j, o)| {
                            (i, j, model.outcome_probability(level, s, a, next, o))
                        })
                    })
                    .collect();
                let total: f64 = cells.iter().map(|c| c.2).sum();
                assert!(
                    (total - 1.0).abs() < 1e-12,
                    "{s:?} {a:?}: table sums to {total}"
                );
                let mut counts = vec![vec![0usize; observations.len()]; states.len()];
                for _ in 0..draws {
                    let noise = NoiseDraw::sample(&mut rng, model.noise_dim());
                    let tr = model.simulate_step(level, s, a, &noise).unwrap();
                    let i = states.iter().position(|x| *x == tr.next_state).unwrap();
                    let j = observations
                        .iter()
                        .position(|x| *x == tr.observation)
                        .unwrap();
                    counts[i][j] += 1;
                }
                let mut chi2 = 0.0;
                let mut dof = 0usize;
                for (i, j, p) in cells {
                    let seen = counts[i][j];
                    if p == 0.0 {
                        assert_eq!(
                            seen, 0,
                            "level {level} {s:?} {a:?}: impossible outcome drawn"
                        );
                        continue;
                    }
                    let expected = p * draws as f64;
                    chi2 += (seen as f64 - expected).powi(2) / expected;
                    dof += 1;
                }
                if dof > 1 {
                    let critical = ChiSquared::new((dof - 1) as f64)
                        .unwrap()
                        .inverse_cdf(0.9999);
                    assert!(
                        chi2 < critical,
                        "level {level} {s:?} {a:?}: chi2 {chi2:.2} over {critical:.2}"
                    );
                }
            }
        }
    }
}

#[test]
fn tiger_simulator_matches_its_table() {
    fits_outcome_table(&Tiger::<f64>::with_levels(2), 20_000, 1);
}

#[test]
fn chain_simulator_matches_its_table() {
    fits_outcome_table(&Chain::<f64>::default(), 20_000, 2);
}

#[test]
fn tiger_and_chain_have_nested_support() {
    assert!(check_support(&Tiger::<f64>::with_levels(3)).is_ok());
    assert!(check_support(&Chain::<f64>::default()).is_ok());
}

#[test]
fn support_violation_is_reported() {
    // A coarse level that never advances cannot produce what the fine one can.
    let chain = Chain::<f64>::new(&ChainConfig {
        advance: vec![0.0, 0.5],
        ..ChainConfig::default()
    })
    .unwrap();
    let violation = check_support(&chain).unwrap_err();
    assert_eq!(violation.level, 0);
    assert_eq!(violation.next.position, violation.state.position + 1);
}

#[test]
fn median_noise_listen_is_truthful() {
    let tiger = Tiger::<f64>::default();
    let noise = NoiseDraw::new(&[0.5]).unwrap();
    let tr = tiger
        .simulate_step(0, &mlpp::problems::TigerState::Left, Action(0), &noise)
        .unwrap();
    assert_eq!(tr.observation, mlpp::problems::TigerObservation::HearLeft);
    assert_eq!(tr.reward, -1.0);
}
