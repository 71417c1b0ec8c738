//! Weighted particle beliefs and sampling-importance-resampling updates.

use num_traits::{Float, One, Zero};
use rand::Rng;
use thiserror::Error;

use crate::model::{Action, NoiseDraw, PomdpModel};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("belief has no particles")]
    Empty,
    #[error("weights must be non-negative with a positive finite sum")]
    InvalidWeights,
    #[error("particle depletion: every particle has zero observation likelihood")]
    Depleted,
}

/// Particle approximation of `b(s, h)`.
#[derive(Clone, Debug)]
pub struct ParticleBelief<S, F> {
    particles: Vec<S>,
    weights: Vec<F>,
    cumulative: Vec<F>,
    capacity: usize,
}

/// How a belief update was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateStatus {
    Normal,
    /// Recovered by reinjecting particles propagated with inflated noise.
    Reinjected,
    /// Still depleted after reinjection; propagated prior kept with uniform weights.
    Unweighted,
}

impl<S: Clone, F: Scalar> ParticleBelief<S, F> {
    /// Equally weighted belief over `particles`, with capacity `particles.len()`.
    pub fn uniform(particles: Vec<S>) -> Result<Self, BeliefError> {
        let n = particles.len();
        if n == 0 {
            return Err(BeliefError::Empty);
        }
        Self::weighted(particles, vec![F::one(); n])
    }

    /// Belief with the given (unnormalised) weights.
    pub fn weighted(particles: Vec<S>, weights: Vec<F>) -> Result<Self, BeliefError> {
        if particles.is_empty() {
            return Err(BeliefError::Empty);
        }
        if weights.len() != particles.len() || weights.iter().any(|w| !(*w >= F::zero())) {
            return Err(BeliefError::InvalidWeights);
        }
        let total: F = weights.iter().copied().sum();
        if !(total > F::zero()) || !total.is_finite() {
            return Err(BeliefError::InvalidWeights);
        }
        let weights: Vec<F> = weights.into_iter().map(|w| w / total).collect();
        let mut acc = F::zero();
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += *w;
                acc
            })
            .collect();
        let capacity = particles.len();
        Ok(Self {
            particles,
            weights,
            cumulative,
            capacity,
        })
    }

    /// `count` particles drawn independently with `draw`.
    pub fn from_sampler(count: usize, mut draw: impl FnMut() -> S) -> Result<Self, BeliefError> {
        Self::uniform((0..count).map(|_| draw()).collect())
    }

    /// Restricts the belief to particles matching `keep`, renormalising their
    /// weights. `None` if no particle matches.
    pub fn condition(&self, keep: impl Fn(&S) -> bool) -> Option<Self> {
        let (particles, weights): (Vec<S>, Vec<F>) = self
            .iter()
            .filter(|(s, _)| keep(s))
            .map(|(s, w)| (s.clone(), w))
            .unzip();
        Self::weighted(particles, weights)
            .ok()
            .map(|b| b.with_capacity(self.capacity))
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, F)> {
        self.particles.iter().zip(self.weights.iter().copied())
    }

    /// Returns particle `i` with probability `weight_i`.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&S, BeliefError> {
        if self.particles.is_empty() {
            return Err(BeliefError::Empty);
        }
        let u = F::lit(rng.random::<f64>());
        let i = self.cumulative.partition_point(|c| *c <= u);
        Ok(&self.particles[i.min(self.particles.len() - 1)])
    }

    /// Probability mass the belief puts on states matching `pred`.
    pub fn probability(&self, pred: impl Fn(&S) -> bool) -> F {
        self.iter().filter(|(s, _)| pred(s)).map(|(_, w)| w).sum()
    }

    fn resample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<S> {
        // Systematic resampling: one uniform offset, evenly spaced pointers.
        let n = F::from_count(count as u64);
        let offset = F::lit(rng.random::<f64>());
        let mut out = Vec::with_capacity(count);
        let mut i = 0;
        for k in 0..count {
            let u = (F::from_count(k as u64) + offset) / n;
            while i + 1 < self.cumulative.len() && self.cumulative[i] <= u {
                i += 1;
            }
            out.push(self.particles[i].clone());
        }
        out
    }
}

/// One SIR step: propagate every particle through the reference model with
/// fresh noise, weight by `p(o | s', a)`, and resample `capacity` particles.
pub fn sir_update<M, R>(
    belief: &ParticleBelief<M::State, M::Scalar>,
    action: Action,
    observation: &M::Observation,
    model: &M,
    rng: &mut R,
) -> Result<ParticleBelief<M::State, M::Scalar>, BeliefError>
where
    M: PomdpModel,
    R: Rng + ?Sized,
{
    let (propagated, weights) =
        propagate_and_weight(belief, action, observation, model, M::Scalar::one(), rng);
    let weighted = ParticleBelief::weighted(propagated, weights).map_err(|e| match e {
        BeliefError::InvalidWeights => BeliefError::Depleted,
        other => other,
    })?;
    let resampled = weighted.resample(belief.capacity(), rng);
    Ok(ParticleBelief::uniform(resampled)?.with_capacity(belief.capacity()))
}

/// [`sir_update`] with depletion recovery. On depletion the prior is
/// propagated again with noise scales doubled and reweighted; if that also
/// fails the first propagated particle set is kept with uniform weights.
pub fn sir_update_with_recovery<M, R>(
    belief: &ParticleBelief<M::State, M::Scalar>,
    action: Action,
    observation: &M::Observation,
    model: &M,
    rng: &mut R,
) -> Result<(ParticleBelief<M::State, M::Scalar>, UpdateStatus), BeliefError>
where
    M: PomdpModel,
    R: Rng + ?Sized,
{
    let one = M::Scalar::one();
    let (first, weights) = propagate_and_weight(belief, action, observation, model, one, rng);
    if let Ok(w) = ParticleBelief::weighted(first.clone(), weights) {
        let resampled = w.resample(belief.capacity(), rng);
        return Ok((
            ParticleBelief::uniform(resampled)?.with_capacity(belief.capacity()),
            UpdateStatus::Normal,
        ));
    }
    let inflated = M::Scalar::lit(2.0);
    let (second, weights) = propagate_and_weight(belief, action, observation, model, inflated, rng);
    if let Ok(w) = ParticleBelief::weighted(second, weights) {
        log::warn!("particle depletion; recovered by reinjecting particles with inflated noise");
        let resampled = w.resample(belief.capacity(), rng);
        return Ok((
            ParticleBelief::uniform(resampled)?.with_capacity(belief.capacity()),
            UpdateStatus::Reinjected,
        ));
    }
    log::warn!("particle depletion persists; keeping propagated particles unweighted");
    Ok((
        ParticleBelief::uniform(first)?.with_capacity(belief.capacity()),
        UpdateStatus::Unweighted,
    ))
}

fn propagate_and_weight<M, R>(
    belief: &ParticleBelief<M::State, M::Scalar>,
    action: Action,
    observation: &M::Observation,
    model: &M,
    noise_scale: M::Scalar,
    rng: &mut R,
) -> (Vec<M::State>, Vec<M::Scalar>)
where
    M: PomdpModel,
    R: Rng + ?Sized,
{
    let top = model.max_level();
    let n = belief.capacity();
    let mut states = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let s = belief
            .sample_state(rng)
            .expect("belief invariant: never empty");
        let noise = NoiseDraw::sample(rng, model.noise_dim());
        let next = model
            .transition(top, s, action, &noise, noise_scale)
            .next_state;
        let w = model.observation_likelihood(action, &next, observation);
        weights.push(if w.is_finite() { w } else { M::Scalar::zero() });
        states.push(next);
    }
    (states, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_particle_always_sampled() {
        let b = ParticleBelief::<u8, f64>::uniform(vec![42]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(*b.sample_state(&mut rng).unwrap(), 42);
        }
    }

    #[test]
    fn weighted_sampling_frequencies() {
        let b = ParticleBelief::<u8, f64>::weighted(vec![0, 1], vec![0.25, 0.75]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| *b.sample_state(&mut rng).unwrap() == 1)
            .count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn uniform_sampling_within_binomial_bound() {
        let k = 5;
        let b = ParticleBelief::<usize, f32>::uniform((0..k).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50_000;
        let mut counts = vec![0usize; k];
        for _ in 0..n {
            counts[*b.sample_state(&mut rng).unwrap()] += 1;
        }
        let p = 1.0 / k as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - p).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn rejects_bad_weights() {
        assert_eq!(
            ParticleBelief::<u8, f64>::uniform(vec![]).unwrap_err(),
            BeliefError::Empty
        );
        assert_eq!(
            ParticleBelief::<u8, f64>::weighted(vec![1, 2], vec![0.0, 0.0]).unwrap_err(),
            BeliefError::InvalidWeights
        );
        assert_eq!(
            ParticleBelief::<u8, f64>::weighted(vec![1, 2], vec![-1.0, 2.0]).unwrap_err(),
            BeliefError::InvalidWeights
        );
    }

    #[test]
    fn weights_are_normalised() {
        let b = ParticleBelief::<u8, f64>::weighted(vec![1, 2, 3], vec![2.0, 3.0, 5.0]).unwrap();
        let total: f64 = b.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((b.probability(|s| *s >= 2) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn systematic_resampling_preserves_proportions() {
        let b = ParticleBelief::<u8, f64>::weighted(vec![0, 1], vec![0.3, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = b.resample(1000, &mut rng);
        let ones = out.iter().filter(|s| **s == 1).count();
        assert!((699..=701).contains(&ones));
    }
}
