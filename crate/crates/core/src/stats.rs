//! Streaming and batch summary statistics.

use serde::Serialize;

use crate::scalar::Scalar;

/// Welford accumulator for a running mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RunningStats<F> {
    count: u64,
    mean: F,
    m2: F,
}

impl<F: Scalar> RunningStats<F> {
    pub fn new() -> Self {
        Self {
            count: 0,
            mean: F::zero(),
            m2: F::zero(),
        }
    }

    pub fn push(&mut self, x: F) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / F::from_count(self.count);
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Mean of the pushed values, `None` before the first push.
    pub fn mean(&self) -> Option<F> {
        (self.count > 0).then_some(self.mean)
    }

    /// Unbiased sample variance, `None` with fewer than two samples.
    pub fn variance(&self) -> Option<F> {
        (self.count > 1).then(|| self.m2 / F::from_count(self.count - 1))
    }

    /// Population variance (divides by `n`), `None` when empty.
    pub fn population_variance(&self) -> Option<F> {
        (self.count > 0).then(|| self.m2 / F::from_count(self.count))
    }

    pub fn std_error(&self) -> Option<F> {
        self.variance()
            .map(|v| (v / F::from_count(self.count)).sqrt())
    }
}

impl<F: Scalar> Extend<F> for RunningStats<F> {
    fn extend<I: IntoIterator<Item = F>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

impl<F: Scalar> FromIterator<F> for RunningStats<F> {
    fn from_iter<I: IntoIterator<Item = F>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

/// Sample mean and standard error of a slice.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let s: RunningStats<f64> = xs.iter().copied().collect();
    (
        s.mean().unwrap_or(f64::NAN),
        s.std_error().unwrap_or(f64::NAN),
    )
}

/// Pearson correlation of two equally long samples. `None` if either is constant.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "correlation needs paired samples");
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Two-sided 95% confidence half-width for a mean of `n` samples with standard error `se`.
pub fn ci95_half_width(se: f64, n: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    if n < 2 || !se.is_finite() {
        return f64::NAN;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    t * se
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn empty_and_single() {
        let mut s = RunningStats::<f64>::new();
        assert_eq!(s.mean(), None);
        assert_eq!(s.variance(), None);
        s.push(7.0);
        assert_eq!(s.mean(), Some(7.0));
        assert_eq!(s.variance(), None);
        s.push(3.0);
        assert_eq!(s.mean(), Some(5.0));
        assert_eq!(s.variance(), Some(8.0));
    }

    #[test]
    fn constant_stream_has_zero_variance() {
        let s: RunningStats<f32> = std::iter::repeat_n(2.5f32, 100).collect();
        assert_eq!(s.variance(), Some(0.0));
    }

    #[test]
    fn correlation_of_linear_pair_is_one() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((correlation(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(correlation(&xs, &[1.0; 10]), None);
    }

    #[test]
    fn ci_uses_student_t() {
        // t_{0.975, 9} = 2.262157
        assert!((ci95_half_width(1.0, 10) - 2.262157).abs() < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn welford_matches_two_pass(xs in prop::collection::vec(-1e4f64..1e4, 2..200)) {
            let s: RunningStats<f64> = xs.iter().copied().collect();
            let reference = two_pass(&xs);
            let got = s.variance().unwrap();
            prop_assert!((got - reference).abs() <= 1e-9 * reference.abs().max(1e-9));
        }
    }
}
