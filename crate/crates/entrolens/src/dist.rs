//! Probability and uncertainty primitives.
//!
//! Everything downstream — rewards, the toy lab, the diagnostic chain —
//! consumes per-step distributions only through the two summary statistics
//! in [`StepStats`]: Shannon entropy and collision mass. Both are computed
//! in nats.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute tolerance on the total probability mass of a [`ProbVector`].
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Probabilities below this threshold are dropped from entropy sums rather
/// than clamped up, implementing the `0 * ln 0 = 0` convention without
/// biasing the total.
pub const LOG_FLOOR: f64 = 1e-300;

/// Tolerance for the cross-check between Shannon entropy and the Rényi-2
/// entropy implied by the collision mass.
pub const STATS_CONSISTENCY_TOLERANCE: f64 = 1e-9;

/// A validated categorical distribution over a vocabulary.
///
/// Construction enforces: non-empty, every entry finite and non-negative,
/// and total mass within [`PROB_SUM_TOLERANCE`] of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("probability vector"));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    what: "probability",
                    value,
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::NotNormalized {
                sum,
                tolerance: PROB_SUM_TOLERANCE,
            });
        }
        Ok(Self { probs })
    }

    /// Uniform distribution over `n` outcomes.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("probability vector"));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        // Invariant: construction rejects empty vectors.
        false
    }

    /// Both summary statistics of this distribution.
    pub fn stats(&self) -> StepStats {
        StepStats::from_dist(self)
    }
}

/// Converts raw logits to a distribution via a temperature-scaled softmax.
///
/// Uses the max-shift trick, so arbitrarily large logits are safe; the
/// temperature must be finite and strictly positive.
pub fn from_logits(logits: &[f64], temperature: f64) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("logits"));
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidTemperature(temperature));
    }
    for &value in logits {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "logit",
                value,
            });
        }
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits
        .iter()
        .map(|&l| ((l - max) / temperature).exp())
        .collect();
    let sum: f64 = scaled.iter().sum();
    ProbVector::new(scaled.into_iter().map(|e| e / sum).collect())
}

/// Shannon entropy in nats: `-sum_v p_v ln p_v`, with entries below
/// [`LOG_FLOOR`] contributing zero.
pub fn shannon_entropy(p: &ProbVector) -> f64 {
    let mut total = 0.0;
    for &v in p.probs() {
        if v >= LOG_FLOOR {
            total -= v * v.ln();
        }
    }
    total
}

/// Collision mass `sum_v p_v^2`, the probability that two independent draws
/// agree. Its negative log is the Rényi-2 entropy.
pub fn collision_mass(p: &ProbVector) -> f64 {
    p.probs().iter().map(|&v| v * v).sum()
}

/// Per-step uncertainty statistics consumed by the reward definitions.
///
/// Invariants enforced at construction: both values finite, `shannon >= 0`,
/// `collision` in `(0, 1]`, and the Rényi bound
/// `-ln(collision) <= shannon` (within [`STATS_CONSISTENCY_TOLERANCE`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    shannon: f64,
    collision: f64,
}

impl StepStats {
    pub fn new(shannon: f64, collision: f64) -> Result<Self> {
        if !shannon.is_finite() {
            return Err(Error::NonFinite {
                what: "shannon entropy",
                value: shannon,
            });
        }
        if !collision.is_finite() {
            return Err(Error::NonFinite {
                what: "collision mass",
                value: collision,
            });
        }
        if shannon < -STATS_CONSISTENCY_TOLERANCE {
            return Err(Error::InvalidParam(format!(
                "shannon entropy must be >= 0, got {shannon}"
            )));
        }
        if collision <= 0.0 || collision > 1.0 + STATS_CONSISTENCY_TOLERANCE {
            return Err(Error::InvalidParam(format!(
                "collision mass must lie in (0, 1], got {collision}"
            )));
        }
        let shannon = shannon.max(0.0);
        let collision = collision.min(1.0);
        if -collision.ln() > shannon + STATS_CONSISTENCY_TOLERANCE {
            return Err(Error::InconsistentStats { shannon, collision });
        }
        Ok(Self { shannon, collision })
    }

    pub fn from_dist(p: &ProbVector) -> Self {
        // Computed from a valid distribution, so the invariants hold up to
        // float rounding well inside the consistency tolerance.
        Self {
            shannon: shannon_entropy(p).max(0.0),
            collision: collision_mass(p).min(1.0),
        }
    }

    pub fn shannon(&self) -> f64 {
        self.shannon
    }

    pub fn collision(&self) -> f64 {
        self.collision
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn uniform_four_entropy_is_ln4() {
        let p = ProbVector::uniform(4).unwrap();
        close(shannon_entropy(&p), 4f64.ln(), 1e-12);
        close(shannon_entropy(&p), 1.386294, 1e-6);
    }

    #[test]
    fn skewed_pair_fixture() {
        // Independent check: the same sum accumulated in reverse index
        // order must agree to float precision, and both match the
        // hand-derived closed form -(0.75 ln 0.75 + 0.25 ln 0.25).
        let p = ProbVector::new(vec![0.75, 0.25]).unwrap();
        let forward = shannon_entropy(&p);
        let reverse: f64 = p.probs().iter().rev().map(|&v| -v * v.ln()).sum();
        close(forward, reverse, 1e-12);
        close(forward, 0.562335, 1e-6);
        close(collision_mass(&p), 0.625, 1e-12);
    }

    #[test]
    fn one_hot_is_exactly_degenerate() {
        let p = ProbVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(shannon_entropy(&p), 0.0);
        assert_eq!(collision_mass(&p), 1.0);
        let s = p.stats();
        assert_eq!(s.shannon(), 0.0);
        assert_eq!(s.collision(), 1.0);
    }

    #[test]
    fn tiny_probabilities_are_dropped_from_the_log() {
        // 1e-320 is subnormal; ln would be a large negative number but the
        // entry is below the floor, so it contributes exactly zero.
        let p = ProbVector::new(vec![1.0 - 1e-320, 1e-320]).unwrap();
        assert_eq!(shannon_entropy(&p), -(1.0 - 1e-320f64) * (1.0 - 1e-320f64).ln());
        assert!(shannon_entropy(&p).abs() < 1e-15);
    }

    #[test]
    fn from_logits_fixture() {
        let p = from_logits(&[3f64.ln(), 0.0], 1.0).unwrap();
        close(p.probs()[0], 0.75, 1e-12);
        close(p.probs()[1], 0.25, 1e-12);
    }

    #[test]
    fn from_logits_large_values_are_stable() {
        let p = from_logits(&[1000.0, 999.0, 998.0], 1.0).unwrap();
        assert!(p.probs().iter().all(|v| v.is_finite()));
        let q = from_logits(&[0.0, -1.0, -2.0], 1.0).unwrap();
        for (a, b) in p.probs().iter().zip(q.probs()) {
            close(*a, *b, 1e-12);
        }
    }

    #[test]
    fn temperature_sharpens_and_flattens() {
        let logits = [2.0, 1.0, 0.0, -1.0];
        let sharp = from_logits(&logits, 0.25).unwrap();
        let base = from_logits(&logits, 1.0).unwrap();
        let flat = from_logits(&logits, 4.0).unwrap();
        assert!(shannon_entropy(&sharp) < shannon_entropy(&base));
        assert!(shannon_entropy(&base) < shannon_entropy(&flat));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(
            ProbVector::new(vec![]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            ProbVector::new(vec![0.5, 0.6]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            ProbVector::new(vec![1.2, -0.2]),
            Err(Error::NegativeProbability { index: 1, .. })
        ));
        assert!(matches!(
            ProbVector::new(vec![f64::NAN, 1.0]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            from_logits(&[0.0, 1.0], 0.0),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            from_logits(&[0.0, 1.0], -1.0),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            from_logits(&[f64::INFINITY, 1.0], 1.0),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            from_logits(&[], 1.0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn step_stats_rejects_inconsistent_pairs() {
        // Collision mass 0.25 implies Rényi-2 entropy ln 4 ≈ 1.386, which
        // cannot exceed the Shannon entropy; 0.5 nats is inconsistent.
        assert!(matches!(
            StepStats::new(0.5, 0.25),
            Err(Error::InconsistentStats { .. })
        ));
        assert!(StepStats::new(4f64.ln(), 0.25).is_ok());
        assert!(matches!(
            StepStats::new(-1.0, 0.5),
            Err(Error::InvalidParam(_))
        ));
        assert!(matches!(
            StepStats::new(1.0, 0.0),
            Err(Error::InvalidParam(_))
        ));
        assert!(matches!(
            StepStats::new(1.0, 1.5),
            Err(Error::InvalidParam(_))
        ));
        assert!(matches!(
            StepStats::new(f64::NAN, 0.5),
            Err(Error::NonFinite { .. })
        ));
    }

    fn arb_dist() -> impl Strategy<Value = ProbVector> {
        proptest::collection::vec(1e-3..10.0f64, 1..40).prop_map(|raw| {
            let sum: f64 = raw.iter().sum();
            ProbVector::new(raw.into_iter().map(|v| v / sum).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn entropy_bounds_hold(p in arb_dist()) {
            let h = shannon_entropy(&p);
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= (p.len() as f64).ln() + 1e-9);
        }

        #[test]
        fn collision_bounds_hold(p in arb_dist()) {
            let c = collision_mass(&p);
            prop_assert!(c > 0.0);
            prop_assert!(c <= 1.0 + 1e-12);
            prop_assert!(c >= 1.0 / p.len() as f64 - 1e-12);
        }

        #[test]
        fn renyi_never_exceeds_shannon(p in arb_dist()) {
            // H_2 <= H_1 for every distribution; StepStats::new re-checks
            // the same inequality, so construction must succeed.
            let s = p.stats();
            prop_assert!(-s.collision().ln() <= s.shannon() + 1e-9);
            prop_assert!(StepStats::new(s.shannon(), s.collision()).is_ok());
        }

        #[test]
        fn summation_order_does_not_matter(p in arb_dist()) {
            let forward = shannon_entropy(&p);
            let reverse: f64 = p.probs().iter().rev()
                .filter(|v| **v >= LOG_FLOOR)
                .map(|&v| -v * v.ln())
                .sum();
            prop_assert!((forward - reverse).abs() <= 1e-12);
        }

        #[test]
        fn softmax_then_stats_is_consistent(
            logits in proptest::collection::vec(-30.0..30.0f64, 1..40),
            temperature in 0.05..5.0f64,
        ) {
            let p = from_logits(&logits, temperature).unwrap();
            let sum: f64 = p.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() <= PROB_SUM_TOLERANCE);
            let s = p.stats();
            prop_assert!(s.shannon() >= 0.0);
            prop_assert!(-s.collision().ln() <= s.shannon() + 1e-9);
        }
    }
}
