//! Points on the probability simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum-to-one constraint.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// A categorical distribution over `K` classes: nonnegative entries summing
/// to one within [`PROB_SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityDistribution(Vec<f64>);

impl ProbabilityDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Input("distribution must have at least one class".into()));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Input(format!(
                "distribution entries must be finite and nonnegative, got {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Input(format!(
                "distribution sums to {sum}, expected 1 within {PROB_SUM_TOL}"
            )));
        }
        Ok(Self(probs))
    }

    /// Constructor for values already known to satisfy the invariants
    /// (softmax outputs, normalized posteriors).
    pub(crate) fn new_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(!probs.is_empty());
        debug_assert!(probs.iter().all(|&p| p.is_finite() && p >= 0.0));
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= PROB_SUM_TOL);
        Self(probs)
    }

    pub fn uniform(n_classes: usize) -> Self {
        assert!(n_classes > 0, "uniform distribution needs at least one class");
        Self(vec![1.0 / n_classes as f64; n_classes])
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Shannon entropy in nats, with the convention `0 ln 0 = 0`.
    pub fn shannon_entropy(&self) -> f64 {
        shannon_entropy(&self.0)
    }

    /// Index of the largest entry; first index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Shannon entropy of a nonnegative vector in nats, `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    p.iter()
        .map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_vectors() {
        assert!(ProbabilityDistribution::new(vec![]).is_err());
        assert!(ProbabilityDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityDistribution::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn entropy_of_uniform_and_onehot() {
        let u = ProbabilityDistribution::uniform(3);
        assert_relative_eq!(u.shannon_entropy(), 3f64.ln(), epsilon = 1e-12);
        let o = ProbabilityDistribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(o.shannon_entropy(), 0.0);
        assert_eq!(o.argmax(), 0);
    }
}
