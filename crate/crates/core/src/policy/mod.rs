//! Goal-conditioned categorical policies over a discrete action set.

mod adam;
mod horizon;
mod mlp;
mod tabular;

pub use adam::Adam;
pub use horizon::encode_horizon;
pub use mlp::{MlpPolicy, StateEncoder};
pub use tabular::TabularPolicy;

use alloc::vec::Vec;
use rand::RngCore;

use crate::rng::sample_categorical;
use crate::{Error, Result};

/// A policy `pi(a | s, g[, h])`.
///
/// Time-varying policies (`horizon_len() == Some(t_max)`) must be queried with
/// the remaining horizon; time-invariant ones must be queried without it.
pub trait Policy {
    fn action_count(&self) -> usize;

    fn horizon_len(&self) -> Option<usize>;

    fn is_time_varying(&self) -> bool {
        self.horizon_len().is_some()
    }

    fn action_probabilities(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
    ) -> Result<Vec<f64>>;

    fn sample_action(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
        rng: &mut dyn RngCore,
    ) -> Result<usize> {
        let probs = self.action_probabilities(state, goal, horizon)?;
        Ok(sample_categorical(&probs, rng))
    }

    /// Most likely action, lowest index on ties.
    fn greedy_action(&self, state: &[f64], goal: &[f64], horizon: Option<usize>) -> Result<usize> {
        Ok(argmax(&self.action_probabilities(state, goal, horizon)?))
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action_count(&self) -> usize {
        (**self).action_count()
    }
    fn horizon_len(&self) -> Option<usize> {
        (**self).horizon_len()
    }
    fn action_probabilities(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
    ) -> Result<Vec<f64>> {
        (**self).action_probabilities(state, goal, horizon)
    }
    fn greedy_action(&self, state: &[f64], goal: &[f64], horizon: Option<usize>) -> Result<usize> {
        (**self).greedy_action(state, goal, horizon)
    }
}

/// Checks the horizon argument against a policy's conditioning contract and
/// returns the horizon to use (0 for time-invariant policies).
pub(crate) fn resolve_horizon(horizon_len: Option<usize>, horizon: Option<usize>) -> Result<usize> {
    match (horizon_len, horizon) {
        (Some(max), Some(h)) if h <= max => Ok(h),
        (Some(max), Some(h)) => Err(Error::HorizonOutOfRange { horizon: h, max }),
        (Some(_), None) => Err(Error::HorizonRequirement(
            "is time-varying and needs a horizon",
        )),
        (None, Some(_)) => Err(Error::HorizonRequirement(
            "is time-invariant and takes no horizon",
        )),
        (None, None) => Ok(0),
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| libm::exp(z - max)).sum();
    max + libm::log(sum)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&z| libm::exp(z - lse)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4]), 1);
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let p = softmax(&[1000.0, 999.0, 990.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn horizon_contract() {
        assert_eq!(resolve_horizon(None, None), Ok(0));
        assert_eq!(resolve_horizon(Some(5), Some(5)), Ok(5));
        assert!(resolve_horizon(Some(5), Some(6)).is_err());
        assert!(resolve_horizon(Some(5), None).is_err());
        assert!(resolve_horizon(None, Some(1)).is_err());
    }
}
