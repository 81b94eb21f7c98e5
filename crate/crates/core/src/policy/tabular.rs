use alloc::vec;
use alloc::vec::Vec;

use super::{resolve_horizon, Policy};
use crate::buffer::RelabeledExample;
use crate::env::finite::state_id;
use crate::{Error, Result};

/// Count-based maximum-likelihood policy over finite state and goal ids.
///
/// `pi(a | s, g[, h]) = (count + smoothing) / sum(count + smoothing)`; a cell
/// with no mass at all is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    state_count: usize,
    action_count: usize,
    horizon_len: Option<usize>,
    smoothing: f64,
    counts: Vec<f64>,
}

impl TabularPolicy {
    pub const DEFAULT_SMOOTHING: f64 = 0.1;

    pub fn new(
        state_count: usize,
        action_count: usize,
        horizon_len: Option<usize>,
        smoothing: f64,
    ) -> Result<Self> {
        if action_count < 2 || state_count == 0 {
            return Err(Error::InvalidConfig(
                "tabular policy needs states and >= 2 actions".into(),
            ));
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidConfig(
                "policy.smoothing must be a non-negative number".into(),
            ));
        }
        let slices = horizon_len.map_or(1, |t| t + 1);
        Ok(Self {
            state_count,
            action_count,
            horizon_len,
            smoothing,
            counts: vec![0.0; state_count * state_count * slices * action_count],
        })
    }

    /// Rebuilds a policy from a raw count table (checkpoint loading).
    pub fn from_counts(
        state_count: usize,
        action_count: usize,
        horizon_len: Option<usize>,
        smoothing: f64,
        counts: Vec<f64>,
    ) -> Result<Self> {
        let mut policy = Self::new(state_count, action_count, horizon_len, smoothing)?;
        if counts.len() != policy.counts.len() {
            return Err(Error::ShapeMismatch {
                expected: policy.counts.len(),
                got: counts.len(),
            });
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "counts must be finite and non-negative".into(),
            ));
        }
        policy.counts = counts;
        Ok(policy)
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn raw_counts(&self) -> &[f64] {
        &self.counts
    }

    fn offset(&self, s: usize, g: usize, h: usize) -> usize {
        let slices = self.horizon_len.map_or(1, |t| t + 1);
        ((s * self.state_count + g) * slices + h) * self.action_count
    }

    fn ids(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
    ) -> Result<(usize, usize, usize)> {
        let h = resolve_horizon(self.horizon_len, horizon)?;
        Ok((
            state_id(state, self.state_count)?,
            state_id(goal, self.state_count)?,
            h,
        ))
    }

    pub fn counts(&self, state: &[f64], goal: &[f64], horizon: Option<usize>) -> Result<&[f64]> {
        let (s, g, h) = self.ids(state, goal, horizon)?;
        let o = self.offset(s, g, h);
        Ok(&self.counts[o..o + self.action_count])
    }

    /// Adds `weight` to the count of `action` in the cell for
    /// `(state, goal[, horizon])`. Negative weights remove earlier
    /// observations; counts are floored at zero.
    pub fn observe(
        &mut self,
        state: &[f64],
        action: usize,
        goal: &[f64],
        horizon: usize,
        weight: f64,
    ) -> Result<()> {
        if action >= self.action_count {
            return Err(Error::InvalidAction {
                index: action,
                count: self.action_count,
            });
        }
        let h = self.horizon_len.map(|_| horizon);
        let (s, g, h) = self.ids(state, goal, h)?;
        let o = self.offset(s, g, h) + action;
        self.counts[o] = (self.counts[o] + weight).max(0.0);
        Ok(())
    }

    /// Closed-form maximum-likelihood fit: every example adds one count.
    pub fn fit<'a>(
        &mut self,
        examples: impl IntoIterator<Item = &'a RelabeledExample>,
    ) -> Result<()> {
        for ex in examples {
            self.observe(&ex.state, ex.action, &ex.goal, ex.horizon, 1.0)?;
        }
        Ok(())
    }
}

impl Policy for TabularPolicy {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn horizon_len(&self) -> Option<usize> {
        self.horizon_len
    }

    fn action_probabilities(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
    ) -> Result<Vec<f64>> {
        let counts = self.counts(state, goal, horizon)?;
        let total: f64 = counts.iter().map(|c| c + self.smoothing).sum();
        if total <= 0.0 {
            return Ok(vec![1.0 / self.action_count as f64; self.action_count]);
        }
        Ok(counts
            .iter()
            .map(|c| (c + self.smoothing) / total)
            .collect())
    }

    fn greedy_action(&self, state: &[f64], goal: &[f64], horizon: Option<usize>) -> Result<usize> {
        // Smoothing is a constant shift, so the raw counts give the same argmax.
        Ok(super::argmax(self.counts(state, goal, horizon)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(s: usize, a: usize, g: usize, h: usize) -> RelabeledExample {
        RelabeledExample {
            state: vec![s as f64],
            action: a,
            goal: vec![g as f64],
            horizon: h,
        }
    }

    #[test]
    fn normalized_counts() {
        let mut p = TabularPolicy::new(2, 2, None, 0.0).unwrap();
        p.fit(&[
            ex(0, 0, 1, 1),
            ex(0, 0, 1, 2),
            ex(0, 0, 1, 1),
            ex(0, 1, 1, 1),
        ])
        .unwrap();
        assert_eq!(
            p.action_probabilities(&[0.0], &[1.0], None).unwrap(),
            vec![0.75, 0.25]
        );
    }

    #[test]
    fn smoothing_on_empty_cell_is_uniform() {
        let p = TabularPolicy::new(3, 2, None, 0.1).unwrap();
        assert_eq!(
            p.action_probabilities(&[0.0], &[2.0], None).unwrap(),
            vec![0.5, 0.5]
        );
        let p = TabularPolicy::new(3, 4, None, 0.0).unwrap();
        assert_eq!(
            p.action_probabilities(&[0.0], &[2.0], None).unwrap(),
            vec![0.25; 4]
        );
    }

    #[test]
    fn time_varying_cells_are_separate() {
        let mut p = TabularPolicy::new(2, 2, Some(3), 0.0).unwrap();
        p.fit(&[ex(0, 0, 1, 1), ex(0, 0, 1, 1), ex(0, 1, 1, 1)])
            .unwrap();
        let probs = p.action_probabilities(&[0.0], &[1.0], Some(1)).unwrap();
        assert!((probs[0] - 2.0 / 3.0).abs() < 1e-15 && (probs[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            p.action_probabilities(&[0.0], &[1.0], Some(2)).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(p.action_probabilities(&[0.0], &[1.0], None).is_err());
    }

    #[test]
    fn negative_weights_undo_observations() {
        let mut p = TabularPolicy::new(2, 2, None, 0.0).unwrap();
        p.observe(&[0.0], 1, &[1.0], 1, 0.5).unwrap();
        p.observe(&[0.0], 1, &[1.0], 1, -0.5).unwrap();
        p.observe(&[0.0], 1, &[1.0], 1, -0.5).unwrap();
        assert_eq!(p.counts(&[0.0], &[1.0], None).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_ids() {
        let mut p = TabularPolicy::new(2, 2, None, 0.1).unwrap();
        assert!(p.action_probabilities(&[2.0], &[0.0], None).is_err());
        assert!(p.action_probabilities(&[0.5], &[0.0], None).is_err());
        assert!(p.observe(&[0.0], 2, &[1.0], 1, 1.0).is_err());
    }
}
