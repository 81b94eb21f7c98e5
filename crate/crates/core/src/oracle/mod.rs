//! Exact computations on small finite MDPs: reach probabilities, the
//! goal-reaching and relabeled objectives, total-variation distances, and
//! the relabel-optimal and DP-optimal policies.
//!
//! Policies here are explicit tables over `(state, goal, h)` where `h` is
//! the remaining horizon, so step `t` of an episode reads row `h = T - t`.

mod checks;
mod optimal;
mod suite;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::env::finite::state_id;
use crate::env::FiniteMdp;
use crate::policy::Policy;
use crate::{Error, Result};

pub use checks::{
    check_gcsl_lower_bound, check_performance_bound, gap_terms, perturb_policy, BoundReport,
    GapTerms, PerformanceReport, PerformanceRow, TOLERANCE,
};
pub use optimal::{
    expert_demonstrations, optimal_reach_policy, relabel_optimal_policy, OptimalPolicy,
};
pub use suite::{
    instance_seed, random_instance, run_bound_suite, run_performance_suite, Instance, SuiteOptions,
    DEFAULT_INSTANCES, PERFORMANCE_EPSILONS,
};

/// Largest number of action sequences enumerated per goal.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Row tolerance for probability tables.
pub const ROW_TOLERANCE: f64 = 1e-12;

/// Explicit action distributions for every `(state, goal, h)`, `h` in `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDistributionPolicy {
    state_count: usize,
    action_count: usize,
    horizon: usize,
    table: Vec<f64>,
}

impl TabularDistributionPolicy {
    pub fn uniform(state_count: usize, action_count: usize, horizon: usize) -> Self {
        let n = state_count * state_count * horizon;
        Self {
            state_count,
            action_count,
            horizon,
            table: vec![1.0 / action_count as f64; n * action_count],
        }
    }

    pub fn for_mdp(mdp: &FiniteMdp) -> Self {
        Self::uniform(mdp.state_count(), mdp.action_count(), mdp.horizon())
    }

    pub fn from_fn(
        state_count: usize,
        action_count: usize,
        horizon: usize,
        mut row: impl FnMut(usize, usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::uniform(state_count, action_count, horizon);
        for s in 0..state_count {
            for g in 0..state_count {
                for h in 1..=horizon {
                    p.set_row(s, g, h, &row(s, g, h))?;
                }
            }
        }
        Ok(p)
    }

    /// Independent flat-Dirichlet rows; every entry is strictly positive.
    pub fn random_full_support(
        state_count: usize,
        action_count: usize,
        horizon: usize,
        rng: &mut dyn RngCore,
    ) -> Self {
        let mut p = Self::uniform(state_count, action_count, horizon);
        for row in p.table.chunks_mut(action_count) {
            random_simplex_point(row, rng);
        }
        p
    }

    /// Full-support random rows that ignore the goal: `row(s, g, h)` is the
    /// same for every `g`.
    pub fn random_goal_independent(
        state_count: usize,
        action_count: usize,
        horizon: usize,
        rng: &mut dyn RngCore,
    ) -> Self {
        let mut p = Self::uniform(state_count, action_count, horizon);
        let mut row = vec![0.0; action_count];
        for s in 0..state_count {
            for h in 1..=horizon {
                random_simplex_point(&mut row, rng);
                for g in 0..state_count {
                    let i = p.index(s, g, h);
                    p.table[i..i + action_count].copy_from_slice(&row);
                }
            }
        }
        p
    }

    /// Tabulates any policy on the MDP's state encoding. Time-invariant
    /// policies get the same row at every `h`.
    pub fn from_policy<P: Policy + ?Sized>(policy: &P, mdp: &FiniteMdp) -> Result<Self> {
        let tv = policy.is_time_varying();
        Self::from_fn(
            mdp.state_count(),
            mdp.action_count(),
            mdp.horizon(),
            |s, g, h| {
                policy
                    .action_probabilities(&mdp.state_vec(s), &mdp.state_vec(g), tv.then_some(h))
                    .unwrap_or_default()
            },
        )
    }

    /// One-hot table of a policy's greedy choices.
    pub fn greedy_of<P: Policy + ?Sized>(policy: &P, mdp: &FiniteMdp) -> Result<Self> {
        let tv = policy.is_time_varying();
        let a_count = mdp.action_count();
        Self::from_fn(mdp.state_count(), a_count, mdp.horizon(), |s, g, h| {
            let mut row = vec![0.0; a_count];
            if let Ok(a) =
                policy.greedy_action(&mdp.state_vec(s), &mdp.state_vec(g), tv.then_some(h))
            {
                row[a] = 1.0;
            }
            row
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn index(&self, state: usize, goal: usize, h: usize) -> usize {
        debug_assert!(h >= 1 && h <= self.horizon);
        ((state * self.state_count + goal) * self.horizon + (h - 1)) * self.action_count
    }

    pub fn row(&self, state: usize, goal: usize, h: usize) -> &[f64] {
        let i = self.index(state, goal, h);
        &self.table[i..i + self.action_count]
    }

    /// Overwrites one row without renormalizing. Use [`validate`](Self::validate)
    /// to check the result.
    pub fn set_row(&mut self, state: usize, goal: usize, h: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.action_count {
            return Err(Error::ShapeMismatch {
                expected: self.action_count,
                got: row.len(),
            });
        }
        if state >= self.state_count || goal >= self.state_count || h == 0 || h > self.horizon {
            return Err(Error::InvalidState(format!(
                "cell ({state}, {goal}, {h}) is outside the table"
            )));
        }
        let i = self.index(state, goal, h);
        self.table[i..i + self.action_count].copy_from_slice(row);
        Ok(())
    }

    /// `log pi(a | s, g, h)`.
    pub fn log_prob(&self, state: usize, action: usize, goal: usize, h: usize) -> f64 {
        libm::log(self.row(state, goal, h)[action])
    }

    /// Every row is a distribution to within [`ROW_TOLERANCE`].
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.table.chunks(self.action_count).enumerate() {
            let sum: f64 = row.iter().sum();
            if row
                .iter()
                .any(|&p| !(0.0..=1.0 + ROW_TOLERANCE).contains(&p))
                || (sum - 1.0).abs() > ROW_TOLERANCE
            {
                let h = i % self.horizon + 1;
                let g = (i / self.horizon) % self.state_count;
                let s = i / (self.horizon * self.state_count);
                return Err(Error::InvalidDistribution(format!(
                    "row (s={s}, g={g}, h={h}) sums to {sum}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_full_support(&self) -> bool {
        self.table.iter().all(|&p| p > 0.0)
    }

    fn check_mdp(&self, mdp: &FiniteMdp) -> Result<()> {
        let want = (mdp.state_count(), mdp.action_count(), mdp.horizon());
        let got = (self.state_count, self.action_count, self.horizon);
        if want != got {
            return Err(Error::InvalidConfig(format!(
                "policy table (S, A, T) = {got:?} does not match the MDP's {want:?}"
            )));
        }
        Ok(())
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.table.chunks(self.action_count)
    }
}

impl Policy for TabularDistributionPolicy {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn horizon_len(&self) -> Option<usize> {
        Some(self.horizon)
    }

    fn action_probabilities(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
    ) -> Result<Vec<f64>> {
        let s = state_id(state, self.state_count)?;
        let g = state_id(goal, self.state_count)?;
        match horizon {
            Some(h) if (1..=self.horizon).contains(&h) => Ok(self.row(s, g, h).to_vec()),
            Some(h) => Err(Error::HorizonOutOfRange {
                horizon: h,
                max: self.horizon,
            }),
            None => Err(Error::HorizonRequirement(
                "is time-varying and needs a horizon",
            )),
        }
    }
}

fn random_simplex_point(row: &mut [f64], rng: &mut dyn RngCore) {
    for x in row.iter_mut() {
        let u: f64 = rng.random();
        *x = (-libm::log(1.0 - u)).max(1e-12);
    }
    let sum: f64 = row.iter().sum();
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Half the L1 distance between two distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Largest per-cell total variation between two policy tables.
pub fn tv_alpha(pi: &TabularDistributionPolicy, pi_old: &TabularDistributionPolicy) -> Result<f64> {
    if pi.table.len() != pi_old.table.len() || pi.action_count != pi_old.action_count {
        return Err(Error::ShapeMismatch {
            expected: pi_old.table.len(),
            got: pi.table.len(),
        });
    }
    Ok(pi
        .rows()
        .zip(pi_old.rows())
        .map(|(a, b)| total_variation(a, b))
        .fold(0.0, f64::max))
}

/// `P(s_T = goal)` by propagating the state distribution forward.
pub fn exact_reach_probability(
    policy: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
    goal: usize,
) -> Result<f64> {
    Ok(final_state_distribution(policy, mdp, goal)?[goal])
}

/// Distribution of `s_T` when commanding `goal`.
pub fn final_state_distribution(
    policy: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
    goal: usize,
) -> Result<Vec<f64>> {
    policy.check_mdp(mdp)?;
    let (n, t_max) = (mdp.state_count(), mdp.horizon());
    if goal >= n {
        return Err(Error::InvalidState(format!("goal {goal} is not a state")));
    }
    let mut dist = vec![0.0; n];
    for &(s, p) in mdp.initial_distribution() {
        dist[s] += p;
    }
    for t in 0..t_max {
        let mut next = vec![0.0; n];
        for (s, &ps) in dist.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            for (a, &pa) in policy.row(s, goal, t_max - t).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for &(s2, pt) in mdp.transition(s, a) {
                    next[s2] += ps * pa * pt;
                }
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// Goal-reaching objective: `sum_g p(g) P(s_T = g)`.
pub fn exact_j(policy: &TabularDistributionPolicy, mdp: &FiniteMdp) -> Result<f64> {
    let mut total = 0.0;
    for (g, &pg) in mdp.goal_distribution().iter().enumerate() {
        if pg > 0.0 {
            total += pg * exact_reach_probability(policy, mdp, g)?;
        }
    }
    Ok(total)
}

/// One complete trajectory with its probability under the enumerating policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedTrajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub probability: f64,
    /// `log p(s_0) + sum_t log P(s_{t+1} | s_t, a_t)`.
    pub dynamics_log_prob: f64,
}

impl EnumeratedTrajectory {
    pub fn final_state(&self) -> usize {
        self.states[self.states.len() - 1]
    }

    /// `sum_t log pi(a_t | s_t, goal, T - t)`.
    pub fn action_log_likelihood(&self, pi: &TabularDistributionPolicy, goal: usize) -> f64 {
        let t_max = self.actions.len();
        (0..t_max)
            .map(|t| pi.log_prob(self.states[t], self.actions[t], goal, t_max - t))
            .sum()
    }

    /// `log pi(tau | g)` including the start and transition terms.
    pub fn log_likelihood(&self, pi: &TabularDistributionPolicy, goal: usize) -> f64 {
        self.dynamics_log_prob + self.action_log_likelihood(pi, goal)
    }
}

/// All trajectories of positive probability when commanding one goal.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnumeration {
    pub goal: usize,
    pub trajectories: Vec<EnumeratedTrajectory>,
}

impl TrajectoryEnumeration {
    pub fn total_probability(&self) -> f64 {
        self.trajectories.iter().map(|t| t.probability).sum()
    }

    pub fn reach_probability(&self) -> f64 {
        self.trajectories
            .iter()
            .filter(|t| t.final_state() == self.goal)
            .map(|t| t.probability)
            .sum()
    }
}

/// Number of branches a full enumeration may visit.
pub fn enumeration_size(mdp: &FiniteMdp) -> u128 {
    let max_branch = (0..mdp.state_count())
        .flat_map(|s| (0..mdp.action_count()).map(move |a| (s, a)))
        .map(|(s, a)| mdp.transition(s, a).len())
        .max()
        .unwrap_or(1) as u128;
    let per_step = mdp.action_count() as u128 * max_branch;
    let starts = mdp.initial_distribution().len() as u128;
    (0..mdp.horizon()).fold(starts, |acc, _| acc.saturating_mul(per_step))
}

pub fn enumerate_trajectories(
    policy: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
    goal: usize,
) -> Result<TrajectoryEnumeration> {
    policy.check_mdp(mdp)?;
    let needed = enumeration_size(mdp);
    if needed > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            needed,
            budget: ENUMERATION_BUDGET,
        });
    }
    let t_max = mdp.horizon();
    let mut out = Vec::new();
    let mut states = Vec::with_capacity(t_max + 1);
    let mut actions = Vec::with_capacity(t_max);
    for &(s0, p0) in mdp.initial_distribution() {
        if p0 > 0.0 {
            states.push(s0);
            expand(
                policy,
                mdp,
                goal,
                &mut states,
                &mut actions,
                p0,
                libm::log(p0),
                &mut out,
            );
            states.pop();
        }
    }
    Ok(TrajectoryEnumeration {
        goal,
        trajectories: out,
    })
}

#[allow(clippy::too_many_arguments)]
fn expand(
    policy: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
    goal: usize,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    prob: f64,
    dyn_log: f64,
    out: &mut Vec<EnumeratedTrajectory>,
) {
    let t = actions.len();
    if t == mdp.horizon() {
        out.push(EnumeratedTrajectory {
            states: states.clone(),
            actions: actions.clone(),
            probability: prob,
            dynamics_log_prob: dyn_log,
        });
        return;
    }
    let s = states[t];
    for (a, &pa) in policy.row(s, goal, mdp.horizon() - t).iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        actions.push(a);
        for &(s2, pt) in mdp.transition(s, a) {
            if pt > 0.0 {
                states.push(s2);
                expand(
                    policy,
                    mdp,
                    goal,
                    states,
                    actions,
                    prob * pa * pt,
                    dyn_log + libm::log(pt),
                    out,
                );
                states.pop();
            }
        }
        actions.pop();
    }
}

/// The trajectory distribution of a data-collection policy, enumerated for
/// every goal with positive probability.
#[derive(Debug, Clone)]
pub struct DataDistribution {
    pub horizon: usize,
    /// `(goal, p(goal), trajectories commanded toward goal)`.
    pub per_goal: Vec<(usize, f64, TrajectoryEnumeration)>,
}

impl DataDistribution {
    pub fn enumerate(pi_old: &TabularDistributionPolicy, mdp: &FiniteMdp) -> Result<Self> {
        let mut per_goal = Vec::new();
        for (g, &pg) in mdp.goal_distribution().iter().enumerate() {
            if pg > 0.0 {
                per_goal.push((g, pg, enumerate_trajectories(pi_old, mdp, g)?));
            }
        }
        Ok(Self {
            horizon: mdp.horizon(),
            per_goal,
        })
    }

    /// Iterates `(commanded goal, joint probability p(g) pi_old(tau | g), tau)`.
    pub fn weighted(&self) -> impl Iterator<Item = (usize, f64, &EnumeratedTrajectory)> {
        self.per_goal.iter().flat_map(|(g, pg, e)| {
            e.trajectories
                .iter()
                .map(move |tr| (*g, pg * tr.probability, tr))
        })
    }

    /// `E[sum_t log pi(a_t | s_t, s_T, T - t)]`.
    pub fn j_gcsl(&self, pi: &TabularDistributionPolicy) -> f64 {
        self.weighted()
            .map(|(_, w, tr)| w * tr.action_log_likelihood(pi, tr.final_state()))
            .sum()
    }

    /// `E[1[s_T = g] log pi(tau | g)]`.
    pub fn j_surr(&self, pi: &TabularDistributionPolicy) -> f64 {
        self.weighted()
            .filter(|(g, _, tr)| tr.final_state() == *g)
            .map(|(g, w, tr)| w * tr.log_likelihood(pi, g))
            .sum()
    }

    /// `E[log pi(tau | s_T)]`: full trajectory likelihood under the reached goal.
    pub fn relabeled_log_likelihood(&self, pi: &TabularDistributionPolicy) -> f64 {
        self.weighted()
            .map(|(_, w, tr)| w * tr.log_likelihood(pi, tr.final_state()))
            .sum()
    }

    /// `E[log p(s_0) + sum_t log P(s_{t+1} | s_t, a_t)]`.
    pub fn dynamics_log_term(&self) -> f64 {
        self.weighted()
            .map(|(_, w, tr)| w * tr.dynamics_log_prob)
            .sum()
    }

    pub fn success_probability(&self) -> f64 {
        self.weighted()
            .filter(|(g, _, tr)| tr.final_state() == *g)
            .map(|(_, w, _)| w)
            .sum()
    }

    pub fn total_probability(&self) -> f64 {
        self.weighted().map(|(_, w, _)| w).sum()
    }
}

/// Relabeled objective of `pi` on data collected by `pi_old`.
pub fn exact_j_gcsl(
    pi: &TabularDistributionPolicy,
    pi_old: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
) -> Result<f64> {
    pi.check_mdp(mdp)?;
    Ok(DataDistribution::enumerate(pi_old, mdp)?.j_gcsl(pi))
}

/// Success-weighted trajectory log-likelihood of `pi` on `pi_old`'s data.
pub fn exact_j_surr(
    pi: &TabularDistributionPolicy,
    pi_old: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
) -> Result<f64> {
    pi.check_mdp(mdp)?;
    Ok(DataDistribution::enumerate(pi_old, mdp)?.j_surr(pi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;

    #[test]
    fn always_right_reaches_the_end() {
        let mdp = FiniteMdp::chain(4, 3).unwrap();
        let right =
            TabularDistributionPolicy::from_fn(4, 3, 3, |_, _, _| vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(exact_reach_probability(&right, &mdp, 3).unwrap(), 1.0);
        assert_eq!(exact_reach_probability(&right, &mdp, 2).unwrap(), 0.0);
    }

    #[test]
    fn uniform_on_two_state_chain() {
        let mdp = FiniteMdp::chain(2, 1).unwrap();
        let u = TabularDistributionPolicy::for_mdp(&mdp);
        assert!((exact_reach_probability(&u, &mdp, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unreachable_goal_has_zero_probability() {
        let mdp = FiniteMdp::chain(4, 2).unwrap();
        let mut rng = RngStreams::new(1).stream("t");
        let p = TabularDistributionPolicy::random_full_support(4, 3, 2, &mut rng);
        assert_eq!(exact_reach_probability(&p, &mdp, 3).unwrap(), 0.0);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        let mut rng = RngStreams::new(2).stream("t");
        let a = TabularDistributionPolicy::random_full_support(3, 2, 2, &mut rng);
        let b = TabularDistributionPolicy::random_full_support(3, 2, 2, &mut rng);
        assert_eq!(tv_alpha(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_alpha(&a, &b).unwrap(), tv_alpha(&b, &a).unwrap());
    }

    #[test]
    fn enumeration_is_normalized() {
        let mdp = FiniteMdp::chain(4, 3).unwrap();
        let mut rng = RngStreams::new(3).stream("t");
        let p = TabularDistributionPolicy::random_full_support(4, 3, 3, &mut rng);
        for g in 0..4 {
            let e = enumerate_trajectories(&p, &mdp, g).unwrap();
            assert_eq!(e.trajectories.len(), 27);
            assert!((e.total_probability() - 1.0).abs() < 1e-10);
            assert!(
                (e.reach_probability() - exact_reach_probability(&p, &mdp, g).unwrap()).abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let mdp = FiniteMdp::chain(4, 13).unwrap();
        let p = TabularDistributionPolicy::for_mdp(&mdp);
        assert!(matches!(
            enumerate_trajectories(&p, &mdp, 0),
            Err(Error::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn uniform_policy_j_gcsl() {
        let two = FiniteMdp::deterministic(2, 2, 2, &[0, 1, 0, 1], 0, vec![0.5, 0.5]).unwrap();
        let u = TabularDistributionPolicy::for_mdp(&two);
        let mut rng = RngStreams::new(4).stream("t");
        let old = TabularDistributionPolicy::random_full_support(2, 2, 2, &mut rng);
        let j = exact_j_gcsl(&u, &old, &two).unwrap();
        assert!((j - 2.0 * libm::log(0.5)).abs() < 1e-12);
    }

    #[test]
    fn validate_flags_bad_rows() {
        let mut p = TabularDistributionPolicy::uniform(2, 2, 2);
        assert!(p.validate().is_ok());
        p.set_row(1, 0, 2, &[0.9, 0.3]).unwrap();
        let err = p.validate().unwrap_err();
        assert!(format!("{err}").contains("s=1, g=0, h=2"), "{err}");
    }
}
