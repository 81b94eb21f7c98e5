use alloc::vec;
use alloc::vec::Vec;

use super::{DataDistribution, TabularDistributionPolicy};
use crate::buffer::Trajectory;
use crate::env::{FiniteMdp, GoalEnv};
use crate::rng::{RngStreams, COLLECT, GOAL};
use crate::trainer::{collect_trajectory, CollectMode};
use crate::{Error, Result};

/// DP-optimal goal-reaching policy with its value table.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    pub policy: TabularDistributionPolicy,
    /// `V_h(s, g)` at `(h * S + s) * S + g`, `h` in `0..=T`.
    values: Vec<f64>,
    state_count: usize,
    pub j_star: f64,
}

impl OptimalPolicy {
    pub fn value(&self, h: usize, state: usize, goal: usize) -> f64 {
        self.values[(h * self.state_count + state) * self.state_count + goal]
    }
}

/// `V_0(s, g) = 1[s = g]`, `V_h(s, g) = max_a V_{h-1}(step(s, a), g)`, acting
/// greedily with ties to the lowest action index.
pub fn optimal_reach_policy(mdp: &FiniteMdp) -> Result<OptimalPolicy> {
    if !mdp.is_deterministic() {
        return Err(Error::NotDeterministic);
    }
    let (n, a_count, t_max) = (mdp.state_count(), mdp.action_count(), mdp.horizon());
    let next: Vec<usize> = (0..n)
        .flat_map(|s| (0..a_count).map(move |a| (s, a)))
        .map(|(s, a)| mdp.next_state(s, a).ok_or(Error::NotDeterministic))
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; (t_max + 1) * n * n];
    for s in 0..n {
        values[s * n + s] = 1.0;
    }
    let mut policy = TabularDistributionPolicy::uniform(n, a_count, t_max);
    let mut row = vec![0.0; a_count];
    for h in 1..=t_max {
        let (prev, cur) = values.split_at_mut(h * n * n);
        let prev = &prev[(h - 1) * n * n..];
        for s in 0..n {
            for g in 0..n {
                let mut best = 0;
                let mut best_v = f64::NEG_INFINITY;
                for a in 0..a_count {
                    let v = prev[next[s * a_count + a] * n + g];
                    if v > best_v {
                        best_v = v;
                        best = a;
                    }
                }
                cur[s * n + g] = best_v;
                row.fill(0.0);
                row[best] = 1.0;
                policy.set_row(s, g, h, &row)?;
            }
        }
    }
    let start = mdp.start_state().ok_or(Error::NotDeterministic)?;
    let top = &values[t_max * n * n..];
    let j_star = mdp
        .goal_distribution()
        .iter()
        .enumerate()
        .map(|(g, &pg)| pg * top[start * n + g])
        .sum();
    Ok(OptimalPolicy {
        policy,
        values,
        state_count: n,
        j_star,
    })
}

/// `pi(a | s, g, T - t)` proportional to the probability under `pi_old`'s
/// data that the trajectory is at `s` at step `t`, takes `a`, and ends at
/// `g`. Cells with zero probability are uniform.
pub fn relabel_optimal_policy(
    pi_old: &TabularDistributionPolicy,
    mdp: &FiniteMdp,
) -> Result<TabularDistributionPolicy> {
    let data = DataDistribution::enumerate(pi_old, mdp)?;
    let (n, a_count, t_max) = (mdp.state_count(), mdp.action_count(), mdp.horizon());
    let mut mass = TabularDistributionPolicy {
        table: vec![0.0; n * n * t_max * a_count],
        ..pi_old.clone()
    };
    for (_, w, tr) in data.weighted() {
        let g = tr.final_state();
        for t in 0..t_max {
            let i = mass.index(tr.states[t], g, t_max - t) + tr.actions[t];
            mass.table[i] += w;
        }
    }
    for row in mass.table.chunks_mut(a_count) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
        } else {
            row.fill(1.0 / a_count as f64);
        }
    }
    Ok(mass)
}

/// `n` greedy rollouts of the DP-optimal policy, one per goal drawn from the
/// MDP's goal distribution.
pub fn expert_demonstrations(mdp: &FiniteMdp, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let expert = optimal_reach_policy(mdp)?;
    let streams = RngStreams::new(seed);
    let mut goal_rng = streams.stream(GOAL);
    let mut collect_rng = streams.stream(COLLECT);
    (0..n)
        .map(|i| {
            let goal = mdp.sample_goal(&mut goal_rng);
            let mut tr = collect_trajectory(
                &expert.policy,
                mdp,
                &goal,
                CollectMode::Greedy,
                &mut collect_rng,
            )?;
            tr.seed = seed;
            tr.iteration = i as u64;
            Ok(tr)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact_j;

    #[test]
    fn chain_values() {
        let mdp = FiniteMdp::chain(4, 3).unwrap();
        let opt = optimal_reach_policy(&mdp).unwrap();
        assert_eq!(opt.j_star, 1.0);
        assert_eq!(exact_j(&opt.policy, &mdp).unwrap(), 1.0);
        for h in 0..=3 {
            for g in 0..4 {
                assert_eq!(opt.value(h, g, g), 1.0);
            }
        }
        let short = optimal_reach_policy(&FiniteMdp::chain(4, 1).unwrap()).unwrap();
        assert_eq!(short.j_star, 0.5);
    }

    #[test]
    fn relabel_optimal_last_step_on_chain() {
        let mdp = FiniteMdp::chain(4, 3).unwrap();
        let old = TabularDistributionPolicy::for_mdp(&mdp);
        let p = relabel_optimal_policy(&old, &mdp).unwrap();
        assert_eq!(p.row(2, 3, 1), &[0.0, 0.0, 1.0]);
        // State 3 at t = 0 never happens: the row falls back to uniform.
        assert_eq!(p.row(3, 0, 3), &[1.0 / 3.0; 3]);
        p.validate().unwrap();
    }

    #[test]
    fn experts_reach_their_goals() {
        let mdp = FiniteMdp::grid_rooms(30).unwrap();
        assert!((optimal_reach_policy(&mdp).unwrap().j_star - 1.0).abs() < 1e-12);
        for tr in expert_demonstrations(&mdp, 50, 3).unwrap() {
            assert_eq!(tr.final_state(), &tr.commanded_goal[..]);
        }
    }

    #[test]
    fn stochastic_mdp_is_rejected() {
        let mdp = FiniteMdp::new(
            2,
            2,
            1,
            vec![vec![(0, 0.5), (1, 0.5)]; 4],
            vec![(0, 1.0)],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert!(matches!(
            optimal_reach_policy(&mdp),
            Err(Error::NotDeterministic)
        ));
    }
}
