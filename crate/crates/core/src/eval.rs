//! Rollout-based evaluation: final distance to the goal and success ratio.

use alloc::vec::Vec;
use rand::RngCore;

use crate::buffer::Trajectory;
use crate::env::{GoalEnv, State};
use crate::policy::Policy;
use crate::rng::{RngStreams, EVAL};
use crate::{Error, Result};

/// Runs one episode of `env.spec().horizon` steps, choosing each action with
/// `choose(state, remaining_horizon, rng)`.
pub(crate) fn run_episode(
    env: &dyn GoalEnv,
    goal: &[f64],
    rng: &mut dyn RngCore,
    mut choose: impl FnMut(&[f64], usize, &mut dyn RngCore) -> Result<usize>,
) -> Result<Trajectory> {
    let horizon = env.spec().horizon;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    states.push(env.reset(rng));
    for t in 0..horizon {
        let action = choose(&states[t], horizon - t, rng)?;
        let next = env.step(&states[t], action, rng)?;
        actions.push(action);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        actions,
        commanded_goal: goal.to_vec(),
        seed: 0,
        iteration: 0,
    })
}

/// Rolls out `policy` toward `goal`, greedily or by sampling. Time-varying
/// policies receive the remaining horizon `T - t`.
pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    env: &dyn GoalEnv,
    goal: &[f64],
    rng: &mut dyn RngCore,
    greedy: bool,
) -> Result<Trajectory> {
    let tv = policy.is_time_varying();
    run_episode(env, goal, rng, |s, h, rng| {
        let h = tv.then_some(h);
        if greedy {
            policy.greedy_action(s, goal, h)
        } else {
            policy.sample_action(s, goal, h, rng)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub goal: State,
    pub final_distance: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_episodes: usize,
    pub median_final_distance: f64,
    pub mean_final_distance: f64,
    pub success_ratio: f64,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalReport {
    /// Statistics over per-episode records; the median is the lower median.
    pub fn from_records(episodes: Vec<EpisodeRecord>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::InvalidConfig(
                "evaluation needs at least one goal".into(),
            ));
        }
        let n = episodes.len();
        let mut d: Vec<f64> = episodes.iter().map(|e| e.final_distance).collect();
        d.sort_by(f64::total_cmp);
        Ok(Self {
            n_episodes: n,
            median_final_distance: d[(n - 1) / 2],
            mean_final_distance: d.iter().sum::<f64>() / n as f64,
            success_ratio: episodes.iter().filter(|e| e.success).count() as f64 / n as f64,
            episodes,
        })
    }
}

/// One rollout per goal. Episode `i` draws from its own stream derived from
/// `(streams, "eval", i)`, so results do not depend on execution order.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    env: &dyn GoalEnv,
    goals: &[State],
    threshold: f64,
    streams: &RngStreams,
    greedy: bool,
) -> Result<EvalReport> {
    let mut records = Vec::with_capacity(goals.len());
    for (i, goal) in goals.iter().enumerate() {
        let mut rng = streams.indexed(EVAL, i as u64);
        let tr = rollout(policy, env, goal, &mut rng, greedy)?;
        let final_distance = env.distance(tr.final_state(), goal)?;
        records.push(EpisodeRecord {
            goal: goal.clone(),
            final_distance,
            success: final_distance < threshold,
        });
    }
    EvalReport::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(d: f64) -> EpisodeRecord {
        EpisodeRecord {
            goal: vec![0.0],
            final_distance: d,
            success: d < 0.1,
        }
    }

    #[test]
    fn statistics_from_distances() {
        let r = EvalReport::from_records(vec![rec(0.0), rec(0.2), rec(0.05), rec(0.4)]).unwrap();
        assert_eq!(r.success_ratio, 0.5);
        assert_eq!(r.median_final_distance, 0.05);
        assert!((r.mean_final_distance - 0.1625).abs() < 1e-15);
        assert!(EvalReport::from_records(vec![]).is_err());
    }

    #[test]
    fn all_success() {
        let r = EvalReport::from_records(vec![rec(0.0); 5]).unwrap();
        assert_eq!(r.success_ratio, 1.0);
        assert_eq!(r.median_final_distance, 0.0);
    }
}
