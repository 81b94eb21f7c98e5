//! Trajectory storage with hindsight relabeling at sample time.
//!
//! Trajectories are stored whole. A sampled example picks a trajectory
//! uniformly, a start index `t` uniformly in `0..T`, and a goal index `t'`
//! uniformly in `t+1..=min(t + h_max, T)`; it is then relabeled as
//! `(s_t, a_t, g = s_t', h = t' - t)`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::env::{Goal, State};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T + 1` states `s_0..=s_T`.
    pub states: Vec<State>,
    /// `T` actions; `actions[t]` was taken in `states[t]`.
    pub actions: Vec<usize>,
    pub commanded_goal: Goal,
    pub seed: u64,
    pub iteration: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("validated trajectories are non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.actions.is_empty() {
            return Err(Error::MalformedTrajectory("no actions".into()));
        }
        if self.states.len() != self.actions.len() + 1 {
            return Err(Error::MalformedTrajectory(format!(
                "{} states for {} actions",
                self.states.len(),
                self.actions.len()
            )));
        }
        let dim = self.states[0].len();
        if dim == 0
            || self.states.iter().any(|s| s.len() != dim)
            || self.commanded_goal.len() != dim
        {
            return Err(Error::MalformedTrajectory(
                "inconsistent state dimensions".into(),
            ));
        }
        if self
            .states
            .iter()
            .chain(core::iter::once(&self.commanded_goal))
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::MalformedTrajectory("non-finite state value".into()));
        }
        Ok(())
    }
}

/// A hindsight-relabeled supervision tuple: `action` taken in `state`
/// reached `goal` exactly `horizon` steps later.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabeledExample {
    pub state: State,
    pub action: usize,
    pub goal: Goal,
    pub horizon: usize,
}

/// Location of a relabeled example inside a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelabelIndex {
    pub trajectory: usize,
    pub t: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferMode {
    Full,
    /// Goals at most `h_max` steps after the start index.
    Limited {
        h_max: usize,
    },
    /// Keep only the most recent `window_transitions` transitions.
    OnPolicy {
        window_transitions: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferConfig {
    pub mode: BufferMode,
    /// Maximum number of stored trajectories (oldest evicted first).
    pub capacity: Option<usize>,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            mode: BufferMode::Full,
            capacity: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    config: BufferConfig,
    trajectories: VecDeque<Trajectory>,
    transitions: usize,
}

impl ReplayBuffer {
    pub fn new(config: BufferConfig) -> Result<Self> {
        match config.mode {
            BufferMode::Limited { h_max: 0 } => {
                return Err(Error::InvalidConfig(
                    "limited relabeling needs h_max >= 1".into(),
                ))
            }
            BufferMode::OnPolicy {
                window_transitions: 0,
            } => {
                return Err(Error::InvalidConfig(
                    "on-policy window must be positive".into(),
                ))
            }
            _ => {}
        }
        if config.capacity == Some(0) {
            return Err(Error::InvalidConfig(
                "buffer capacity must be positive".into(),
            ));
        }
        Ok(Self {
            config,
            trajectories: VecDeque::new(),
            transitions: 0,
        })
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn transitions(&self) -> usize {
        self.transitions
    }

    pub fn trajectories(&self) -> impl ExactSizeIterator<Item = &Trajectory> {
        self.trajectories.iter()
    }

    pub fn latest(&self) -> Option<&Trajectory> {
        self.trajectories.back()
    }

    /// Stores a trajectory and returns whatever had to be evicted to respect
    /// the capacity or on-policy window.
    pub fn append(&mut self, trajectory: Trajectory) -> Result<Vec<Trajectory>> {
        trajectory.validate()?;
        if let BufferMode::OnPolicy { window_transitions } = self.config.mode {
            if trajectory.horizon() > window_transitions {
                return Err(Error::InvalidConfig(format!(
                    "on-policy window of {window_transitions} transitions cannot hold a trajectory of {}",
                    trajectory.horizon()
                )));
            }
        }
        self.transitions += trajectory.horizon();
        self.trajectories.push_back(trajectory);

        let mut evicted = Vec::new();
        loop {
            let over_window = matches!(self.config.mode,
                BufferMode::OnPolicy { window_transitions } if self.transitions > window_transitions);
            let over_capacity = self
                .config
                .capacity
                .is_some_and(|c| self.trajectories.len() > c);
            if !(over_window || over_capacity) {
                break;
            }
            let old = self
                .trajectories
                .pop_front()
                .expect("over budget implies non-empty");
            self.transitions -= old.horizon();
            evicted.push(old);
        }
        Ok(evicted)
    }

    fn h_max(&self) -> usize {
        match self.config.mode {
            BufferMode::Limited { h_max } => h_max,
            _ => usize::MAX,
        }
    }

    pub fn sample_index(&self, rng: &mut dyn RngCore) -> Result<RelabelIndex> {
        if self.trajectories.is_empty() {
            return Err(Error::NotReady);
        }
        let trajectory = rng.random_range(0..self.trajectories.len());
        let horizon_len = self.trajectories[trajectory].horizon();
        let t = rng.random_range(0..horizon_len);
        let last = horizon_len.min(t.saturating_add(self.h_max()));
        let goal_index = rng.random_range(t + 1..=last);
        Ok(RelabelIndex {
            trajectory,
            t,
            horizon: goal_index - t,
        })
    }

    pub fn example(&self, index: RelabelIndex) -> RelabeledExample {
        let tr = &self.trajectories[index.trajectory];
        RelabeledExample {
            state: tr.states[index.t].clone(),
            action: tr.actions[index.t],
            goal: tr.states[index.t + index.horizon].clone(),
            horizon: index.horizon,
        }
    }

    /// Independent draws with replacement.
    pub fn sample_batch(
        &self,
        batch_size: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<RelabeledExample>> {
        (0..batch_size)
            .map(|_| self.sample_index(rng).map(|i| self.example(i)))
            .collect()
    }

    /// Every `(t, h)` pair this buffer can sample from `trajectory`, weighted
    /// by its probability under the sampling scheme (scaled so the weights of
    /// one trajectory sum to its horizon `T`).
    pub fn relabel_weights(&self, trajectory: &Trajectory) -> Vec<(usize, usize, f64)> {
        let horizon_len = trajectory.horizon();
        let mut out = Vec::new();
        for t in 0..horizon_len {
            let hs = (horizon_len - t).min(self.h_max());
            let w = 1.0 / hs as f64;
            out.extend((1..=hs).map(|h| (t, h, w)));
        }
        out
    }
}

/// All relabeled examples of a trajectory: `(s_t, a_t, s_{t+h}, h)` for every
/// `t >= 0`, `h >= 1`, `t + h <= T`.
pub fn relabel_all(trajectory: &Trajectory) -> Vec<RelabeledExample> {
    let horizon_len = trajectory.horizon();
    let mut out = Vec::with_capacity(horizon_len * (horizon_len + 1) / 2);
    for t in 0..horizon_len {
        for h in 1..=horizon_len - t {
            out.push(RelabeledExample {
                state: trajectory.states[t].clone(),
                action: trajectory.actions[t],
                goal: trajectory.states[t + h].clone(),
                horizon: h,
            });
        }
    }
    out
}
