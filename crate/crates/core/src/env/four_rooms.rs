use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use super::{action_grid, euclidean, EnvSpec, Goal, GoalEnv, State};
use crate::{Error, Result};

const WALL: f64 = 0.5;
const DOOR_CENTERS: [f64; 2] = [0.25, 0.75];
pub const START: [f64; 2] = [0.25, 0.25];

#[derive(Debug, Clone, PartialEq)]
pub struct FourRoomsConfig {
    pub horizon: usize,
    pub step_scale: f64,
    pub door_width: f64,
    pub goal_threshold: f64,
}

impl Default for FourRoomsConfig {
    fn default() -> Self {
        Self {
            horizon: EnvSpec::DEFAULT_HORIZON,
            step_scale: 0.05,
            door_width: 0.12,
            goal_threshold: EnvSpec::DEFAULT_GOAL_THRESHOLD,
        }
    }
}

/// Continuous navigation in the unit square split into four rooms by the
/// lines `x = 0.5` and `y = 0.5`. Each wall half has one door centred in it.
///
/// The action picks a displacement from the `{-1, 0, 1}^2` grid scaled by
/// `step_scale`; velocity does not persist between steps so the position is
/// the full state. Movement into a wall is blocked per axis (x first, then y).
#[derive(Debug, Clone)]
pub struct FourRooms {
    config: FourRoomsConfig,
    spec: EnvSpec,
    actions: Vec<Vec<f64>>,
}

impl FourRooms {
    pub fn new(config: FourRoomsConfig) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::InvalidConfig("env.horizon must be >= 1".to_string()));
        }
        if !(config.step_scale > 0.0 && config.step_scale < 0.5) {
            return Err(Error::InvalidConfig(
                "env.step_scale must lie in (0, 0.5)".to_string(),
            ));
        }
        if !(config.door_width > 0.0 && config.door_width < 0.5) {
            return Err(Error::InvalidConfig(
                "env.door_width must lie in (0, 0.5)".to_string(),
            ));
        }
        let actions = action_grid(2);
        let spec = EnvSpec {
            horizon: config.horizon,
            action_count: actions.len(),
            state_dim: 2,
            goal_threshold: config.goal_threshold,
        };
        Ok(Self {
            config,
            spec,
            actions,
        })
    }

    pub fn config(&self) -> &FourRoomsConfig {
        &self.config
    }

    fn in_door(&self, c: f64) -> bool {
        let half = self.config.door_width / 2.0;
        DOOR_CENTERS.iter().any(|d| (c - d).abs() <= half)
    }

    /// True when `(x, y)` lies on a wall segment (outside the doors).
    pub fn on_wall(&self, x: f64, y: f64) -> bool {
        (x == WALL && !self.in_door(y)) || (y == WALL && !self.in_door(x))
    }

    /// True when moving along one axis from `from` to `to` passes through the
    /// wall line while the other coordinate `across` is not inside a door.
    fn blocked(&self, from: f64, to: f64, across: f64) -> bool {
        let crosses = (from < WALL && to > WALL) || (from > WALL && to < WALL);
        crosses && !self.in_door(across)
    }

    /// Room index: 0 bottom-left, 1 bottom-right, 2 top-left, 3 top-right.
    pub fn room(x: f64, y: f64) -> usize {
        usize::from(x >= WALL) + 2 * usize::from(y >= WALL)
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: state.len(),
            });
        }
        if !state
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidState(
                "position outside the unit square".to_string(),
            ));
        }
        Ok(())
    }
}

impl GoalEnv for FourRooms {
    fn name(&self) -> &str {
        "four-rooms"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> State {
        START.to_vec()
    }

    fn step(&self, state: &[f64], action: usize, _rng: &mut dyn RngCore) -> Result<State> {
        let delta = self.actions.get(action).ok_or(Error::InvalidAction {
            index: action,
            count: self.actions.len(),
        })?;
        self.check_state(state)?;
        let (mut x, mut y) = (state[0], state[1]);

        let nx = (x + self.config.step_scale * delta[0]).clamp(0.0, 1.0);
        if !self.blocked(x, nx, y) && !self.on_wall(nx, y) {
            x = nx;
        }
        let ny = (y + self.config.step_scale * delta[1]).clamp(0.0, 1.0);
        if !self.blocked(y, ny, x) && !self.on_wall(x, ny) {
            y = ny;
        }
        Ok(vec![x, y])
    }

    fn sample_goal(&self, rng: &mut dyn RngCore) -> Goal {
        loop {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            if !self.on_wall(x, y) {
                return vec![x, y];
            }
        }
    }

    fn distance(&self, state: &[f64], goal: &[f64]) -> Result<f64> {
        euclidean(state, goal)
    }

    fn action_grid(&self) -> Vec<Vec<f64>> {
        self.actions.clone()
    }

    fn features(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: state.len(),
            });
        }
        Ok(state.to_vec())
    }

    fn feature_dim(&self) -> usize {
        2
    }
}
