//! Goal-reaching environments.
//!
//! States and goals share one space and are plain `f64` vectors. Finite MDPs
//! encode a state as the one-element vector `[id]`.

pub(crate) mod finite;
mod four_rooms;

pub use finite::{FiniteMdp, GridLayout, GRID_ROOMS_LAYOUT};
pub use four_rooms::{FourRooms, FourRoomsConfig};

use alloc::vec;
use alloc::vec::Vec;
use rand::RngCore;

use crate::Result;

pub type State = Vec<f64>;
pub type Goal = State;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub horizon: usize,
    pub action_count: usize,
    pub state_dim: usize,
    pub goal_threshold: f64,
}

impl EnvSpec {
    pub const DEFAULT_HORIZON: usize = 50;
    pub const DEFAULT_GOAL_THRESHOLD: f64 = 0.1;
}

/// A goal-conditioned environment: fixed dynamics, a start distribution, a
/// goal distribution and a distance used for reporting.
pub trait GoalEnv: Send + Sync {
    fn name(&self) -> &str;

    fn spec(&self) -> &EnvSpec;

    fn reset(&self, rng: &mut dyn RngCore) -> State;

    fn step(&self, state: &[f64], action: usize, rng: &mut dyn RngCore) -> Result<State>;

    fn sample_goal(&self, rng: &mut dyn RngCore) -> Goal;

    fn distance(&self, state: &[f64], goal: &[f64]) -> Result<f64>;

    /// Action vectors, indexed by action id.
    fn action_grid(&self) -> Vec<Vec<f64>>;

    /// Network input features for a state (or goal).
    fn features(&self, state: &[f64]) -> Result<Vec<f64>>;

    fn feature_dim(&self) -> usize;

    fn as_finite(&self) -> Option<&FiniteMdp> {
        None
    }
}

/// Product grid `{-1, 0, +1}^dim` in lexicographic order (first coordinate
/// varies slowest).
pub fn action_grid(dim: usize) -> Vec<Vec<f64>> {
    let count = 3usize.pow(dim as u32);
    (0..count)
        .map(|mut index| {
            let mut v = vec![0.0; dim];
            for d in (0..dim).rev() {
                v[d] = (index % 3) as f64 - 1.0;
                index /= 3;
            }
            v
        })
        .collect()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(crate::Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(libm::sqrt(sq))
}
