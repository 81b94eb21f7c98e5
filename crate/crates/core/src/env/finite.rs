use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::RngCore;

use super::{EnvSpec, Goal, GoalEnv, State};
use crate::rng::sample_categorical;
use crate::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Classic four-room layout (11x11 interior, `#` = wall).
pub const GRID_ROOMS_LAYOUT: [&str; 11] = [
    ".....#.....",
    ".....#.....",
    "...........",
    ".....#.....",
    ".....#.....",
    "#.####.....",
    ".....###.##",
    ".....#.....",
    ".....#.....",
    "...........",
    ".....#.....",
];

/// Grid actions in index order: up, down, left, right, stay (row, column deltas).
const GRID_MOVES: [(isize, isize); 5] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

/// Free cells of a rectangular grid, numbered in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    rows: usize,
    cols: usize,
    cell_ids: Vec<Option<usize>>,
    coords: Vec<(usize, usize)>,
}

impl GridLayout {
    pub fn parse(lines: &[&str]) -> Result<Self> {
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.len());
        if rows == 0 || cols == 0 || lines.iter().any(|l| l.len() != cols) {
            return Err(Error::InvalidConfig(
                "grid layout must be a non-empty rectangle".to_string(),
            ));
        }
        let mut cell_ids = Vec::with_capacity(rows * cols);
        let mut coords = Vec::new();
        for (r, line) in lines.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => cell_ids.push(None),
                    '.' => {
                        cell_ids.push(Some(coords.len()));
                        coords.push((r, c));
                    }
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "unexpected layout character {other:?}"
                        )))
                    }
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            cell_ids,
            coords,
        })
    }

    pub fn open(rows: usize, cols: usize) -> Self {
        let line: String = core::iter::repeat_n('.', cols).collect();
        let lines: Vec<&str> = (0..rows).map(|_| line.as_str()).collect();
        Self::parse(&lines).expect("open grid is rectangular")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn free_count(&self) -> usize {
        self.coords.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.rows && col < self.cols {
            self.cell_ids[row * self.cols + col]
        } else {
            None
        }
    }

    pub fn coords(&self, id: usize) -> (usize, usize) {
        self.coords[id]
    }

    pub fn is_wall(&self, row: usize, col: usize) -> bool {
        self.cell(row, col).is_none()
    }
}

/// An enumerable goal MDP: states `0..state_count`, explicit (sparse)
/// transition distributions, an initial distribution and a goal distribution.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    name: String,
    spec: EnvSpec,
    state_count: usize,
    transitions: Vec<Vec<(usize, f64)>>,
    initial: Vec<(usize, f64)>,
    goal_distribution: Vec<f64>,
    features: Vec<Vec<f64>>,
    action_vectors: Vec<Vec<f64>>,
    deterministic: bool,
}

impl FiniteMdp {
    /// `transitions[s * action_count + a]` is the next-state distribution.
    pub fn new(
        state_count: usize,
        action_count: usize,
        horizon: usize,
        transitions: Vec<Vec<(usize, f64)>>,
        initial: Vec<(usize, f64)>,
        goal_distribution: Vec<f64>,
    ) -> Result<Self> {
        if state_count == 0 {
            return Err(Error::InvalidConfig(
                "state_count must be positive".to_string(),
            ));
        }
        if action_count < 2 {
            return Err(Error::InvalidConfig(
                "action_count must be >= 2".to_string(),
            ));
        }
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".to_string()));
        }
        if transitions.len() != state_count * action_count {
            return Err(Error::ShapeMismatch {
                expected: state_count * action_count,
                got: transitions.len(),
            });
        }
        for (i, row) in transitions.iter().enumerate() {
            check_sparse(row, state_count)
                .map_err(|e| Error::InvalidDistribution(format!("transition row {i}: {e}")))?;
        }
        check_sparse(&initial, state_count)
            .map_err(|e| Error::InvalidDistribution(format!("initial distribution: {e}")))?;
        if goal_distribution.len() != state_count {
            return Err(Error::ShapeMismatch {
                expected: state_count,
                got: goal_distribution.len(),
            });
        }
        check_dense(&goal_distribution)
            .map_err(|e| Error::InvalidDistribution(format!("goal distribution: {e}")))?;

        let deterministic = initial.iter().filter(|(_, p)| *p > 0.0).count() == 1
            && transitions
                .iter()
                .all(|row| row.iter().filter(|(_, p)| *p > 0.0).count() == 1);
        let denom = (state_count.max(2) - 1) as f64;
        Ok(Self {
            name: "finite".to_string(),
            spec: EnvSpec {
                horizon,
                action_count,
                state_dim: 1,
                goal_threshold: EnvSpec::DEFAULT_GOAL_THRESHOLD,
            },
            state_count,
            transitions,
            initial,
            goal_distribution,
            features: (0..state_count).map(|s| vec![s as f64 / denom]).collect(),
            action_vectors: (0..action_count)
                .map(|a| {
                    let mut v = vec![0.0; action_count];
                    v[a] = 1.0;
                    v
                })
                .collect(),
            deterministic,
        })
    }

    /// Deterministic MDP from a successor table `next[s * action_count + a]`,
    /// a point-mass start and the given goal distribution.
    pub fn deterministic(
        state_count: usize,
        action_count: usize,
        horizon: usize,
        next: &[usize],
        start: usize,
        goal_distribution: Vec<f64>,
    ) -> Result<Self> {
        let transitions = next.iter().map(|&s| vec![(s, 1.0)]).collect();
        Self::new(
            state_count,
            action_count,
            horizon,
            transitions,
            vec![(start, 1.0)],
            goal_distribution,
        )
    }

    /// Chain of `n` states with actions left / stay / right, start at 0 and
    /// uniform goals.
    pub fn chain(n: usize, horizon: usize) -> Result<Self> {
        let mut next = Vec::with_capacity(n * 3);
        for s in 0..n {
            next.extend([s.saturating_sub(1), s, (s + 1).min(n.saturating_sub(1))]);
        }
        let mdp = Self::deterministic(n, 3, horizon, &next, 0, uniform(n))?;
        Ok(mdp
            .with_name("chain")
            .with_action_vectors(vec![vec![-1.0], vec![0.0], vec![1.0]]))
    }

    /// Gridworld over the free cells of `layout`; goals uniform over free cells.
    pub fn grid(layout: &GridLayout, horizon: usize, start: (usize, usize)) -> Result<Self> {
        let start_id = layout
            .cell(start.0, start.1)
            .ok_or_else(|| Error::InvalidConfig("start cell is a wall".to_string()))?;
        let n = layout.free_count();
        let mut next = Vec::with_capacity(n * GRID_MOVES.len());
        for id in 0..n {
            let (r, c) = layout.coords(id);
            for (dr, dc) in GRID_MOVES {
                let target = r
                    .checked_add_signed(dr)
                    .zip(c.checked_add_signed(dc))
                    .and_then(|(nr, nc)| layout.cell(nr, nc));
                next.push(target.unwrap_or(id));
            }
        }
        let (rmax, cmax) = (
            (layout.rows().max(2) - 1) as f64,
            (layout.cols().max(2) - 1) as f64,
        );
        let features = (0..n)
            .map(|id| {
                let (r, c) = layout.coords(id);
                vec![r as f64 / rmax, c as f64 / cmax]
            })
            .collect();
        let mdp = Self::deterministic(n, GRID_MOVES.len(), horizon, &next, start_id, uniform(n))?;
        Ok(mdp
            .with_name("grid")
            .with_features(features)?
            .with_action_vectors(
                GRID_MOVES
                    .iter()
                    .map(|&(r, c)| vec![r as f64, c as f64])
                    .collect(),
            ))
    }

    /// The 11x11 four-room gridworld, horizon 30, start in the middle of the
    /// bottom-left room.
    pub fn grid_rooms(horizon: usize) -> Result<Self> {
        let layout = GridLayout::parse(&GRID_ROOMS_LAYOUT)?;
        Ok(Self::grid(&layout, horizon, (8, 2))?.with_name("grid-rooms"))
    }

    /// Wall-free grid starting in the top-left corner.
    pub fn open_grid(rows: usize, cols: usize, horizon: usize) -> Result<Self> {
        Ok(Self::grid(&GridLayout::open(rows, cols), horizon, (0, 0))?.with_name("open-grid"))
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_features(mut self, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != self.state_count {
            return Err(Error::ShapeMismatch {
                expected: self.state_count,
                got: features.len(),
            });
        }
        let dim = features[0].len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidConfig(
                "state features must share one dimension".to_string(),
            ));
        }
        self.features = features;
        Ok(self)
    }

    pub fn with_action_vectors(mut self, vectors: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(vectors.len(), self.spec.action_count);
        self.action_vectors = vectors;
        self
    }

    pub fn with_goal_threshold(mut self, threshold: f64) -> Self {
        self.spec.goal_threshold = threshold;
        self
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.spec.action_count
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn transition(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.transitions[state * self.spec.action_count + action]
    }

    /// Successor under deterministic dynamics.
    pub fn next_state(&self, state: usize, action: usize) -> Option<usize> {
        if !self.deterministic {
            return None;
        }
        self.transition(state, action)
            .iter()
            .find(|(_, p)| *p > 0.0)
            .map(|&(s, _)| s)
    }

    pub fn initial_distribution(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn start_state(&self) -> Option<usize> {
        if self.deterministic {
            self.initial.iter().find(|(_, p)| *p > 0.0).map(|&(s, _)| s)
        } else {
            None
        }
    }

    pub fn goal_distribution(&self) -> &[f64] {
        &self.goal_distribution
    }

    pub fn state_vec(&self, id: usize) -> State {
        vec![id as f64]
    }

    pub fn state_id(&self, state: &[f64]) -> Result<usize> {
        state_id(state, self.state_count)
    }
}

/// Decodes the `[id]` state encoding used by finite MDPs.
pub(crate) fn state_id(state: &[f64], state_count: usize) -> Result<usize> {
    if state.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: state.len(),
        });
    }
    let v = state[0];
    if v >= 0.0 && libm::trunc(v) == v && (v as usize) < state_count {
        Ok(v as usize)
    } else {
        Err(Error::InvalidState(format!(
            "{v} is not a state id below {state_count}"
        )))
    }
}

impl GoalEnv for FiniteMdp {
    fn name(&self) -> &str {
        &self.name
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut dyn RngCore) -> State {
        let id = match self.start_state() {
            Some(s) => s,
            None => {
                let weights: Vec<f64> = self.initial.iter().map(|&(_, p)| p).collect();
                self.initial[sample_categorical(&weights, rng)].0
            }
        };
        self.state_vec(id)
    }

    fn step(&self, state: &[f64], action: usize, rng: &mut dyn RngCore) -> Result<State> {
        if action >= self.spec.action_count {
            return Err(Error::InvalidAction {
                index: action,
                count: self.spec.action_count,
            });
        }
        let s = self.state_id(state)?;
        let row = self.transition(s, action);
        let next = if self.deterministic {
            self.next_state(s, action)
                .expect("deterministic row has a successor")
        } else {
            let weights: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
            row[sample_categorical(&weights, rng)].0
        };
        Ok(self.state_vec(next))
    }

    fn sample_goal(&self, rng: &mut dyn RngCore) -> Goal {
        self.state_vec(sample_categorical(&self.goal_distribution, rng))
    }

    fn distance(&self, state: &[f64], goal: &[f64]) -> Result<f64> {
        if state.len() != goal.len() {
            return Err(Error::DimensionMismatch {
                expected: state.len(),
                got: goal.len(),
            });
        }
        let (s, g) = (self.state_id(state)?, self.state_id(goal)?);
        Ok(if s == g { 0.0 } else { 1.0 })
    }

    fn action_grid(&self) -> Vec<Vec<f64>> {
        self.action_vectors.clone()
    }

    fn features(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.features[self.state_id(state)?].clone())
    }

    fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    fn as_finite(&self) -> Option<&FiniteMdp> {
        Some(self)
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn check_sparse(row: &[(usize, f64)], state_count: usize) -> core::result::Result<(), String> {
    if let Some(&(s, _)) = row.iter().find(|(s, _)| *s >= state_count) {
        return Err(format!("state {s} out of range"));
    }
    let probs: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
    check_dense(&probs)
}

fn check_dense(probs: &[f64]) -> core::result::Result<(), String> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("negative or non-finite probability".to_string());
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(format!("sums to {total}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_table_lookup() {
        let chain = FiniteMdp::chain(4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(chain.step(&[1.0], 2, &mut rng).unwrap(), vec![2.0]);
        assert_eq!(chain.step(&[0.0], 0, &mut rng).unwrap(), vec![0.0]);
        assert_eq!(chain.step(&[3.0], 2, &mut rng).unwrap(), vec![3.0]);
        assert!(chain.step(&[1.0], 3, &mut rng).is_err());
        assert!(chain.step(&[4.0], 0, &mut rng).is_err());
    }

    #[test]
    fn grid_rooms_layout() {
        let g = FiniteMdp::grid_rooms(30).unwrap();
        assert_eq!(g.state_count(), 104);
        assert_eq!(g.action_count(), 5);
        assert_eq!(g.action_grid().len(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = g.reset(&mut rng);
        let b = g.reset(&mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn discrete_metric() {
        let chain = FiniteMdp::chain(4, 3).unwrap();
        assert_eq!(chain.distance(&[2.0], &[3.0]).unwrap(), 1.0);
        assert_eq!(chain.distance(&[2.0], &[2.0]).unwrap(), 0.0);
        assert!(chain.distance(&[2.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let err = FiniteMdp::new(
            2,
            2,
            1,
            vec![
                vec![(0, 0.5)],
                vec![(1, 1.0)],
                vec![(0, 1.0)],
                vec![(1, 1.0)],
            ],
            vec![(0, 1.0)],
            vec![0.5, 0.5],
        );
        assert!(matches!(err, Err(Error::InvalidDistribution(_))));
        let err = FiniteMdp::deterministic(2, 2, 1, &[0, 1, 0, 1], 0, vec![0.6, 0.6]);
        assert!(matches!(err, Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn stochastic_rows_are_detected() {
        let mdp = FiniteMdp::new(
            2,
            2,
            1,
            vec![
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 1.0)],
                vec![(0, 1.0)],
                vec![(1, 1.0)],
            ],
            vec![(0, 1.0)],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert!(!mdp.is_deterministic());
        assert_eq!(mdp.next_state(0, 0), None);
    }
}
