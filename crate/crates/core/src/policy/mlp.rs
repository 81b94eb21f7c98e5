use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use super::{encode_horizon, log_sum_exp, resolve_horizon, softmax, Policy};
use crate::buffer::RelabeledExample;
use crate::env::finite::state_id;
use crate::env::GoalEnv;
use crate::{Error, Result};

/// Maps raw states (and goals) to network features.
#[derive(Debug, Clone, PartialEq)]
pub enum StateEncoder {
    /// The state vector is used as-is.
    Identity { dim: usize },
    /// Finite-MDP state ids looked up in a feature table.
    Table(Vec<Vec<f64>>),
}

impl StateEncoder {
    pub fn for_env(env: &dyn GoalEnv) -> Result<Self> {
        match env.as_finite() {
            Some(mdp) => (0..mdp.state_count())
                .map(|s| env.features(&mdp.state_vec(s)))
                .collect::<Result<Vec<_>>>()
                .map(StateEncoder::Table),
            None => Ok(StateEncoder::Identity {
                dim: env.spec().state_dim,
            }),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StateEncoder::Identity { dim } => *dim,
            StateEncoder::Table(rows) => rows.first().map_or(0, Vec::len),
        }
    }

    fn encode_into(&self, state: &[f64], out: &mut Vec<f64>) -> Result<()> {
        match self {
            StateEncoder::Identity { dim } => {
                if state.len() != *dim {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        got: state.len(),
                    });
                }
                out.extend_from_slice(state);
            }
            StateEncoder::Table(rows) => out.extend_from_slice(&rows[state_id(state, rows.len())?]),
        }
        Ok(())
    }
}

/// Fully connected ReLU network producing action logits from
/// `[features(state), features(goal), thermometer(horizon)]`.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix
/// (`out x in`, row-major) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    dims: Vec<usize>,
    params: Vec<f64>,
    horizon_len: Option<usize>,
    encoder: StateEncoder,
}

impl MlpPolicy {
    pub const DEFAULT_HIDDEN: [usize; 2] = [400, 300];

    /// He-uniform weights, zero biases.
    pub fn new(
        encoder: StateEncoder,
        hidden: &[usize],
        action_count: usize,
        horizon_len: Option<usize>,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let mut policy = Self::zeros(encoder, hidden, action_count, horizon_len)?;
        for l in 0..policy.layer_count() {
            let fan_in = policy.dims[l];
            let limit = libm::sqrt(6.0 / fan_in as f64);
            let (w, _) = policy.layer_range(l);
            for p in &mut policy.params[w] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(policy)
    }

    pub fn zeros(
        encoder: StateEncoder,
        hidden: &[usize],
        action_count: usize,
        horizon_len: Option<usize>,
    ) -> Result<Self> {
        if action_count < 2 {
            return Err(Error::InvalidConfig(
                "policy needs at least 2 actions".into(),
            ));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "hidden layer sizes must be positive".into(),
            ));
        }
        let input = 2 * encoder.dim() + horizon_len.unwrap_or(0);
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(action_count);
        let count = Self::count_for(&dims);
        Ok(Self {
            dims,
            params: vec![0.0; count],
            horizon_len,
            encoder,
        })
    }

    pub fn for_env(
        env: &dyn GoalEnv,
        hidden: &[usize],
        time_varying: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let horizon_len = time_varying.then_some(env.spec().horizon);
        Self::new(
            StateEncoder::for_env(env)?,
            hidden,
            env.spec().action_count,
            horizon_len,
            rng,
        )
    }

    /// Rebuilds a network from its layer sizes and flat parameters.
    pub fn from_parameters(
        dims: Vec<usize>,
        params: Vec<f64>,
        horizon_len: Option<usize>,
        encoder: StateEncoder,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(
                "network needs positive input and output sizes".into(),
            ));
        }
        let expected_input = 2 * encoder.dim() + horizon_len.unwrap_or(0);
        if dims[0] != expected_input {
            return Err(Error::DimensionMismatch {
                expected: expected_input,
                got: dims[0],
            });
        }
        let count = Self::count_for(&dims);
        if params.len() != count {
            return Err(Error::ShapeMismatch {
                expected: count,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite network parameter".into()));
        }
        Ok(Self {
            dims,
            params,
            horizon_len,
            encoder,
        })
    }

    fn count_for(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn encoder(&self) -> &StateEncoder {
        &self.encoder
    }

    fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    /// Parameter ranges of layer `l`: (weights, bias).
    fn layer_range(&self, l: usize) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
        let start: usize = self.dims[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (din, dout) = (self.dims[l], self.dims[l + 1]);
        let w = start..start + din * dout;
        let b = w.end..w.end + dout;
        (w, b)
    }

    fn push_input(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let h = resolve_horizon(self.horizon_len, horizon)?;
        self.encoder.encode_into(state, out)?;
        self.encoder.encode_into(goal, out)?;
        if let Some(t_max) = self.horizon_len {
            out.extend(encode_horizon(h, t_max)?);
        }
        Ok(())
    }

    /// Activations of every layer for a row-major batch of inputs. Entry 0 is
    /// the input, the last entry holds the logits.
    fn forward(&self, inputs: Vec<f64>, rows: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(inputs);
        for l in 0..self.layer_count() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let (wr, br) = self.layer_range(l);
            let (w, bias) = (&self.params[wr], &self.params[br]);
            let x = &acts[l];
            let last = l + 1 == self.layer_count();
            let mut z = vec![0.0; rows * dout];
            for (xi, zi) in x.chunks_exact(din).zip(z.chunks_exact_mut(dout)) {
                for ((zo, wo), bo) in zi.iter_mut().zip(w.chunks_exact(din)).zip(bias) {
                    let v = bo + dot(wo, xi);
                    *zo = if last || v > 0.0 { v } else { 0.0 };
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, state: &[f64], goal: &[f64], horizon: Option<usize>) -> Result<Vec<f64>> {
        let mut input = Vec::with_capacity(self.dims[0]);
        self.push_input(state, goal, horizon, &mut input)?;
        Ok(self
            .forward(input, 1)
            .pop()
            .expect("network has an output layer"))
    }

    fn batch_inputs(&self, batch: &[RelabeledExample]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut inputs = Vec::with_capacity(batch.len() * self.dims[0]);
        let horizon_of = |ex: &RelabeledExample| self.horizon_len.map(|_| ex.horizon);
        for ex in batch {
            if ex.action >= self.action_count() {
                return Err(Error::InvalidAction {
                    index: ex.action,
                    count: self.action_count(),
                });
            }
            self.push_input(&ex.state, &ex.goal, horizon_of(ex), &mut inputs)?;
        }
        Ok(inputs)
    }

    /// Mean negative log-likelihood of the batch actions.
    pub fn nll_loss(&self, batch: &[RelabeledExample]) -> Result<f64> {
        let inputs = self.batch_inputs(batch)?;
        let acts = self.forward(inputs, batch.len());
        let logits = acts.last().expect("output layer");
        let a = self.action_count();
        let total: f64 = logits
            .chunks_exact(a)
            .zip(batch)
            .map(|(z, ex)| log_sum_exp(z) - z[ex.action])
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Mean negative log-likelihood of the batch and its exact gradient with
    /// respect to the flat parameter vector.
    pub fn nll_loss_and_gradient(&self, batch: &[RelabeledExample]) -> Result<(f64, Vec<f64>)> {
        let rows = batch.len();
        let inputs = self.batch_inputs(batch)?;
        let acts = self.forward(inputs, rows);
        let a = self.action_count();
        let scale = 1.0 / rows as f64;

        let mut loss = 0.0;
        let mut delta = acts.last().expect("output layer").clone();
        for (z, ex) in delta.chunks_exact_mut(a).zip(batch) {
            let lse = log_sum_exp(z);
            loss += lse - z[ex.action];
            for v in z.iter_mut() {
                *v = libm::exp(*v - lse) * scale;
            }
            z[ex.action] -= scale;
        }

        let mut grad = vec![0.0; self.params.len()];
        for l in (0..self.layer_count()).rev() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let (wr, br) = self.layer_range(l);
            let x = &acts[l];
            {
                let (gw, gb) = grad[wr.start..br.end].split_at_mut(din * dout);
                for (gw_o, (o, gb_o)) in gw.chunks_exact_mut(din).zip(gb.iter_mut().enumerate()) {
                    for (xi, di) in x.chunks_exact(din).zip(delta.chunks_exact(dout)) {
                        let d = di[o];
                        if d != 0.0 {
                            axpy(d, xi, gw_o);
                            *gb_o += d;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[wr];
            let mut prev = vec![0.0; rows * din];
            for ((pi, di), xi) in prev
                .chunks_exact_mut(din)
                .zip(delta.chunks_exact(dout))
                .zip(x.chunks_exact(din))
            {
                for (&d, wo) in di.iter().zip(w.chunks_exact(din)) {
                    if d != 0.0 {
                        axpy(d, wo, pi);
                    }
                }
                // ReLU: the stored activation is zero exactly where the unit was off.
                for (p, &act) in pi.iter_mut().zip(xi) {
                    if act <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok((loss * scale, grad))
    }
}

impl Policy for MlpPolicy {
    fn action_count(&self) -> usize {
        *self.dims.last().expect("output layer")
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
        Ok(softmax(&self.logits(state, goal, horizon)?))
    }

    fn greedy_action(&self, state: &[f64], goal: &[f64], horizon: Option<usize>) -> Result<usize> {
        Ok(super::argmax(&self.logits(state, goal, horizon)?))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
