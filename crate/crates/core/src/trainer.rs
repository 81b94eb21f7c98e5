//! The GCSL loop: collect a trajectory toward a sampled goal, store it,
//! then fit the policy to hindsight-relabeled samples from the buffer.
//!
//! Collection is uniform-random during warmup and greedy afterwards. After
//! every collected trajectory of `T` steps the learner takes
//! `T * grad_steps_per_env_step` updates. Evaluation uses a fixed set of
//! goals drawn once per run.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use crate::buffer::{BufferConfig, BufferMode, ReplayBuffer, Trajectory};
use crate::env::{GoalEnv, State};
use crate::eval::{evaluate, run_episode, EvalReport};
use crate::policy::{Adam, MlpPolicy, Policy, TabularPolicy};
use crate::rng::{RngStreams, StreamRng, COLLECT, EVAL, GOAL, TRAIN};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    None,
    /// Condition the policy on the remaining horizon.
    TimeVarying,
    /// Relabel only goals at most `limited_h_max` steps ahead.
    LimitedRelabel,
    /// Keep only the most recent `on_policy_window` transitions.
    OnPolicy,
    /// Always collect with uniformly random actions.
    FixedCollection,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::None,
        Ablation::TimeVarying,
        Ablation::LimitedRelabel,
        Ablation::OnPolicy,
        Ablation::FixedCollection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::TimeVarying => "time-varying",
            Ablation::LimitedRelabel => "limited-relabel",
            Ablation::OnPolicy => "on-policy",
            Ablation::FixedCollection => "fixed-collection",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s || a.name().replace('-', "_") == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub total_env_steps: usize,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub grad_steps_per_env_step: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub ablation: Ablation,
    pub seed: u64,
    /// Probability of a uniform action during greedy collection.
    pub epsilon: f64,
    pub limited_h_max: usize,
    pub on_policy_window: usize,
    pub buffer_capacity: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_env_steps: 300_000,
            warmup_steps: 10_000,
            batch_size: 256,
            grad_steps_per_env_step: 1,
            eval_every: 10_000,
            eval_episodes: 200,
            ablation: Ablation::None,
            seed: 0,
            epsilon: 0.0,
            limited_h_max: 3,
            on_policy_window: 10_000,
            buffer_capacity: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.total_env_steps == 0 || !self.total_env_steps.is_multiple_of(horizon) {
            return bad(format!(
                "trainer.total_env_steps = {} must be a positive multiple of the horizon {horizon}",
                self.total_env_steps
            ));
        }
        if self.warmup_steps > self.total_env_steps {
            return bad("trainer.warmup_steps exceeds trainer.total_env_steps".into());
        }
        if self.batch_size == 0
            || self.grad_steps_per_env_step == 0
            || self.eval_every == 0
            || self.eval_episodes == 0
        {
            return bad(
                "batch size, gradient steps, eval interval and eval episodes must be positive"
                    .into(),
            );
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("trainer.epsilon must lie in [0, 1]".into());
        }
        if self.ablation == Ablation::LimitedRelabel && self.limited_h_max == 0 {
            return bad("limited relabeling needs h_max >= 1".into());
        }
        if self.ablation == Ablation::OnPolicy && self.on_policy_window < horizon {
            return bad(format!(
                "on-policy window {} is shorter than the horizon {horizon}",
                self.on_policy_window
            ));
        }
        Ok(())
    }

    pub fn buffer_config(&self) -> BufferConfig {
        let mode = match self.ablation {
            Ablation::LimitedRelabel => BufferMode::Limited {
                h_max: self.limited_h_max,
            },
            Ablation::OnPolicy => BufferMode::OnPolicy {
                window_transitions: self.on_policy_window,
            },
            _ => BufferMode::Full,
        };
        BufferConfig {
            mode,
            capacity: self.buffer_capacity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollectMode {
    Uniform,
    Greedy,
    /// Greedy, except a uniform action with the given probability.
    EpsilonGreedy(f64),
}

/// One episode toward `goal`. Time-varying policies see the remaining horizon.
pub fn collect_trajectory<P: Policy + ?Sized>(
    policy: &P,
    env: &dyn GoalEnv,
    goal: &[f64],
    mode: CollectMode,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    let action_count = env.spec().action_count;
    let tv = policy.is_time_varying();
    run_episode(env, goal, rng, |s, h, rng| {
        let h = tv.then_some(h);
        match mode {
            CollectMode::Uniform => Ok(rng.random_range(0..action_count)),
            CollectMode::Greedy => policy.greedy_action(s, goal, h),
            CollectMode::EpsilonGreedy(eps) => {
                if rng.random::<f64>() < eps {
                    Ok(rng.random_range(0..action_count))
                } else {
                    policy.greedy_action(s, goal, h)
                }
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub env_steps: usize,
    pub median_final_distance: f64,
    pub success_ratio: f64,
    /// NaN when no update happened since the previous row.
    pub mean_training_loss: f64,
}

/// What a learner sees after each collected trajectory.
pub struct UpdateContext<'a> {
    pub buffer: &'a ReplayBuffer,
    /// Trajectories evicted by the latest append that the learner had
    /// already been trained on.
    pub evicted: &'a [Trajectory],
    /// Set on the first update: the whole buffer is new to the learner.
    pub first_update: bool,
    pub updates: usize,
    pub batch_size: usize,
    pub rng: &'a mut dyn RngCore,
}

pub trait Learner: Policy {
    /// Fits the policy to relabeled buffer data; returns the mean training
    /// loss of this round, if any was computed.
    fn update(&mut self, ctx: UpdateContext<'_>) -> Result<Option<f64>>;
}

/// MLP policy trained by Adam on sampled relabeled minibatches.
#[derive(Debug, Clone)]
pub struct MlpLearner {
    pub policy: MlpPolicy,
    pub adam: Adam,
}

impl MlpLearner {
    pub fn new(policy: MlpPolicy, lr: f64) -> Self {
        let adam = Adam::new(policy.parameter_count(), lr);
        Self { policy, adam }
    }
}

impl Policy for MlpLearner {
    fn action_count(&self) -> usize {
        self.policy.action_count()
    }
    fn horizon_len(&self) -> Option<usize> {
        self.policy.horizon_len()
    }
    fn action_probabilities(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
    ) -> Result<Vec<f64>> {
        self.policy.action_probabilities(state, goal, horizon)
    }
    fn greedy_action(&self, state: &[f64], goal: &[f64], horizon: Option<usize>) -> Result<usize> {
        self.policy.greedy_action(state, goal, horizon)
    }
}

impl Learner for MlpLearner {
    fn update(&mut self, ctx: UpdateContext<'_>) -> Result<Option<f64>> {
        let mut total = 0.0;
        for _ in 0..ctx.updates {
            let batch = ctx.buffer.sample_batch(ctx.batch_size, ctx.rng)?;
            let (loss, grad) = self.policy.nll_loss_and_gradient(&batch)?;
            self.adam.step(self.policy.params_mut(), &grad)?;
            total += loss;
        }
        Ok((ctx.updates > 0).then(|| total / ctx.updates as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TabularFit {
    /// Counts track the buffer's relabel distribution exactly: each stored
    /// trajectory contributes every `(t, h)` pair with its sampling weight,
    /// and evicted trajectories are subtracted again.
    Exact,
    /// One count per freshly sampled relabeled example, never forgotten.
    Sampled,
}

impl TabularFit {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(TabularFit::Exact),
            "sampled" => Some(TabularFit::Sampled),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TabularFit::Exact => "exact",
            TabularFit::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TabularLearner {
    pub policy: TabularPolicy,
    pub fit: TabularFit,
}

impl TabularLearner {
    pub fn new(policy: TabularPolicy, fit: TabularFit) -> Self {
        Self { policy, fit }
    }

    fn add_trajectory(&mut self, buffer: &ReplayBuffer, tr: &Trajectory, sign: f64) -> Result<()> {
        for (t, h, w) in buffer.relabel_weights(tr) {
            self.policy
                .observe(&tr.states[t], tr.actions[t], &tr.states[t + h], h, sign * w)?;
        }
        Ok(())
    }

    /// Weighted mean negative log-likelihood of a trajectory's relabeled pairs.
    fn trajectory_nll(&self, buffer: &ReplayBuffer, tr: &Trajectory) -> Result<f64> {
        let (mut total, mut weight) = (0.0, 0.0);
        for (t, h, w) in buffer.relabel_weights(tr) {
            let horizon = self.policy.horizon_len().map(|_| h);
            let p = self
                .policy
                .action_probabilities(&tr.states[t], &tr.states[t + h], horizon)?;
            total -= w * libm::log(p[tr.actions[t]]);
            weight += w;
        }
        Ok(total / weight)
    }
}

impl Policy for TabularLearner {
    fn action_count(&self) -> usize {
        self.policy.action_count()
    }
    fn horizon_len(&self) -> Option<usize> {
        self.policy.horizon_len()
    }
    fn action_probabilities(
        &self,
        state: &[f64],
        goal: &[f64],
        horizon: Option<usize>,
    ) -> Result<Vec<f64>> {
        self.policy.action_probabilities(state, goal, horizon)
    }
    fn greedy_action(&self, state: &[f64], goal: &[f64], horizon: Option<usize>) -> Result<usize> {
        self.policy.greedy_action(state, goal, horizon)
    }
}

impl Learner for TabularLearner {
    fn update(&mut self, ctx: UpdateContext<'_>) -> Result<Option<f64>> {
        match self.fit {
            TabularFit::Exact => {
                if ctx.first_update {
                    for tr in ctx.buffer.trajectories() {
                        self.add_trajectory(ctx.buffer, tr, 1.0)?;
                    }
                } else if let Some(tr) = ctx.buffer.latest() {
                    self.add_trajectory(ctx.buffer, tr, 1.0)?;
                }
                for tr in ctx.evicted {
                    self.add_trajectory(ctx.buffer, tr, -1.0)?;
                }
                match ctx.buffer.latest() {
                    Some(tr) => self.trajectory_nll(ctx.buffer, tr).map(Some),
                    None => Ok(None),
                }
            }
            TabularFit::Sampled => {
                let tv = self.policy.horizon_len().is_some();
                let (mut total, mut n) = (0.0, 0usize);
                for _ in 0..ctx.updates {
                    let batch = ctx.buffer.sample_batch(ctx.batch_size, ctx.rng)?;
                    for ex in &batch {
                        let h = tv.then_some(ex.horizon);
                        total -= libm::log(
                            self.policy.action_probabilities(&ex.state, &ex.goal, h)?[ex.action],
                        );
                        n += 1;
                    }
                    self.policy.fit(&batch)?;
                }
                Ok((n > 0).then(|| total / n as f64))
            }
        }
    }
}

/// Runs the GCSL loop on one environment.
pub struct Trainer<'a> {
    env: &'a dyn GoalEnv,
    config: TrainConfig,
    buffer: ReplayBuffer,
    streams: RngStreams,
    goal_rng: StreamRng,
    collect_rng: StreamRng,
    train_rng: StreamRng,
    eval_goals: Vec<State>,
    env_steps: usize,
    iteration: u64,
    training_started: bool,
    updates_done: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(env: &'a dyn GoalEnv, config: TrainConfig) -> Result<Self> {
        config.validate(env.spec().horizon)?;
        let streams = RngStreams::new(config.seed);
        let eval_goals = evaluation_goals(env, config.eval_episodes, config.seed);
        Ok(Self {
            env,
            buffer: ReplayBuffer::new(config.buffer_config())?,
            goal_rng: streams.stream(GOAL),
            collect_rng: streams.stream(COLLECT),
            train_rng: streams.stream(TRAIN),
            streams,
            config,
            eval_goals,
            env_steps: 0,
            iteration: 0,
            training_started: false,
            updates_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    /// Number of learner updates performed so far.
    pub fn updates_done(&self) -> u64 {
        self.updates_done
    }

    pub fn eval_goals(&self) -> &[State] {
        &self.eval_goals
    }

    /// Puts demonstration trajectories in the buffer before training starts.
    pub fn preload(&mut self, demos: impl IntoIterator<Item = Trajectory>) -> Result<usize> {
        if self.env_steps > 0 {
            return Err(Error::InvalidConfig(
                "demonstrations must be loaded before training".into(),
            ));
        }
        let mut n = 0;
        for tr in demos {
            if tr.states[0].len() != self.env.spec().state_dim && self.env.as_finite().is_none() {
                return Err(Error::MalformedTrajectory(
                    "demonstration state dimension differs from env".into(),
                ));
            }
            self.buffer.append(tr)?;
            n += 1;
        }
        Ok(n)
    }

    pub fn evaluate<P: Policy + ?Sized>(&self, policy: &P) -> Result<EvalReport> {
        let streams = evaluation_streams(self.streams.seed());
        evaluate(
            policy,
            self.env,
            &self.eval_goals,
            self.env.spec().goal_threshold,
            &streams,
            true,
        )
    }

    fn collect_mode(&self) -> CollectMode {
        if self.env_steps < self.config.warmup_steps
            || self.config.ablation == Ablation::FixedCollection
        {
            CollectMode::Uniform
        } else if self.config.epsilon > 0.0 {
            CollectMode::EpsilonGreedy(self.config.epsilon)
        } else {
            CollectMode::Greedy
        }
    }

    /// Collects one trajectory and, once warmup is over, updates the learner.
    /// Returns the update's mean loss, if any.
    pub fn step<L: Learner + ?Sized>(&mut self, learner: &mut L) -> Result<Option<f64>> {
        let goal = self.env.sample_goal(&mut self.goal_rng);
        let mode = self.collect_mode();
        let mut tr = collect_trajectory(learner, self.env, &goal, mode, &mut self.collect_rng)?;
        tr.seed = self.config.seed;
        tr.iteration = self.iteration;
        self.iteration += 1;
        self.env_steps += tr.horizon();
        let evicted = self.buffer.append(tr)?;

        if self.env_steps < self.config.warmup_steps {
            return Ok(None);
        }
        let first_update = !self.training_started;
        self.training_started = true;
        let updates = self.env.spec().horizon * self.config.grad_steps_per_env_step;
        self.updates_done += updates as u64;
        learner.update(UpdateContext {
            buffer: &self.buffer,
            evicted: if first_update { &[] } else { &evicted },
            first_update,
            updates,
            batch_size: self.config.batch_size,
            rng: &mut self.train_rng,
        })
    }

    /// Trains until the step budget is spent. A metrics row is emitted each
    /// time `eval_every` more environment steps have been consumed, plus one
    /// at the end of the budget.
    pub fn run<L: Learner + ?Sized>(
        &mut self,
        learner: &mut L,
        mut on_row: impl FnMut(&MetricsRow) -> bool,
    ) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        let mut next_eval = self.config.eval_every;
        let (mut loss_sum, mut loss_n) = (0.0, 0usize);
        while self.env_steps < self.config.total_env_steps {
            if let Some(loss) = self.step(learner)? {
                loss_sum += loss;
                loss_n += 1;
            }
            let done = self.env_steps >= self.config.total_env_steps;
            if self.env_steps >= next_eval || done {
                while next_eval <= self.env_steps {
                    next_eval += self.config.eval_every;
                }
                let report = self.evaluate(&*learner)?;
                let row = MetricsRow {
                    env_steps: self.env_steps,
                    median_final_distance: report.median_final_distance,
                    success_ratio: report.success_ratio,
                    mean_training_loss: if loss_n > 0 {
                        loss_sum / loss_n as f64
                    } else {
                        f64::NAN
                    },
                };
                (loss_sum, loss_n) = (0.0, 0);
                rows.push(row);
                if !on_row(&row) {
                    break;
                }
            }
        }
        Ok(rows)
    }
}

/// Convenience wrapper: preload `demos`, train to the configured budget.
pub fn train<L: Learner + ?Sized>(
    env: &dyn GoalEnv,
    learner: &mut L,
    config: &TrainConfig,
    demos: Vec<Trajectory>,
) -> Result<Vec<MetricsRow>> {
    if config.ablation == Ablation::TimeVarying && !learner.is_time_varying() {
        return Err(Error::InvalidConfig(
            "time-varying ablation needs a horizon-conditioned policy".into(),
        ));
    }
    let mut trainer = Trainer::new(env, config.clone())?;
    trainer.preload(demos)?;
    trainer.run(learner, |_| true)
}

/// Hidden sizes and update ratios of the robustness sweep.
pub const SWEEP_HIDDEN: [usize; 3] = [250, 500, 1000];
pub const SWEEP_GRAD_STEPS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub hidden_size: usize,
    pub grad_steps: usize,
}

pub fn sweep_grid() -> Vec<SweepPoint> {
    SWEEP_HIDDEN
        .iter()
        .flat_map(|&hidden_size| {
            SWEEP_GRAD_STEPS.iter().map(move |&grad_steps| SweepPoint {
                hidden_size,
                grad_steps,
            })
        })
        .collect()
}

/// One sweep configuration: an MLP with two hidden layers of `hidden_size`
/// trained with `grad_steps` updates per environment step. Every point uses
/// the base seed.
pub fn run_sweep_point(
    env: &dyn GoalEnv,
    base: &TrainConfig,
    point: SweepPoint,
    learning_rate: f64,
    time_varying: bool,
) -> Result<MetricsRow> {
    let config = TrainConfig {
        grad_steps_per_env_step: point.grad_steps,
        ..base.clone()
    };
    let mut init_rng = RngStreams::new(config.seed).stream("init");
    let hidden = [point.hidden_size, point.hidden_size];
    let policy = MlpPolicy::for_env(env, &hidden, time_varying, &mut init_rng)?;
    let mut learner = MlpLearner::new(policy, learning_rate);
    let rows = train(env, &mut learner, &config, Vec::new())?;
    rows.last()
        .copied()
        .ok_or_else(|| Error::InvalidConfig("run produced no metrics".into()))
}

/// Interquartile range with linear interpolation between order statistics.
pub fn interquartile_range(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (libm::floor(pos) as usize, libm::ceil(pos) as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    q(0.75) - q(0.25)
}

/// The fixed evaluation goals of a run with this seed.
pub fn evaluation_goals(env: &dyn GoalEnv, n: usize, seed: u64) -> Vec<State> {
    let mut rng = RngStreams::new(seed).stream("eval-goals");
    (0..n).map(|_| env.sample_goal(&mut rng)).collect()
}

/// Streams for evaluation rollouts; episode `i` uses `indexed(EVAL, i)`.
pub fn evaluation_streams(seed: u64) -> RngStreams {
    RngStreams::new(seed).child(EVAL, 0)
}
