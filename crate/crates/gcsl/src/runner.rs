//! Builds learners from a [`RunConfig`] and drives training runs.

use gcsl_core::buffer::Trajectory;
use gcsl_core::env::GoalEnv;
use gcsl_core::eval::EvalReport;
use gcsl_core::policy::{MlpPolicy, TabularPolicy};
use gcsl_core::rng::RngStreams;
use gcsl_core::trainer::{Learner, MetricsRow, MlpLearner, TabularLearner, Trainer};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub enum AnyLearner {
    Tabular(TabularLearner),
    Mlp(MlpLearner),
}

impl AnyLearner {
    pub fn as_learner(&mut self) -> &mut dyn Learner {
        match self {
            AnyLearner::Tabular(l) => l,
            AnyLearner::Mlp(l) => l,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        match self {
            AnyLearner::Tabular(l) => Checkpoint::Tabular(l.policy.clone()),
            AnyLearner::Mlp(l) => Checkpoint::Mlp(l.policy.clone()),
        }
    }
}

/// A fresh learner; MLP weights come from the run's `init` stream.
pub fn build_learner(config: &RunConfig, env: &dyn GoalEnv) -> Result<AnyLearner> {
    let horizon = env.spec().horizon;
    if config.uses_tabular() {
        let mdp = env
            .as_finite()
            .ok_or_else(|| CliError::Config("tabular policies need a finite environment".into()))?;
        let policy = TabularPolicy::new(
            mdp.state_count(),
            mdp.action_count(),
            config.time_varying.then_some(horizon),
            config.smoothing,
        )?;
        Ok(AnyLearner::Tabular(TabularLearner::new(
            policy,
            config.tabular_fit,
        )))
    } else {
        let mut rng = RngStreams::new(config.seed()).stream("init");
        let policy = MlpPolicy::for_env(env, &config.hidden, config.time_varying, &mut rng)?;
        Ok(AnyLearner::Mlp(MlpLearner::new(
            policy,
            config.learning_rate,
        )))
    }
}

pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub learner: AnyLearner,
    /// Evaluation of the final policy on the run's fixed goals.
    pub final_eval: EvalReport,
}

/// Trains per `config`. `on_row` sees each metrics row and returns `false`
/// to stop early.
pub fn run_training(
    config: &RunConfig,
    env: &dyn GoalEnv,
    demos: Vec<Trajectory>,
    mut on_row: impl FnMut(&MetricsRow) -> Result<bool>,
) -> Result<RunOutcome> {
    config.validate()?;
    let mut learner = build_learner(config, env)?;
    let mut trainer = Trainer::new(env, config.train_config())?;
    trainer.preload(demos)?;
    let mut failure = None;
    let rows = trainer.run(learner.as_learner(), |row| match on_row(row) {
        Ok(go_on) => go_on,
        Err(e) => {
            failure = Some(e);
            false
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let final_eval = trainer.evaluate(learner.as_learner())?;
    Ok(RunOutcome {
        rows,
        learner,
        final_eval,
    })
}
