//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! # grid-rooms, tabular
//! env.name = grid-rooms
//! policy.hidden = [400, 300]
//! trainer.ablation = on-policy
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected.
//! Later assignments win, so command-line overrides are applied by setting
//! keys after the file has been read.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gcsl_core::buffer::BufferMode;
use gcsl_core::env::{FiniteMdp, FourRooms, FourRoomsConfig, GoalEnv};
use gcsl_core::policy::TabularPolicy;
use gcsl_core::trainer::{Ablation, TabularFit, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvName {
    FourRooms,
    GridRooms,
    Chain,
}

impl EnvName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "four-rooms" => Some(EnvName::FourRooms),
            "grid-rooms" => Some(EnvName::GridRooms),
            "chain" => Some(EnvName::Chain),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvName::FourRooms => "four-rooms",
            EnvName::GridRooms => "grid-rooms",
            EnvName::Chain => "chain",
        }
    }

    pub fn default_horizon(self) -> usize {
        match self {
            EnvName::FourRooms => 50,
            EnvName::GridRooms => 30,
            EnvName::Chain => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Tabular on finite environments, MLP otherwise.
    Auto,
    Tabular,
    Mlp,
}

/// An environment built from a config: either continuous or enumerable.
pub enum BuiltEnv {
    Continuous(FourRooms),
    Finite(FiniteMdp),
}

impl BuiltEnv {
    pub fn as_env(&self) -> &dyn GoalEnv {
        match self {
            BuiltEnv::Continuous(e) => e,
            BuiltEnv::Finite(m) => m,
        }
    }

    pub fn finite(&self) -> Option<&FiniteMdp> {
        match self {
            BuiltEnv::Finite(m) => Some(m),
            BuiltEnv::Continuous(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvName,
    /// `None` picks the environment's default.
    pub horizon: Option<usize>,
    pub step_scale: f64,
    pub door_width: f64,
    pub goal_threshold: f64,
    pub chain_states: usize,

    pub policy_kind: PolicyKind,
    pub hidden: Vec<usize>,
    pub time_varying: bool,
    pub smoothing: f64,
    pub learning_rate: f64,

    pub buffer_capacity: Option<usize>,
    pub h_max: usize,
    pub window: usize,

    pub trainer: TrainConfig,
    pub tabular_fit: TabularFit,
    pub demo_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let four = FourRoomsConfig::default();
        Self {
            env: EnvName::FourRooms,
            horizon: None,
            step_scale: four.step_scale,
            door_width: four.door_width,
            goal_threshold: four.goal_threshold,
            chain_states: 4,
            policy_kind: PolicyKind::Auto,
            hidden: vec![400, 300],
            time_varying: false,
            smoothing: TabularPolicy::DEFAULT_SMOOTHING,
            learning_rate: gcsl_core::policy::Adam::DEFAULT_LR,
            buffer_capacity: None,
            h_max: 3,
            window: 10_000,
            trainer: TrainConfig::default(),
            tabular_fit: TabularFit::Exact,
            demo_path: None,
        }
    }
}

/// Every accepted key, in the order they are written to `run.json`.
pub const KEYS: [&str; 25] = [
    "env.name",
    "env.horizon",
    "env.step_scale",
    "env.door_width",
    "env.goal_threshold",
    "env.chain_states",
    "policy.kind",
    "policy.hidden",
    "policy.time_varying",
    "policy.smoothing",
    "policy.learning_rate",
    "buffer.capacity",
    "buffer.h_max",
    "buffer.window",
    "trainer.total_env_steps",
    "trainer.warmup_steps",
    "trainer.batch_size",
    "trainer.grad_steps_per_env_step",
    "trainer.eval_every",
    "trainer.eval_episodes",
    "trainer.ablation",
    "trainer.epsilon",
    "trainer.tabular_fit",
    "trainer.demo_path",
    "seed",
];

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        config.apply_file(path)?;
        Ok(config)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text)
            .map_err(|(line, message)| CliError::Parse {
                path: path.to_path_buf(),
                line,
                message,
            })
    }

    /// Applies config text; errors carry the 1-based line number.
    pub fn apply_text(&mut self, text: &str) -> std::result::Result<(), (usize, String)> {
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err((i + 1, format!("expected `key = value`, got `{line}`")));
            };
            self.set(key.trim(), value.trim()).map_err(|e| (i + 1, e))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "override `{assignment}` is not of the form key=value"
            ))
        })?;
        self.set(key.trim(), value.trim()).map_err(CliError::Config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = unquote(value);
        let t = &mut self.trainer;
        match key {
            "env.name" => {
                self.env = EnvName::parse(value)
                    .ok_or_else(|| bad_choice(key, value, "four-rooms, grid-rooms, chain"))?
            }
            "env.horizon" => self.horizon = Some(num(key, value)?),
            "env.step_scale" => self.step_scale = num(key, value)?,
            "env.door_width" => self.door_width = num(key, value)?,
            "env.goal_threshold" => self.goal_threshold = num(key, value)?,
            "env.chain_states" => self.chain_states = num(key, value)?,
            "policy.kind" => {
                self.policy_kind = match value {
                    "auto" => PolicyKind::Auto,
                    "tabular" => PolicyKind::Tabular,
                    "mlp" => PolicyKind::Mlp,
                    _ => return Err(bad_choice(key, value, "auto, tabular, mlp")),
                }
            }
            "policy.hidden" => self.hidden = list(key, value)?,
            "policy.time_varying" => self.time_varying = boolean(key, value)?,
            "policy.smoothing" => self.smoothing = num(key, value)?,
            "policy.learning_rate" => self.learning_rate = num(key, value)?,
            "buffer.capacity" => {
                self.buffer_capacity = if value == "none" {
                    None
                } else {
                    Some(num(key, value)?)
                };
            }
            "buffer.h_max" => self.h_max = num(key, value)?,
            "buffer.window" => self.window = num(key, value)?,
            "trainer.total_env_steps" => t.total_env_steps = num(key, value)?,
            "trainer.warmup_steps" => t.warmup_steps = num(key, value)?,
            "trainer.batch_size" => t.batch_size = num(key, value)?,
            "trainer.grad_steps_per_env_step" => t.grad_steps_per_env_step = num(key, value)?,
            "trainer.eval_every" => t.eval_every = num(key, value)?,
            "trainer.eval_episodes" => t.eval_episodes = num(key, value)?,
            "trainer.ablation" => {
                t.ablation = Ablation::parse(value).ok_or_else(|| {
                    bad_choice(
                        key,
                        value,
                        "none, time-varying, limited-relabel, on-policy, fixed-collection",
                    )
                })?
            }
            "trainer.epsilon" => t.epsilon = num(key, value)?,
            "trainer.tabular_fit" => {
                self.tabular_fit = TabularFit::parse(value)
                    .ok_or_else(|| bad_choice(key, value, "exact, sampled"))?
            }
            "trainer.demo_path" => {
                self.demo_path = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "seed" => t.seed = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(self.env.default_horizon())
    }

    pub fn seed(&self) -> u64 {
        self.trainer.seed
    }

    pub fn build_env(&self) -> Result<BuiltEnv> {
        let horizon = self.horizon();
        Ok(match self.env {
            EnvName::FourRooms => BuiltEnv::Continuous(FourRooms::new(FourRoomsConfig {
                horizon,
                step_scale: self.step_scale,
                door_width: self.door_width,
                goal_threshold: self.goal_threshold,
            })?),
            EnvName::GridRooms => BuiltEnv::Finite(FiniteMdp::grid_rooms(horizon)?),
            EnvName::Chain => BuiltEnv::Finite(FiniteMdp::chain(self.chain_states, horizon)?),
        })
    }

    pub fn uses_tabular(&self) -> bool {
        match self.policy_kind {
            PolicyKind::Tabular => true,
            PolicyKind::Mlp => false,
            PolicyKind::Auto => self.env != EnvName::FourRooms,
        }
    }

    /// The trainer settings with buffer keys folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            limited_h_max: self.h_max,
            on_policy_window: self.window,
            buffer_capacity: self.buffer_capacity,
            ..self.trainer.clone()
        }
    }

    /// Checks cross-key consistency and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon();
        self.train_config()
            .validate(horizon)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(CliError::Config(
                "policy.hidden needs at least one positive layer size".into(),
            ));
        }
        if self.uses_tabular() && self.env == EnvName::FourRooms {
            return Err(CliError::Config(
                "tabular policies need a finite environment".into(),
            ));
        }
        if self.trainer.ablation == Ablation::TimeVarying && !self.time_varying {
            return Err(CliError::Config(
                "trainer.ablation = time-varying needs policy.time_varying = true".into(),
            ));
        }
        if let Some(p) = &self.demo_path {
            if !p.is_file() {
                return Err(CliError::Config(format!(
                    "demo file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// The buffer mode the trainer will use.
    pub fn buffer_mode(&self) -> BufferMode {
        self.train_config().buffer_config().mode
    }

    /// `(key, value)` for every key, formatted so that feeding them back
    /// through [`set`](Self::set) reproduces this config.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let t = &self.trainer;
        let mut hidden = String::from("[");
        for (i, h) in self.hidden.iter().enumerate() {
            if i > 0 {
                hidden.push_str(", ");
            }
            write!(hidden, "{h}").unwrap();
        }
        hidden.push(']');
        let values = [
            self.env.name().to_string(),
            self.horizon().to_string(),
            self.step_scale.to_string(),
            self.door_width.to_string(),
            self.goal_threshold.to_string(),
            self.chain_states.to_string(),
            match self.policy_kind {
                PolicyKind::Auto => "auto",
                PolicyKind::Tabular => "tabular",
                PolicyKind::Mlp => "mlp",
            }
            .to_string(),
            hidden,
            self.time_varying.to_string(),
            self.smoothing.to_string(),
            self.learning_rate.to_string(),
            self.buffer_capacity
                .map_or("none".to_string(), |c| c.to_string()),
            self.h_max.to_string(),
            self.window.to_string(),
            t.total_env_steps.to_string(),
            t.warmup_steps.to_string(),
            t.batch_size.to_string(),
            t.grad_steps_per_env_step.to_string(),
            t.eval_every.to_string(),
            t.eval_episodes.to_string(),
            t.ablation.name().to_string(),
            t.epsilon.to_string(),
            self.tabular_fit.name().to_string(),
            self.demo_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            t.seed.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(before, _)| before)
}

fn unquote(value: &str) -> &str {
    value
        .strip_prefix('"')
        .and_then(|v| v.strip_suffix('"'))
        .unwrap_or(value)
}

fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .replace('_', "")
        .parse()
        .map_err(|_| format!("`{key}`: cannot parse `{value}`"))
}

fn boolean(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{key}`: expected true or false, got `{value}`")),
    }
}

fn list(key: &str, value: &str) -> std::result::Result<Vec<usize>, String> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| format!("`{key}`: expected a list like [400, 300], got `{value}`"))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn bad_choice(key: &str, value: &str, choices: &str) -> String {
    format!("`{key}`: `{value}` is not one of {choices}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_comments_and_quotes() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# header\nenv.name = \"grid-rooms\"\npolicy.hidden = [64, 32] # small\n\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(c.env, EnvName::GridRooms);
        assert_eq!(c.hidden, vec![64, 32]);
        assert_eq!(c.seed(), 7);
        assert_eq!(c.horizon(), 30);
    }

    #[test]
    fn unknown_key_reports_line() {
        let mut c = RunConfig::default();
        let (line, msg) = c.apply_text("seed = 1\npolicy.width = 3\n").unwrap_err();
        assert_eq!(line, 2);
        assert!(msg.contains("policy.width"));
    }

    #[test]
    fn pairs_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("env.name = chain\nenv.horizon = 3\ntrainer.ablation = limited-relabel\nbuffer.capacity = 12\ntrainer.total_env_steps = 300").unwrap();
        let mut back = RunConfig::default();
        for (k, v) in c.pairs() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn limited_relabel_uses_three_steps() {
        let mut c = RunConfig::default();
        c.set("trainer.ablation", "limited-relabel").unwrap();
        assert_eq!(c.buffer_mode(), BufferMode::Limited { h_max: 3 });
    }
}
