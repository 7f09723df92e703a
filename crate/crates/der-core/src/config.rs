//! Flat TOML run configuration. Every key has a default; unknown keys are
//! rejected so typos fail loudly before any training happens.

use crate::envs::{make_env, Env, EnvError};
use crate::nets::MixerKind;
use crate::optim::OptimKind;
use crate::schedule::{LinearSchedule, RatioSchedule};
use crate::trainer::{DivideMode, TrainConfig, TrainError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One training run, fully described. Defaults follow the method's
/// reference hyperparameters; `seed` is a base value that the CLI can
/// override per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Environment name: `matrix` or `switch_harvest`.
    pub env: String,
    /// Optional ASCII grid for `switch_harvest`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
    /// `joint-baseline`, `divide-only`, `der`, or `der-eta=X`.
    pub mode: String,
    /// `vdn` or `monotonic`.
    pub mixer: String,
    pub seed: u64,
    pub t_max: u64,
    pub gamma: f64,
    pub batch_episodes: usize,
    pub target_period: u64,
    pub learning_rate: f64,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_steps: u64,
    pub eta_start: f64,
    pub eta_end: f64,
    /// Fraction of `t_max` over which the selection ratio ramps.
    pub eta_warm_proportion: f64,
    pub priority_alpha: f64,
    pub priority_eps: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub buffer_capacity: usize,
    pub agent_hidden: usize,
    pub mixer_embed: usize,
    pub hyper_hidden: usize,
    pub mean_individual_loss: bool,
    /// Environment steps between greedy evaluations.
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Append every replayed transition to `replay_dump.csv`.
    pub replay_dump: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::new(20_000);
        Self {
            env: "matrix".into(),
            layout: None,
            mode: t.mode.to_string(),
            mixer: "monotonic".into(),
            seed: 0,
            t_max: t.t_max,
            gamma: t.gamma,
            batch_episodes: t.batch_episodes,
            target_period: t.target_period,
            learning_rate: t.learning_rate,
            optimizer: "adam".into(),
            epsilon_start: t.epsilon.start,
            epsilon_end: t.epsilon.end,
            epsilon_steps: t.epsilon.steps,
            eta_start: t.ratio.eta_start,
            eta_end: t.ratio.eta_end,
            eta_warm_proportion: t.ratio.proportion,
            priority_alpha: t.priority_alpha,
            priority_eps: t.priority_eps,
            beta_start: t.beta.start,
            beta_end: t.beta.end,
            buffer_capacity: t.buffer_capacity,
            agent_hidden: t.agent_hidden,
            mixer_embed: t.mixer_embed,
            hyper_hidden: t.hyper_hidden,
            mean_individual_loss: t.mean_individual_loss,
            eval_every: 1_000,
            eval_episodes: 20,
            replay_dump: false,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn mode(&self) -> Result<DivideMode, ConfigError> {
        self.mode.parse().map_err(ConfigError::Invalid)
    }

    pub fn mixer_kind(&self) -> Result<MixerKind, ConfigError> {
        match self.mixer.as_str() {
            "vdn" => Ok(MixerKind::Vdn),
            "monotonic" => Ok(MixerKind::Monotonic),
            other => Err(ConfigError::Invalid(format!(
                "unknown mixer '{other}' (expected vdn or monotonic)"
            ))),
        }
    }

    pub fn optimizer_kind(&self) -> Result<OptimKind, ConfigError> {
        match self.optimizer.as_str() {
            "adam" => Ok(OptimKind::Adam),
            "sgd" => Ok(OptimKind::Sgd),
            other => Err(ConfigError::Invalid(format!(
                "unknown optimizer '{other}' (expected adam or sgd)"
            ))),
        }
    }

    pub fn build_env(&self) -> Result<Box<dyn Env>, ConfigError> {
        Ok(make_env(&self.env, self.layout.as_deref())?)
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let cfg = TrainConfig {
            gamma: self.gamma,
            t_max: self.t_max,
            batch_episodes: self.batch_episodes,
            target_period: self.target_period,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer_kind()?,
            epsilon: LinearSchedule {
                start: self.epsilon_start,
                end: self.epsilon_end,
                steps: self.epsilon_steps,
            },
            ratio: RatioSchedule {
                eta_start: self.eta_start,
                eta_end: self.eta_end,
                proportion: self.eta_warm_proportion,
                t_max: self.t_max,
            },
            priority_alpha: self.priority_alpha,
            priority_eps: self.priority_eps,
            beta: LinearSchedule {
                start: self.beta_start,
                end: self.beta_end,
                steps: self.t_max,
            },
            mixer: self.mixer_kind()?,
            mode: self.mode()?,
            buffer_capacity: self.buffer_capacity,
            agent_hidden: self.agent_hidden,
            mixer_embed: self.mixer_embed,
            hyper_hidden: self.hyper_hidden,
            mean_individual_loss: self.mean_individual_loss,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full pre-flight check: hyperparameters, mode and mixer names, and
    /// the environment (including any custom layout) must all be valid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let train = self.train_config()?;
        let env = self.build_env()?;
        if self.eval_every == 0 {
            return Err(ConfigError::Invalid("eval_every must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(ConfigError::Invalid("eval_episodes must be positive".into()));
        }
        // One evaluation fires per crossed multiple of eval_every; a
        // single episode must not be able to skip a whole window, so that
        // every run of a given config produces the same number of
        // evaluation points.
        let limit = env.spec().episode_limit as u64;
        if self.eval_every < limit {
            return Err(ConfigError::Invalid(format!(
                "eval_every {} is shorter than the episode limit {limit}",
                self.eval_every
            )));
        }
        if train.target_period == 0 {
            return Err(ConfigError::Invalid("target_period must be positive".into()));
        }
        Ok(())
    }
}
