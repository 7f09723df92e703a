//! Desk-scale cooperative environments with a shared team reward and
//! per-agent done flags: a one-step matrix game and a gridworld with
//! unequal roles.
//!
//! Transitions and observations are deterministic functions of state and
//! actions; the only stochasticity enters through `reset`'s rng (and the
//! default layouts don't even use that). Partial observability in the
//! gridworld comes from a limited egocentric window.

mod matrix;
mod switch_harvest;

pub use matrix::{MatrixGame, PAYOFF};
pub use switch_harvest::{SwitchHarvest, DEFAULT_LAYOUT};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("expected {want} actions, got {got}")]
    ActionCountMismatch { got: usize, want: usize },
    #[error("action {action} out of range (|A| = {n_actions})")]
    ActionOutOfRange { action: usize, n_actions: usize },
    #[error("bad layout: {0}")]
    BadLayout(String),
    #[error("unknown environment '{0}'")]
    UnknownEnv(String),
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_width: usize,
    pub state_width: usize,
    pub episode_limit: usize,
    pub reward_min: f64,
    pub reward_max: f64,
}

/// Everything an environment reports after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub done: Vec<bool>,
    pub team_done: bool,
}

pub trait Env {
    fn spec(&self) -> &EnvSpec;

    /// Start a new episode; returns the initial global state and per-agent
    /// observations. Deterministic under a fixed rng state.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>);

    /// Advance one step. Finished agents' actions are ignored.
    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError>;

    /// A fresh instance with identical configuration (used to give
    /// evaluation its own episode stream).
    fn fork(&self) -> Box<dyn Env>;
}

/// Construct an environment by name. `layout` overrides the gridworld's
/// default map.
pub fn make_env(name: &str, layout: Option<&str>) -> Result<Box<dyn Env>, EnvError> {
    match name {
        "matrix" => Ok(Box::new(MatrixGame::new())),
        "switch_harvest" => Ok(Box::new(SwitchHarvest::new(
            layout.unwrap_or(DEFAULT_LAYOUT),
        )?)),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

pub(crate) fn validate_actions(spec: &EnvSpec, actions: &[usize]) -> Result<(), EnvError> {
    if actions.len() != spec.n_agents {
        return Err(EnvError::ActionCountMismatch { got: actions.len(), want: spec.n_agents });
    }
    for &a in actions {
        if a >= spec.n_actions {
            return Err(EnvError::ActionOutOfRange { action: a, n_actions: spec.n_actions });
        }
    }
    Ok(())
}
