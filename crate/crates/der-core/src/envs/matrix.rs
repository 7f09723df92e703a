//! One-step cooperative matrix game for two agents with three actions.
//!
//! The payoff has a unique optimum of 10 at the joint action (0, 0) and is
//! representable by a monotone factorization — both agents independently
//! prefer action 0 at the optimum — so value-factorized learners can
//! attain it.

use super::{validate_actions, Env, EnvError, EnvSpec, StepResult};
use rand_chacha::ChaCha8Rng;

/// Rows: agent 0's action. Columns: agent 1's action.
pub const PAYOFF: [[f64; 3]; 3] = [[10.0, 2.0, 0.0], [2.0, 4.0, 2.0], [0.0, 2.0, 6.0]];

#[derive(Debug, Clone)]
pub struct MatrixGame {
    spec: EnvSpec,
    finished: bool,
}

impl MatrixGame {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                n_agents: 2,
                n_actions: 3,
                obs_width: 1,
                state_width: 1,
                episode_limit: 1,
                reward_min: 0.0,
                reward_max: 10.0,
            },
            finished: true,
        }
    }
}

impl Default for MatrixGame {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for MatrixGame {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>) {
        self.finished = false;
        // A single dummy state; identical every reset.
        (vec![0.0], vec![vec![0.0], vec![0.0]])
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        validate_actions(&self.spec, actions)?;
        self.finished = true;
        Ok(StepResult {
            reward: PAYOFF[actions[0]][actions[1]],
            state: vec![0.0],
            obs: vec![vec![0.0], vec![0.0]],
            done: vec![true, true],
            team_done: true,
        })
    }

    fn fork(&self) -> Box<dyn Env> {
        Box::new(MatrixGame::new())
    }
}
