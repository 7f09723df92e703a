//! Pure demo logic behind the browser bindings: a live matrix-game
//! trainer, a gridworld rollout stepper, and previews of the selection
//! schedule and priority weighting. Everything here is plain Rust so it
//! can be unit-tested natively; `lib.rs` only wraps it for JS.

use der_core::envs::{Env, MatrixGame, SwitchHarvest, DEFAULT_LAYOUT, PAYOFF};
use der_core::nets::{agent_q, argmax, init_params, MixerKind, NetDims, ParamStore, Templates};
use der_core::replay::{is_weights, priority_probs};
use der_core::schedule::RatioSchedule;
use der_core::trainer::{DivideMode, TrainConfig, TrainState, UpdateMetrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Matrix-game demo horizon; also drives the β and η ramps.
pub const MATRIX_T_MAX: u64 = 20_000;
/// Exploration decays faster than in batch runs so a browser session sees
/// the greedy policy settle within a couple of minutes.
const MATRIX_EPSILON_STEPS: u64 = 8_000;

/// Snapshot of the live matrix-game trainer, serialized to JSON for the
/// page. `q_rows[i][a]` is agent i's utility for action a at the game's
/// single observation; `greedy_return` is the payoff of the joint greedy
/// action, which for this one-step game equals the greedy evaluation
/// return.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixSnapshot {
    pub t: u64,
    pub t_max: u64,
    pub episodes: u64,
    pub updates: u64,
    pub finished: bool,
    pub epsilon: f64,
    pub eta: f64,
    pub l_tot: f64,
    pub l_ind: f64,
    pub mean_abs_delta: f64,
    pub selected: usize,
    pub q_rows: Vec<Vec<f64>>,
    pub greedy_actions: Vec<usize>,
    pub greedy_return: f64,
    pub payoff: Vec<Vec<f64>>,
}

/// Interactive trainer on the two-agent matrix game. One `step` call runs
/// whole episodes (one environment step each here), so the page can pace
/// training against animation frames.
pub struct MatrixTrainer {
    env: MatrixGame,
    state: TrainState,
    last_epsilon: f64,
    last_update: Option<UpdateMetrics>,
}

impl MatrixTrainer {
    pub fn new(mode: &str, seed: u64) -> Result<Self, String> {
        let mode: DivideMode = mode.parse()?;
        let env = MatrixGame::new();
        let mut config = TrainConfig::new(MATRIX_T_MAX);
        config.mode = mode;
        config.mixer = MixerKind::Vdn;
        config.agent_hidden = 32;
        config.mixer_embed = 16;
        config.hyper_hidden = 16;
        config.epsilon.steps = MATRIX_EPSILON_STEPS;
        let state =
            TrainState::init(config, env.spec(), seed).map_err(|e| e.to_string())?;
        Ok(Self { env, state, last_epsilon: 1.0, last_update: None })
    }

    /// Run up to `episodes` training episodes, stopping at the demo
    /// horizon, then report the current snapshot.
    pub fn step(&mut self, episodes: u32) -> Result<MatrixSnapshot, String> {
        for _ in 0..episodes {
            if self.state.t_step >= MATRIX_T_MAX {
                break;
            }
            let outcome = self.state.advance(&mut self.env).map_err(|e| e.to_string())?;
            self.last_epsilon = outcome.epsilon;
            if let Some(update) = outcome.update {
                self.last_update = Some(update);
            }
        }
        self.snapshot()
    }

    pub fn snapshot(&self) -> Result<MatrixSnapshot, String> {
        let dims = &self.state.dims;
        let obs = vec![0.0; dims.obs_width];
        let mut q_rows = Vec::with_capacity(dims.n_agents);
        let mut greedy_actions = Vec::with_capacity(dims.n_agents);
        for i in 0..dims.n_agents {
            let row = agent_q(
                &self.state.templates.agent,
                &self.state.store.agent,
                dims,
                &obs,
                None,
                i,
            )
            .map_err(|e| e.to_string())?;
            greedy_actions.push(argmax(&row));
            q_rows.push(row.data().to_vec());
        }
        let greedy_return = PAYOFF[greedy_actions[0]][greedy_actions[1]];
        let update = self.last_update.unwrap_or(UpdateMetrics {
            l_tot: 0.0,
            l_ind: 0.0,
            mean_abs_delta: 0.0,
            eta: 0.0,
            selected: 0,
        });
        Ok(MatrixSnapshot {
            t: self.state.t_step,
            t_max: MATRIX_T_MAX,
            episodes: self.state.episodes,
            updates: self.state.updates,
            finished: self.state.t_step >= MATRIX_T_MAX,
            epsilon: self.last_epsilon,
            eta: update.eta,
            l_tot: update.l_tot,
            l_ind: update.l_ind,
            mean_abs_delta: update.mean_abs_delta,
            selected: update.selected,
            q_rows,
            greedy_actions,
            greedy_return,
            payoff: PAYOFF.iter().map(|row| row.to_vec()).collect(),
        })
    }
}

/// One rendered gridworld step, serialized to JSON for the page.
#[derive(Debug, Clone, Serialize)]
pub struct GridFrame {
    pub grid: String,
    pub episode: u64,
    pub t: usize,
    pub episode_limit: usize,
    pub reward: f64,
    pub episode_return: f64,
    pub unlocked: bool,
    pub team_done: bool,
}

/// Steps the two-role gridworld under an ε-greedy policy over a freshly
/// initialized (untrained) utility network, to show the environment's
/// dynamics: the unlocker must stand on the switch before the harvester's
/// crops yield anything.
pub struct GridRollout {
    env: SwitchHarvest,
    dims: NetDims,
    templates: Templates,
    store: ParamStore,
    rng: ChaCha8Rng,
    epsilon: f64,
    obs: Vec<Vec<f64>>,
    last_actions: Vec<Option<usize>>,
    done: Vec<bool>,
    episode: u64,
    t: usize,
    episode_return: f64,
    last_reward: f64,
    finished: bool,
}

impl GridRollout {
    pub fn new(seed: u64, epsilon: f64) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(format!("epsilon must lie in [0, 1], got {epsilon}"));
        }
        let env = SwitchHarvest::new(DEFAULT_LAYOUT).map_err(|e| e.to_string())?;
        let spec = env.spec().clone();
        let dims = NetDims {
            n_agents: spec.n_agents,
            n_actions: spec.n_actions,
            obs_width: spec.obs_width,
            state_width: spec.state_width,
            agent_hidden: 32,
            mixer_embed: 16,
            hyper_hidden: 16,
        };
        let templates = Templates::new(&dims, MixerKind::Vdn).map_err(|e| e.to_string())?;
        let store = init_params(seed, &dims, MixerKind::Vdn).map_err(|e| e.to_string())?;
        let rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let mut demo = Self {
            env,
            dims,
            templates,
            store,
            rng,
            epsilon,
            obs: Vec::new(),
            last_actions: Vec::new(),
            done: Vec::new(),
            episode: 0,
            t: 0,
            episode_return: 0.0,
            last_reward: 0.0,
            finished: true,
        };
        demo.reset();
        Ok(demo)
    }

    pub fn set_epsilon(&mut self, epsilon: f64) -> Result<(), String> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(format!("epsilon must lie in [0, 1], got {epsilon}"));
        }
        self.epsilon = epsilon;
        Ok(())
    }

    pub fn reset(&mut self) {
        let (_state, obs) = self.env.reset(&mut self.rng);
        let n = obs.len();
        self.obs = obs;
        self.last_actions = vec![None; n];
        self.done = vec![false; n];
        self.episode += 1;
        self.t = 0;
        self.episode_return = 0.0;
        self.last_reward = 0.0;
        self.finished = false;
    }

    /// Advance one environment step (auto-resetting first if the previous
    /// episode ended) and return the rendered frame.
    pub fn step(&mut self) -> Result<GridFrame, String> {
        if self.finished {
            self.reset();
        }
        let mut actions = Vec::with_capacity(self.dims.n_agents);
        for i in 0..self.dims.n_agents {
            if self.done[i] {
                actions.push(0);
                continue;
            }
            let a = if self.rng.gen::<f64>() < self.epsilon {
                self.rng.gen_range(0..self.dims.n_actions)
            } else {
                let row = agent_q(
                    &self.templates.agent,
                    &self.store.agent,
                    &self.dims,
                    &self.obs[i],
                    self.last_actions[i],
                    i,
                )
                .map_err(|e| e.to_string())?;
                argmax(&row)
            };
            actions.push(a);
        }
        let result = self.env.step(&actions).map_err(|e| e.to_string())?;
        for (i, slot) in self.last_actions.iter_mut().enumerate() {
            *slot = Some(actions[i]);
        }
        self.obs = result.obs;
        self.done = result.done;
        self.t += 1;
        self.last_reward = result.reward;
        self.episode_return += result.reward;
        let limit = self.env.spec().episode_limit;
        self.finished = result.team_done || self.t >= limit;
        Ok(self.frame(result.team_done))
    }

    pub fn current_frame(&self) -> GridFrame {
        self.frame(self.finished && self.t < self.env.spec().episode_limit)
    }

    fn frame(&self, team_done: bool) -> GridFrame {
        GridFrame {
            grid: self.env.render(),
            episode: self.episode,
            t: self.t,
            episode_limit: self.env.spec().episode_limit,
            reward: self.last_reward,
            episode_return: self.episode_return,
            unlocked: self.env.is_unlocked(),
            team_done,
        }
    }
}

/// A sampled selection-ratio curve: η as a function of the training step.
#[derive(Debug, Clone, Serialize)]
pub struct RatioCurve {
    pub t: Vec<u64>,
    pub eta: Vec<f64>,
}

/// Sample the ratio warm-up schedule at `points` evenly spaced steps
/// (inclusive of 0 and `t_max`).
pub fn ratio_curve(
    eta_start: f64,
    eta_end: f64,
    proportion: f64,
    t_max: u64,
    points: usize,
) -> Result<RatioCurve, String> {
    if points < 2 {
        return Err(format!("need at least 2 sample points, got {points}"));
    }
    let schedule = RatioSchedule { eta_start, eta_end, proportion, t_max };
    schedule.validate().map_err(|e| e.to_string())?;
    let mut t = Vec::with_capacity(points);
    let mut eta = Vec::with_capacity(points);
    for k in 0..points {
        let step = (t_max as f64 * k as f64 / (points - 1) as f64).round() as u64;
        t.push(step);
        eta.push(schedule.at(step));
    }
    Ok(RatioCurve { t, eta })
}

/// One row of the priority preview: a TD-error with its sampling
/// probability and normalized importance weight.
#[derive(Debug, Clone, Serialize)]
pub struct PriorityRow {
    pub td_error: f64,
    pub probability: f64,
    pub weight: f64,
}

/// Per-candidate sampling probabilities `(|δ|+ε)^α / Σ` and importance
/// weights `((n·P)^-β)`, max-normalized over the whole set.
pub fn priority_table(
    td_errors: &[f64],
    alpha: f64,
    eps: f64,
    beta: f64,
) -> Result<Vec<PriorityRow>, String> {
    let probs = priority_probs(td_errors, alpha, eps).map_err(|e| e.to_string())?;
    let weights = is_weights(&probs, td_errors.len(), beta).map_err(|e| e.to_string())?;
    Ok(td_errors
        .iter()
        .zip(probs.iter().zip(weights.iter()))
        .map(|(&td_error, (&probability, &weight))| PriorityRow {
            td_error,
            probability,
            weight,
        })
        .collect())
}
