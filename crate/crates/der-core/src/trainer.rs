//! The full training loop: ε-greedy rollouts, episodic replay insertion,
//! a mixer update on the joint TD loss, division into per-agent
//! transitions, prioritized ratio-scheduled selection, an agent-network
//! update on the individual loss, and periodic target synchronization.
//!
//! Three modes share the loop:
//!
//! * `joint-baseline` — one conventional update of agents and mixer
//!   together through the joint TD loss; no division.
//! * `divide-only` — the mixer updates on the joint loss (its gradient cut
//!   off from the agent network), then *every* divided transition trains
//!   the agent network with unit weight. By construction this accumulates
//!   the same agent-network gradient as the joint update.
//! * `der` — like divide-only, but only a ratio-scheduled, TD-prioritized
//!   subset of divided transitions is replayed, with importance weights.
//!   `der-eta=X` variants pin the ratio to a constant for ablations.

use crate::envs::{Env, EnvError, EnvSpec};
use crate::nets::{
    agent_input, argmax, greedy_joint_target, init_params, AgentNetParams, MixerKind, NetDims,
    NetError, ParamStore, Templates,
};
use crate::optim::{OptimKind, Optimizer};
use crate::replay::{
    divide, priority_probs, select, Episode, JointTransition, PrioritizedSample, ReplayBuffer,
    ReplayError, SingleAgentTransition,
};
use crate::schedule::{LinearSchedule, RatioSchedule, ScheduleError};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Which update scheme a run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivideMode {
    JointBaseline,
    DivideOnly,
    Der,
    /// Full method with the selection ratio pinned to a constant.
    DerFixedRatio(f64),
}

impl FromStr for DivideMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "joint-baseline" => Ok(DivideMode::JointBaseline),
            "divide-only" => Ok(DivideMode::DivideOnly),
            "der" => Ok(DivideMode::Der),
            other => {
                if let Some(v) = other.strip_prefix("der-eta=") {
                    let eta: f64 = v
                        .parse()
                        .map_err(|_| format!("bad ratio in mode '{other}'"))?;
                    if !(eta > 0.0 && eta <= 1.0) {
                        return Err(format!("mode ratio must lie in (0, 1], got {eta}"));
                    }
                    Ok(DivideMode::DerFixedRatio(eta))
                } else {
                    Err(format!(
                        "unknown mode '{other}' (expected joint-baseline, divide-only, der, or der-eta=X)"
                    ))
                }
            }
        }
    }
}

impl fmt::Display for DivideMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivideMode::JointBaseline => write!(f, "joint-baseline"),
            DivideMode::DivideOnly => write!(f, "divide-only"),
            DivideMode::Der => write!(f, "der"),
            DivideMode::DerFixedRatio(eta) => write!(f, "der-eta={eta}"),
        }
    }
}

/// Hyperparameters of one training run (environment widths live in
/// [`EnvSpec`], network widths here).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub t_max: u64,
    /// Episodes per sampled mini-batch.
    pub batch_episodes: usize,
    /// Target-network synchronization period, in environment steps.
    pub target_period: u64,
    pub learning_rate: f64,
    pub optimizer: OptimKind,
    pub epsilon: LinearSchedule,
    pub ratio: RatioSchedule,
    pub priority_alpha: f64,
    pub priority_eps: f64,
    pub beta: LinearSchedule,
    pub mixer: MixerKind,
    pub mode: DivideMode,
    /// Buffer capacity in episodes.
    pub buffer_capacity: usize,
    pub agent_hidden: usize,
    pub mixer_embed: usize,
    pub hyper_hidden: usize,
    /// Normalize the individual loss by the selection count instead of
    /// using the plain sum.
    pub mean_individual_loss: bool,
}

impl TrainConfig {
    /// Defaults at desk scale; `t_max` drives the β and ratio ramps.
    pub fn new(t_max: u64) -> Self {
        Self {
            gamma: 0.99,
            t_max,
            batch_episodes: 32,
            target_period: 200,
            learning_rate: 5e-4,
            optimizer: OptimKind::Adam,
            epsilon: LinearSchedule { start: 1.0, end: 0.05, steps: 50_000 },
            ratio: RatioSchedule { eta_start: 0.8, eta_end: 1.0, proportion: 0.6, t_max },
            priority_alpha: 0.6,
            priority_eps: 1e-6,
            beta: LinearSchedule { start: 0.4, end: 1.0, steps: t_max },
            mixer: MixerKind::Monotonic,
            mode: DivideMode::Der,
            buffer_capacity: 5_000,
            agent_hidden: 64,
            mixer_embed: 32,
            hyper_hidden: 32,
            mean_individual_loss: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.t_max == 0 {
            return bad("t_max must be positive".into());
        }
        if self.batch_episodes == 0 {
            return bad("batch_episodes must be positive".into());
        }
        if self.target_period == 0 {
            return bad("target_period must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [("epsilon start", self.epsilon.start), ("epsilon end", self.epsilon.end)]
        {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [("beta start", self.beta.start), ("beta end", self.beta.end)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        self.ratio.validate()?;
        if self.priority_alpha < 0.0 {
            return bad(format!("priority_alpha must be nonnegative, got {}", self.priority_alpha));
        }
        if !(self.priority_eps > 0.0) {
            return bad(format!("priority_eps must be positive, got {}", self.priority_eps));
        }
        if self.buffer_capacity < self.batch_episodes {
            return bad(format!(
                "buffer_capacity {} is smaller than batch_episodes {}",
                self.buffer_capacity, self.batch_episodes
            ));
        }
        Ok(())
    }
}

/// Everything one training run mutates.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub dims: NetDims,
    pub store: ParamStore,
    pub templates: Templates,
    pub buffer: ReplayBuffer,
    /// Environment steps taken so far.
    pub t_step: u64,
    pub episodes: u64,
    pub updates: u64,
    rollout_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    agent_opt: Optimizer,
    mixer_opt: Optimizer,
    sync_marker: u64,
    /// When set, each divided update leaves its selection in
    /// [`TrainState::last_selection`].
    pub record_selection: bool,
    pub last_selection: Vec<SelectionRecord>,
}

/// Per-update metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateMetrics {
    pub l_tot: f64,
    pub l_ind: f64,
    pub mean_abs_delta: f64,
    pub eta: f64,
    pub selected: usize,
}

/// Provenance of one replayed single-agent transition, for diagnostic
/// dumps. Collected only when [`TrainState::record_selection`] is set.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub episode: u64,
    pub t: usize,
    pub agent: usize,
    pub reward: f64,
    pub td_error: f64,
    pub probability: f64,
    pub weight: f64,
}

/// What one outer-loop iteration produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub episode_return: f64,
    pub episode_len: usize,
    pub epsilon: f64,
    pub update: Option<UpdateMetrics>,
}

impl TrainState {
    /// Seed fans out to independent streams for initialization, rollouts,
    /// batch/selection sampling, and evaluation, so the metrics stream is
    /// a pure function of (config, env, seed).
    pub fn init(config: TrainConfig, env_spec: &EnvSpec, seed: u64) -> Result<Self, TrainError> {
        config.validate()?;
        let dims = NetDims {
            n_agents: env_spec.n_agents,
            n_actions: env_spec.n_actions,
            obs_width: env_spec.obs_width,
            state_width: env_spec.state_width,
            agent_hidden: config.agent_hidden,
            mixer_embed: config.mixer_embed,
            hyper_hidden: config.hyper_hidden,
        };
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let net_seed: u64 = master.gen();
        let rollout_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let sample_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let eval_rng = ChaCha8Rng::seed_from_u64(master.gen());

        let store = init_params(net_seed, &dims, config.mixer)?;
        let templates = Templates::new(&dims, config.mixer)?;
        let agent_shapes: Vec<(usize, usize)> =
            store.agent.tensors().iter().map(|(_, t)| t.shape()).collect();
        let mixer_shapes: Vec<(usize, usize)> =
            store.mixer.tensors().iter().map(|(_, t)| t.shape()).collect();
        let agent_opt = Optimizer::new(config.optimizer, config.learning_rate, &agent_shapes);
        let mixer_opt = Optimizer::new(config.optimizer, config.learning_rate, &mixer_shapes);
        let buffer = ReplayBuffer::new(config.buffer_capacity);

        Ok(Self {
            config,
            dims,
            store,
            templates,
            buffer,
            t_step: 0,
            episodes: 0,
            updates: 0,
            rollout_rng,
            sample_rng,
            eval_rng,
            agent_opt,
            mixer_opt,
            sync_marker: 0,
            record_selection: false,
            last_selection: Vec::new(),
        })
    }

    /// One outer-loop iteration: collect an episode, store it, run one
    /// training update (once the buffer can fill a batch), synchronize
    /// targets when a period boundary was crossed.
    pub fn advance(&mut self, env: &mut dyn Env) -> Result<StepOutcome, TrainError> {
        let epsilon = self.config.epsilon.at(self.t_step);
        let episode = run_episode(
            env,
            &self.templates,
            &self.store,
            &self.dims,
            epsilon,
            &mut self.rollout_rng,
        )?;
        let episode_return: f64 = episode.transitions.iter().map(|tr| tr.reward).sum();
        let episode_len = episode.len();
        self.t_step += episode_len as u64;
        self.episodes += 1;
        self.buffer.push_episode(episode)?;

        let update = self.train_step()?;
        self.update_targets();
        Ok(StepOutcome { episode_return, episode_len, epsilon, update })
    }

    /// One training update, or `None` while the buffer is still shorter
    /// than a mini-batch.
    pub fn train_step(&mut self) -> Result<Option<UpdateMetrics>, TrainError> {
        if self.buffer.len() < self.config.batch_episodes {
            return Ok(None);
        }
        let metrics = match self.config.mode {
            DivideMode::JointBaseline => self.joint_update()?,
            DivideMode::DivideOnly => self.divided_update(None)?,
            DivideMode::Der => self.divided_update(Some(self.config.ratio.at(self.t_step)))?,
            DivideMode::DerFixedRatio(eta) => self.divided_update(Some(eta))?,
        };
        self.updates += 1;
        Ok(Some(metrics))
    }

    /// Hard-copy the target networks whenever `t_step` has crossed a
    /// multiple of the synchronization period since the last copy.
    pub fn update_targets(&mut self) {
        let marker = self.t_step / self.config.target_period;
        if marker > self.sync_marker {
            self.store.sync_targets();
            self.sync_marker = marker;
        }
    }

    /// Conventional joint update: agents and mixer together, mean loss.
    fn joint_update(&mut self) -> Result<UpdateMetrics, TrainError> {
        let batch = self
            .buffer
            .sample_joint_minibatch(self.config.batch_episodes, &mut self.sample_rng)?;
        let gamma = self.config.gamma;
        let mut agent_acc = zeros_like(&self.store.agent.tensors());
        let mut mixer_acc = zeros_like(&self.store.mixer.tensors());
        let mut loss_sum = 0.0;
        let mut abs_delta_sum = 0.0;
        let mut count = 0usize;

        for &(_, episode) in &batch {
            for tr in &episode.transitions {
                let (xs, y) = self.joint_inputs_and_target(tr, gamma)?;
                let eval = self.templates.joint_loss.eval(
                    &self.store.agent,
                    &self.store.mixer,
                    &xs,
                    &tr.actions,
                    &Tensor::row(&tr.state),
                    y,
                )?;
                add_into(&mut agent_acc, &eval.agent_grads);
                add_into(&mut mixer_acc, &eval.mixer_grads);
                loss_sum += eval.loss;
                abs_delta_sum += (y - eval.q_tot).abs();
                count += 1;
            }
        }
        let scale = 1.0 / count as f64;
        scale_all(&mut agent_acc, scale);
        scale_all(&mut mixer_acc, scale);
        self.agent_opt.apply(&mut self.store.agent.tensors_mut(), &agent_acc);
        self.mixer_opt.apply(&mut self.store.mixer.tensors_mut(), &mixer_acc);

        Ok(UpdateMetrics {
            l_tot: loss_sum * scale,
            l_ind: 0.0,
            mean_abs_delta: abs_delta_sum * scale,
            eta: 0.0,
            selected: 0,
        })
    }

    /// Mixer update on the joint loss, then division and an agent update
    /// on the individual loss. `ratio == None` replays every divided
    /// transition with unit weight.
    fn divided_update(&mut self, ratio: Option<f64>) -> Result<UpdateMetrics, TrainError> {
        let gamma = self.config.gamma;
        let batch = self
            .buffer
            .sample_joint_minibatch(self.config.batch_episodes, &mut self.sample_rng)?;

        // Mixer update: utilities enter as constants, so only mixer
        // parameters move. The additive mixer has none; its loss is still
        // reported.
        let mut mixer_acc = zeros_like(&self.store.mixer.tensors());
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for &(_, episode) in &batch {
            for tr in &episode.transitions {
                let (q_chosen, y) = self.chosen_utilities_and_target(tr, gamma)?;
                let eval = self.templates.mixer_loss.eval(
                    &self.store.mixer,
                    &q_chosen,
                    &Tensor::row(&tr.state),
                    y,
                )?;
                add_into(&mut mixer_acc, &eval.grads);
                loss_sum += eval.loss;
                count += 1;
            }
        }
        let scale = 1.0 / count as f64;
        let l_tot = loss_sum * scale;
        if !mixer_acc.is_empty() {
            scale_all(&mut mixer_acc, scale);
            self.mixer_opt.apply(&mut self.store.mixer.tensors_mut(), &mixer_acc);
        }

        // Division uses the just-updated mixer.
        let candidates = divide(&batch, &self.templates, &self.store, gamma)?;
        let mean_abs_delta =
            candidates.iter().map(|c| c.td_error.abs()).sum::<f64>() / candidates.len() as f64;

        // Selection. Without a ratio every candidate is kept with
        // certainty, which is an inclusion probability and weight of one.
        let (chosen, eta): (Vec<PrioritizedSample>, f64) = match ratio {
            None => (
                (0..candidates.len())
                    .map(|index| PrioritizedSample { index, probability: 1.0, weight: 1.0 })
                    .collect(),
                1.0,
            ),
            Some(eta) => {
                let tds: Vec<f64> = candidates.iter().map(|c| c.td_error).collect();
                let probs =
                    priority_probs(&tds, self.config.priority_alpha, self.config.priority_eps)?;
                let beta = self.config.beta.at(self.t_step);
                let picks = select(candidates.len(), eta, &probs, beta, &mut self.sample_rng)?;
                (picks, eta)
            }
        };
        if self.record_selection {
            self.last_selection = chosen
                .iter()
                .map(|p| {
                    let c = &candidates[p.index];
                    SelectionRecord {
                        episode: c.episode,
                        t: c.t,
                        agent: c.agent,
                        reward: c.reward,
                        td_error: c.td_error,
                        probability: p.probability,
                        weight: p.weight,
                    }
                })
                .collect();
        }

        // Agent update on the weighted individual losses (sum form).
        let mut agent_acc = zeros_like(&self.store.agent.tensors());
        let mut l_ind = 0.0;
        for p in &chosen {
            let c = &candidates[p.index];
            let y = c.reward + gamma * c.q_target;
            let eval = self
                .templates
                .ind_loss
                .eval(&self.store.agent, &c.input, c.action, y, p.weight)?;
            add_into(&mut agent_acc, &eval.grads);
            l_ind += eval.loss;
        }
        if self.config.mean_individual_loss {
            let s = 1.0 / chosen.len() as f64;
            scale_all(&mut agent_acc, s);
            l_ind *= s;
        }
        self.agent_opt.apply(&mut self.store.agent.tensors_mut(), &agent_acc);

        Ok(UpdateMetrics {
            l_tot,
            l_ind,
            mean_abs_delta,
            eta,
            selected: chosen.len(),
        })
    }

    fn joint_inputs_and_target(
        &self,
        tr: &JointTransition,
        gamma: f64,
    ) -> Result<(Vec<Tensor>, f64), TrainError> {
        let n = self.dims.n_agents;
        let xs: Vec<Tensor> = (0..n)
            .map(|i| agent_input(&self.dims, &tr.obs[i], tr.last_actions[i], i))
            .collect();
        let next_inputs: Vec<Tensor> = (0..n)
            .map(|i| agent_input(&self.dims, &tr.next_obs[i], Some(tr.actions[i]), i))
            .collect();
        let target = greedy_joint_target(
            &self.templates,
            &self.store,
            &next_inputs,
            &tr.done,
            tr.team_done,
            &Tensor::row(&tr.next_state),
        )?;
        Ok((xs, tr.reward + gamma * target.q_tot))
    }

    fn chosen_utilities_and_target(
        &self,
        tr: &JointTransition,
        gamma: f64,
    ) -> Result<(Vec<f64>, f64), TrainError> {
        let n = self.dims.n_agents;
        let mut q_chosen = Vec::with_capacity(n);
        for i in 0..n {
            let x = agent_input(&self.dims, &tr.obs[i], tr.last_actions[i], i);
            let row = self.templates.agent.eval(&self.store.agent, &x)?;
            q_chosen.push(row.data()[tr.actions[i]]);
        }
        let next_inputs: Vec<Tensor> = (0..n)
            .map(|i| agent_input(&self.dims, &tr.next_obs[i], Some(tr.actions[i]), i))
            .collect();
        let target = greedy_joint_target(
            &self.templates,
            &self.store,
            &next_inputs,
            &tr.done,
            tr.team_done,
            &Tensor::row(&tr.next_state),
        )?;
        Ok((q_chosen, tr.reward + gamma * target.q_tot))
    }
}

/// Roll out one episode with ε-greedy actions under the online parameters.
/// ε is fixed for the episode (the trainer samples its schedule at the
/// episode's first step).
pub fn run_episode(
    env: &mut dyn Env,
    tpls: &Templates,
    store: &ParamStore,
    dims: &NetDims,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Episode, TrainError> {
    let n = dims.n_agents;
    let (mut state, mut obs) = env.reset(rng);
    let mut last_actions: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut transitions = Vec::new();

    for t in 0..env.spec().episode_limit {
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            if done[i] {
                // Retired agents' actions are ignored by the environment.
                actions.push(0);
                continue;
            }
            let a = if rng.gen::<f64>() < epsilon {
                rng.gen_range(0..dims.n_actions)
            } else {
                let x = agent_input(dims, &obs[i], last_actions[i], i);
                argmax(&tpls.agent.eval(&store.agent, &x)?)
            };
            actions.push(a);
        }

        let out = env.step(&actions)?;
        transitions.push(JointTransition {
            obs: obs.clone(),
            last_actions: last_actions.clone(),
            actions: actions.clone(),
            state: state.clone(),
            reward: out.reward,
            next_obs: out.obs.clone(),
            next_state: out.state.clone(),
            done: out.done.clone(),
            team_done: out.team_done,
            t,
        });

        state = out.state;
        obs = out.obs;
        done = out.done;
        last_actions = actions.into_iter().map(Some).collect();
        if out.team_done {
            break;
        }
    }
    Ok(Episode::new(transitions)?)
}

/// Mean squared joint TD residual of a batch under the given parameters;
/// no update is applied.
pub fn mixer_loss(
    state: &TrainState,
    batch: &[(u64, &Episode)],
    gamma: f64,
) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for &(_, episode) in batch {
        for tr in &episode.transitions {
            let (q_chosen, y) = state.chosen_utilities_and_target(tr, gamma)?;
            let eval = state.templates.mixer_loss.eval(
                &state.store.mixer,
                &q_chosen,
                &Tensor::row(&tr.state),
                y,
            )?;
            sum += eval.loss;
            count += 1;
        }
    }
    if count == 0 {
        return Err(TrainError::InvalidConfig("empty batch".into()));
    }
    Ok(sum / count as f64)
}

/// Sum of importance-weighted squared individual residuals; no update.
pub fn individual_loss(
    tpls: &Templates,
    agent: &AgentNetParams,
    items: &[(&SingleAgentTransition, f64)],
    gamma: f64,
) -> Result<f64, TrainError> {
    if items.is_empty() {
        return Err(TrainError::InvalidConfig("empty selection".into()));
    }
    let mut sum = 0.0;
    for &(c, weight) in items {
        let y = c.reward + gamma * c.q_target;
        let eval = tpls.ind_loss.eval(agent, &c.input, c.action, y, weight)?;
        sum += eval.loss;
    }
    Ok(sum)
}

/// Mean undiscounted return over `episodes` greedy (ε = 0) rollouts.
/// Touches neither the parameters nor the replay buffer.
pub fn evaluate(
    env: &mut dyn Env,
    tpls: &Templates,
    store: &ParamStore,
    dims: &NetDims,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for _ in 0..episodes {
        let ep = run_episode(env, tpls, store, dims, 0.0, rng)?;
        total += ep.transitions.iter().map(|tr| tr.reward).sum::<f64>();
    }
    Ok(total / episodes as f64)
}

/// Evaluation entry point for a running state (uses its dedicated rng).
impl TrainState {
    pub fn evaluate(&mut self, env: &mut dyn Env, episodes: usize) -> Result<f64, TrainError> {
        evaluate(
            env,
            &self.templates,
            &self.store,
            &self.dims,
            episodes,
            &mut self.eval_rng,
        )
    }
}

fn zeros_like(tensors: &[(&'static str, &Tensor)]) -> Vec<Tensor> {
    tensors
        .iter()
        .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
        .collect()
}

fn add_into(acc: &mut [Tensor], grads: &[Tensor]) {
    debug_assert_eq!(acc.len(), grads.len());
    for (a, g) in acc.iter_mut().zip(grads) {
        for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
            *av += gv;
        }
    }
}

fn scale_all(acc: &mut [Tensor], s: f64) {
    for a in acc.iter_mut() {
        for v in a.data_mut() {
            *v *= s;
        }
    }
}
