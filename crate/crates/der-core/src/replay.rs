//! Episodic replay storage and the discriminative-replay pipeline:
//! dividing joint transitions into per-agent transitions with
//! optimization-equivalent individual rewards, prioritizing them by
//! TD-error, and selecting a ratio-scheduled subset with importance
//! weights.
//!
//! The key quantity is the *individual reward*
//!
//! ```text
//! r_i = (R + gamma * q_tot_target - q_tot) * g_i - gamma * q_i_target + q_i
//! ```
//!
//! where `g_i` is the mixer's sensitivity to agent i's utility. It is
//! constructed so that each agent's TD residual equals the joint residual
//! scaled by `g_i`; summing the per-agent squared-error gradients then
//! reproduces the joint gradient exactly. Rewards are computed lazily at
//! sampling time with the current parameters — the Q-values they embed
//! change every update, so storing them would let them go stale — and are
//! treated as constants by the individual loss.

use crate::nets::{agent_input, greedy_joint_target, ParamStore, Templates};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("episode is empty")]
    EmptyEpisode,
    #[error("episode marks team_done before its last transition")]
    EarlyTermination,
    #[error("buffer holds {have} episodes, need {need}")]
    NotEnoughEpisodes { have: usize, need: usize },
    #[error("transition has {got} agents, networks expect {want}")]
    AgentCountMismatch { got: usize, want: usize },
    #[error("non-finite value during division: {0}")]
    NonFinite(&'static str),
    #[error("priority input is empty")]
    EmptyPriorities,
    #[error("priority exponent must be nonnegative, got {0}")]
    NegativeAlpha(f64),
    #[error("zero probability in importance weights")]
    ZeroProbability,
    #[error("selection count rounds to zero (eta {eta}, candidates {candidates})")]
    EmptySelection { eta: f64, candidates: usize },
    #[error("probability list length {probs} does not match candidate count {candidates}")]
    ProbsMismatch { probs: usize, candidates: usize },
}

/// One timestep of the whole team.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransition {
    /// Per-agent observations at this step.
    pub obs: Vec<Vec<f64>>,
    /// Actions each agent took at the *previous* step (none at t=0);
    /// part of every agent's network input.
    pub last_actions: Vec<Option<usize>>,
    /// Actions taken at this step.
    pub actions: Vec<usize>,
    /// Global state at this step.
    pub state: Vec<f64>,
    /// Team reward received for this step.
    pub reward: f64,
    pub next_obs: Vec<Vec<f64>>,
    pub next_state: Vec<f64>,
    /// Per-agent done flags after the step.
    pub done: Vec<bool>,
    /// Episode termination after the step.
    pub team_done: bool,
    /// Step index within the episode.
    pub t: usize,
}

impl JointTransition {
    pub fn n_agents(&self) -> usize {
        self.obs.len()
    }
}

/// An ordered run of transitions ending at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub transitions: Vec<JointTransition>,
}

impl Episode {
    pub fn new(transitions: Vec<JointTransition>) -> Result<Self, ReplayError> {
        if transitions.is_empty() {
            return Err(ReplayError::EmptyEpisode);
        }
        if transitions[..transitions.len() - 1].iter().any(|tr| tr.team_done) {
            return Err(ReplayError::EarlyTermination);
        }
        Ok(Self { transitions })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// FIFO ring of episodes with stable insertion ids for provenance.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    episodes: VecDeque<(u64, Episode)>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            episodes: VecDeque::with_capacity(capacity),
            capacity,
            inserted: 0,
        }
    }

    pub fn push_episode(&mut self, episode: Episode) -> Result<(), ReplayError> {
        if episode.is_empty() {
            return Err(ReplayError::EmptyEpisode);
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back((self.inserted, episode));
        self.inserted += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Insertion ids currently held, oldest first.
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.episodes.iter().map(|(id, _)| *id)
    }

    /// Uniform sample of `b` distinct episodes (partial Fisher–Yates).
    pub fn sample_joint_minibatch(
        &self,
        b: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(u64, &Episode)>, ReplayError> {
        if self.episodes.len() < b {
            return Err(ReplayError::NotEnoughEpisodes { have: self.episodes.len(), need: b });
        }
        let mut indices: Vec<usize> = (0..self.episodes.len()).collect();
        for k in 0..b {
            let j = rng.gen_range(k..indices.len());
            indices.swap(k, j);
        }
        Ok(indices[..b]
            .iter()
            .map(|&i| {
                let (id, ep) = &self.episodes[i];
                (*id, ep)
            })
            .collect())
    }
}

/// One agent's slice of a joint transition, with its computed reward and
/// TD-error and enough provenance to trace it back.
#[derive(Debug, Clone)]
pub struct SingleAgentTransition {
    pub agent: usize,
    /// Assembled network input at this step (observation, last-action
    /// one-hot, agent-id one-hot).
    pub input: Tensor,
    /// Assembled network input at the next step.
    pub next_input: Tensor,
    pub action: usize,
    /// Individual reward; a constant with respect to the networks.
    pub reward: f64,
    pub done: bool,
    /// Residual `reward + gamma * q_target - q` at division time.
    pub td_error: f64,
    /// Target-network greedy value for the next step, already zeroed when
    /// the agent (or the team) is done.
    pub q_target: f64,
    /// Insertion id of the source episode.
    pub episode: u64,
    /// Step index within that episode.
    pub t: usize,
}

/// Individual reward equivalent to the joint update:
/// `(R + gamma*q_tot_target - q_tot) * g_i - gamma*q_i_target + q_i`.
pub fn individual_reward(
    team_reward: f64,
    gamma: f64,
    q_tot: f64,
    q_tot_target: f64,
    q_i: f64,
    q_i_target: f64,
    g_i: f64,
) -> f64 {
    (team_reward + gamma * q_tot_target - q_tot) * g_i - gamma * q_i_target + q_i
}

/// Per-agent TD residual for a computed individual reward.
pub fn individual_td(r_i: f64, gamma: f64, q_i_target: f64, q_i: f64) -> f64 {
    r_i + gamma * q_i_target - q_i
}

/// Divide a mini-batch of episodes into per-agent transitions with
/// individual rewards and TD-errors, evaluated with the current online and
/// target parameters. Produces exactly N single-agent transitions per
/// joint transition. (Episodes are stored ragged, so there are no padded
/// timesteps to mask.)
pub fn divide(
    batch: &[(u64, &Episode)],
    tpls: &Templates,
    store: &ParamStore,
    gamma: f64,
) -> Result<Vec<SingleAgentTransition>, ReplayError> {
    let dims = &store.dims;
    let n = dims.n_agents;
    let mut out = Vec::new();
    for &(episode_id, episode) in batch {
        for tr in &episode.transitions {
            if tr.n_agents() != n {
                return Err(ReplayError::AgentCountMismatch { got: tr.n_agents(), want: n });
            }
            let inputs: Vec<Tensor> = (0..n)
                .map(|i| agent_input(dims, &tr.obs[i], tr.last_actions[i], i))
                .collect();
            let next_inputs: Vec<Tensor> = (0..n)
                .map(|i| agent_input(dims, &tr.next_obs[i], Some(tr.actions[i]), i))
                .collect();

            let q_chosen: Vec<f64> = inputs
                .iter()
                .zip(&tr.actions)
                .map(|(x, &a)| {
                    tpls.agent
                        .eval(&store.agent, x)
                        .map(|row| row.data()[a])
                })
                .collect::<Result<_, _>>()
                .map_err(|_| ReplayError::NonFinite("agent evaluation"))?;

            let state = Tensor::row(&tr.state);
            let next_state = Tensor::row(&tr.next_state);
            let mix = tpls
                .mixer
                .eval(&store.mixer, &q_chosen, &state)
                .map_err(|_| ReplayError::NonFinite("mixer evaluation"))?;
            let target = greedy_joint_target(
                tpls,
                store,
                &next_inputs,
                &tr.done,
                tr.team_done,
                &next_state,
            )
            .map_err(|_| ReplayError::NonFinite("target evaluation"))?;

            for (i, (input, next_input)) in inputs.into_iter().zip(next_inputs).enumerate() {
                let q_i = q_chosen[i];
                let q_i_target = if tr.done[i] { 0.0 } else { target.per_agent[i] };
                let r_i = individual_reward(
                    tr.reward,
                    gamma,
                    mix.q_tot,
                    target.q_tot,
                    q_i,
                    q_i_target,
                    mix.grads_g[i],
                );
                let td = individual_td(r_i, gamma, q_i_target, q_i);
                if !r_i.is_finite() || !td.is_finite() {
                    return Err(ReplayError::NonFinite("individual reward"));
                }
                out.push(SingleAgentTransition {
                    agent: i,
                    input,
                    next_input,
                    action: tr.actions[i],
                    reward: r_i,
                    done: tr.done[i],
                    td_error: td,
                    q_target: q_i_target,
                    episode: episode_id,
                    t: tr.t,
                });
            }
        }
    }
    Ok(out)
}

/// Sampling probabilities from TD-errors: `(|d| + eps)^alpha`, normalized.
/// `alpha == 0` degenerates to the uniform distribution exactly.
pub fn priority_probs(td_errors: &[f64], alpha: f64, eps: f64) -> Result<Vec<f64>, ReplayError> {
    if td_errors.is_empty() {
        return Err(ReplayError::EmptyPriorities);
    }
    if alpha < 0.0 {
        return Err(ReplayError::NegativeAlpha(alpha));
    }
    let raw: Vec<f64> = td_errors
        .iter()
        .map(|d| (d.abs() + eps).powf(alpha))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// Importance weights `((1/count) * (1/P))^beta`, normalized so the
/// maximum over the given set is exactly 1. `count_candidates` is the size
/// of the full candidate set the probabilities were computed over.
pub fn is_weights(
    probs: &[f64],
    count_candidates: usize,
    beta: f64,
) -> Result<Vec<f64>, ReplayError> {
    if probs.iter().any(|&p| p <= 0.0) {
        return Err(ReplayError::ZeroProbability);
    }
    let n = count_candidates as f64;
    let raw: Vec<f64> = probs.iter().map(|p| (1.0 / (n * p)).powf(beta)).collect();
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(raw.into_iter().map(|w| w / max).collect())
}

/// One selected candidate: its index into the divided set, the probability
/// it was drawn under, and its normalized importance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizedSample {
    pub index: usize,
    pub probability: f64,
    pub weight: f64,
}

/// Draw `round(eta * #candidates)` candidates without replacement,
/// proportionally to `probs`, and attach importance weights computed
/// against the full candidate count and normalized over the selected set.
///
/// Uses exponential sort keys (`ln(u) / p` maximized), which realize
/// probability-proportional sampling without replacement in one pass.
pub fn select(
    candidates: usize,
    eta: f64,
    probs: &[f64],
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PrioritizedSample>, ReplayError> {
    if probs.len() != candidates {
        return Err(ReplayError::ProbsMismatch { probs: probs.len(), candidates });
    }
    if probs.iter().any(|&p| p <= 0.0) {
        return Err(ReplayError::ZeroProbability);
    }
    let count = (eta * candidates as f64).round() as usize;
    if count == 0 {
        return Err(ReplayError::EmptySelection { eta, candidates });
    }

    let mut keyed: Vec<(f64, usize)> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let u: f64 = rng.gen();
            (u.ln() / p, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.truncate(count);
    keyed.sort_by_key(|&(_, i)| i);

    let selected_probs: Vec<f64> = keyed.iter().map(|&(_, i)| probs[i]).collect();
    let weights = is_weights(&selected_probs, candidates, beta)?;
    Ok(keyed
        .iter()
        .zip(weights)
        .map(|(&(_, index), weight)| PrioritizedSample {
            index,
            probability: probs[index],
            weight,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn transition(t: usize, team_done: bool) -> JointTransition {
        JointTransition {
            obs: vec![vec![0.0], vec![0.0]],
            last_actions: vec![None, None],
            actions: vec![0, 1],
            state: vec![0.0],
            reward: 1.0,
            next_obs: vec![vec![0.0], vec![0.0]],
            next_state: vec![0.0],
            done: vec![team_done, team_done],
            team_done,
            t,
        }
    }

    fn episode(len: usize) -> Episode {
        let transitions = (0..len).map(|t| transition(t, t + 1 == len)).collect();
        Episode::new(transitions).unwrap()
    }

    #[test]
    fn episode_validation() {
        assert_eq!(Episode::new(vec![]).unwrap_err(), ReplayError::EmptyEpisode);
        let bad = vec![transition(0, true), transition(1, true)];
        assert_eq!(Episode::new(bad).unwrap_err(), ReplayError::EarlyTermination);
        assert!(Episode::new(vec![transition(0, false)]).is_ok());
    }

    #[test]
    fn buffer_is_fifo_with_capacity() {
        let mut buf = ReplayBuffer::new(2);
        for _ in 0..3 {
            buf.push_episode(episode(1)).unwrap();
        }
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.ids().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn buffer_size_never_exceeds_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = ReplayBuffer::new(7);
        for _ in 0..1000 {
            buf.push_episode(episode(rng.gen_range(1..4))).unwrap();
            assert!(buf.len() <= 7);
        }
        assert_eq!(buf.len(), 7);
    }

    #[test]
    fn minibatch_requires_enough_episodes() {
        let mut buf = ReplayBuffer::new(4);
        buf.push_episode(episode(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            buf.sample_joint_minibatch(2, &mut rng),
            Err(ReplayError::NotEnoughEpisodes { have: 1, need: 2 })
        ));
        let got = buf.sample_joint_minibatch(1, &mut rng).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, 0);
    }

    #[test]
    fn minibatch_is_deterministic_and_without_replacement() {
        let mut buf = ReplayBuffer::new(10);
        for _ in 0..10 {
            buf.push_episode(episode(1)).unwrap();
        }
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            buf.sample_joint_minibatch(5, &mut rng)
                .unwrap()
                .iter()
                .map(|(id, _)| *id)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        let ids = draw(4);
        let mut uniq = ids.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), ids.len());
    }

    #[test]
    fn minibatch_frequencies_are_uniform() {
        let mut buf = ReplayBuffer::new(10);
        for _ in 0..10 {
            buf.push_episode(episode(1)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            let got = buf.sample_joint_minibatch(1, &mut rng).unwrap();
            counts[got[0].0 as usize] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / 10_000.0;
            assert!(
                (freq - 0.1).abs() <= 0.015,
                "episode {i} drawn with frequency {freq}"
            );
        }
    }

    #[test]
    fn individual_reward_hand_case() {
        // Additive mixer (g=1): r = (1 + 0.99*3 - 2)*1 - 0.99*1 + 0.5 = 1.48,
        // and the residual recovers the joint one: 1.48 + 0.99 - 0.5 = 1.97.
        let r = individual_reward(1.0, 0.99, 2.0, 3.0, 0.5, 1.0, 1.0);
        assert!((r - 1.48).abs() < 1e-12);
        let td = individual_td(r, 0.99, 1.0, 0.5);
        assert!((td - 1.97).abs() < 1e-12);
    }

    #[test]
    fn zero_joint_residual_gives_zero_individual_td() {
        // R + gamma*q_tot_target - q_tot = 0 -> r_i = q_i - gamma*q_i_target
        // and every individual residual is 0 regardless of g_i.
        for g in [0.0, 0.3, 1.0, 2.5] {
            let r = individual_reward(1.0, 0.9, 1.9, 1.0, 0.7, 0.2, g);
            assert!((r - (0.7 - 0.9 * 0.2)).abs() < 1e-12);
            assert!(individual_td(r, 0.9, 0.2, 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn priority_probs_hand_cases() {
        let p = priority_probs(&[3.0, 1.0], 1.0, 0.0).unwrap();
        assert_eq!(p, vec![0.75, 0.25]);
        let p = priority_probs(&[5.0, -5.0], 0.7, 1e-6).unwrap();
        assert_eq!(p[0], p[1]);
        let p = priority_probs(&[9.0, 0.1, 2.0, 0.0], 0.0, 1e-6).unwrap();
        assert!(p.iter().all(|&x| x == 0.25));
        assert_eq!(
            priority_probs(&[], 0.6, 1e-6).unwrap_err(),
            ReplayError::EmptyPriorities
        );
        assert!(matches!(
            priority_probs(&[1.0], -0.1, 1e-6),
            Err(ReplayError::NegativeAlpha(_))
        ));
    }

    #[test]
    fn priority_probs_form_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let n = rng.gen_range(1..50);
            let deltas: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let alpha = rng.gen_range(0.0..2.0);
            let p = priority_probs(&deltas, alpha, 1e-6).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn is_weights_hand_cases() {
        let w = is_weights(&[0.75, 0.25], 2, 1.0).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(w[1], 1.0);
        // Uniform probabilities: every weight exactly 1.
        let w = is_weights(&[0.25; 4], 4, 0.7).unwrap();
        assert!(w.iter().all(|&x| x == 1.0));
        // beta = 0: every weight exactly 1.
        let w = is_weights(&[0.9, 0.1], 2, 0.0).unwrap();
        assert!(w.iter().all(|&x| x == 1.0));
        assert_eq!(
            is_weights(&[0.5, 0.0], 2, 1.0).unwrap_err(),
            ReplayError::ZeroProbability
        );
    }

    #[test]
    fn select_count_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 3, 10, 100] {
            for eta in [0.25, 0.5, 0.8, 1.0] {
                let probs = priority_probs(&vec![1.0; n], 0.6, 1e-6).unwrap();
                let expect = (eta * n as f64).round() as usize;
                match select(n, eta, &probs, 0.4, &mut rng) {
                    Ok(sel) => {
                        assert_eq!(sel.len(), expect);
                        let mut idx: Vec<usize> = sel.iter().map(|s| s.index).collect();
                        idx.dedup();
                        assert_eq!(idx.len(), sel.len(), "repeated index");
                        let max_w = sel.iter().map(|s| s.weight).fold(f64::MIN, f64::max);
                        assert_eq!(max_w, 1.0);
                    }
                    Err(ReplayError::EmptySelection { .. }) => assert_eq!(expect, 0),
                    Err(e) => panic!("unexpected error: {e}"),
                }
            }
        }
    }

    #[test]
    fn select_eta_one_takes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let probs = priority_probs(&[4.0, 0.0, 1.0], 0.6, 1e-6).unwrap();
        let sel = select(3, 1.0, &probs, 1.0, &mut rng).unwrap();
        assert_eq!(sel.iter().map(|s| s.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn select_prefers_large_residuals() {
        // One candidate with |delta|=10 among 99 zeros: its selection
        // frequency over many single-draw trials must match its probability.
        let mut deltas = vec![0.0; 100];
        deltas[37] = 10.0;
        let probs = priority_probs(&deltas, 1.0, 1e-6).unwrap();
        let expected = probs[37];
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let trials = 10_000;
        let mut hits = 0;
        for _ in 0..trials {
            let sel = select(100, 0.01, &probs, 1.0, &mut rng).unwrap();
            assert_eq!(sel.len(), 1);
            if sel[0].index == 37 {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        assert!(
            (freq - expected).abs() <= 0.02,
            "frequency {freq} vs probability {expected}"
        );
    }

    #[test]
    fn select_is_deterministic_under_fixed_seed() {
        let probs = priority_probs(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.6, 1e-6).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            select(5, 0.6, &probs, 0.5, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }
}
