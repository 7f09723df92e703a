//! Shared helpers for the integration suites: random problem instances,
//! joint-vs-divided gradient computation, and norm comparisons.

use der_core::nets::{
    agent_input, init_params, MixerKind, NetDims, ParamStore, Templates,
};
use der_core::replay::{divide, Episode, JointTransition, SingleAgentTransition};
use der_core::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn small_dims(n_agents: usize) -> NetDims {
    NetDims {
        n_agents,
        n_actions: 3,
        obs_width: 3,
        state_width: 4,
        agent_hidden: 6,
        mixer_embed: 4,
        hyper_hidden: 4,
    }
}

/// Parameters with target copies drawn independently of the online ones,
/// so bootstrap terms do not coincide with online values.
pub fn scrambled_store(dims: &NetDims, kind: MixerKind, seed: u64) -> ParamStore {
    let mut store = init_params(seed, dims, kind).unwrap();
    let other = init_params(seed ^ 0x5eed_cafe, dims, kind).unwrap();
    store.agent_target = other.agent;
    store.mixer_target = other.mixer;
    store
}

pub fn random_transition(dims: &NetDims, rng: &mut ChaCha8Rng) -> JointTransition {
    let n = dims.n_agents;
    let mut vecf = |w: usize| -> Vec<f64> { (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let obs: Vec<Vec<f64>> = (0..n).map(|_| vecf(dims.obs_width)).collect();
    let next_obs: Vec<Vec<f64>> = (0..n).map(|_| vecf(dims.obs_width)).collect();
    let state = vecf(dims.state_width);
    let next_state = vecf(dims.state_width);
    let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..dims.n_actions)).collect();
    let last_actions: Vec<Option<usize>> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.7) {
                Some(rng.gen_range(0..dims.n_actions))
            } else {
                None
            }
        })
        .collect();
    let team_done = rng.gen_bool(0.15);
    let done: Vec<bool> = if team_done {
        vec![true; n]
    } else {
        (0..n).map(|_| rng.gen_bool(0.2)).collect()
    };
    JointTransition {
        obs,
        last_actions,
        actions,
        state,
        reward: rng.gen_range(-2.0..2.0),
        next_obs,
        next_state,
        done,
        team_done,
        t: 0,
    }
}

/// The joint-loss agent gradient and the pieces needed to cross-check the
/// division: the TD target `y` and the team value at the taken actions.
pub struct JointSide {
    pub agent_grads: Vec<Tensor>,
    pub y: f64,
    pub q_tot: f64,
}

pub fn joint_side(
    tpls: &Templates,
    store: &ParamStore,
    tr: &JointTransition,
    gamma: f64,
) -> JointSide {
    let dims = &store.dims;
    let n = dims.n_agents;
    let xs: Vec<Tensor> = (0..n)
        .map(|i| agent_input(dims, &tr.obs[i], tr.last_actions[i], i))
        .collect();
    let next_inputs: Vec<Tensor> = (0..n)
        .map(|i| agent_input(dims, &tr.next_obs[i], Some(tr.actions[i]), i))
        .collect();
    let target = der_core::nets::greedy_joint_target(
        tpls,
        store,
        &next_inputs,
        &tr.done,
        tr.team_done,
        &Tensor::row(&tr.next_state),
    )
    .unwrap();
    let y = tr.reward + gamma * target.q_tot;
    let eval = tpls
        .joint_loss
        .eval(&store.agent, &store.mixer, &xs, &tr.actions, &Tensor::row(&tr.state), y)
        .unwrap();
    JointSide { agent_grads: eval.agent_grads, y, q_tot: eval.q_tot }
}

/// Divide the transition and sum the unit-weight individual-loss agent
/// gradients over all agents, returning the candidates as well.
pub fn divided_side(
    tpls: &Templates,
    store: &ParamStore,
    tr: &JointTransition,
    gamma: f64,
) -> (Vec<Tensor>, Vec<SingleAgentTransition>) {
    let ep = Episode::new(vec![tr.clone()]).unwrap();
    let batch = vec![(0u64, &ep)];
    let candidates = divide(&batch, tpls, store, gamma).unwrap();
    let mut acc: Vec<Tensor> = store
        .agent
        .tensors()
        .iter()
        .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
        .collect();
    for c in &candidates {
        let y_i = c.reward + gamma * c.q_target;
        let eval = tpls
            .ind_loss
            .eval(&store.agent, &c.input, c.action, y_i, 1.0)
            .unwrap();
        for (a, g) in acc.iter_mut().zip(&eval.grads) {
            for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                *av += gv;
            }
        }
    }
    (acc, candidates)
}

/// Relative L2 gap between two gradient stacks: `||a - b|| / ||a||`,
/// falling back to the absolute gap when `a` vanishes.
pub fn relative_gap(a: &[Tensor], b: &[Tensor]) -> f64 {
    let norm: f64 = a
        .iter()
        .flat_map(|t| t.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let diff: f64 = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q) * (p - q)))
        .sum::<f64>()
        .sqrt();
    if norm > 1e-12 {
        diff / norm
    } else {
        diff
    }
}
