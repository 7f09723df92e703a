//! The parameter-shared agent Q-network, the two mixers, and the loss
//! graphs used for training.
//!
//! One [`AgentNetParams`] is shared by every agent; agents are told apart
//! only by their inputs (observation, last-action one-hot, agent-id
//! one-hot). The mixer combines the agents' chosen-action utilities into a
//! team value `q_tot`: either a plain sum ([`MixerKind::Vdn`]) or a
//! state-conditioned monotonic network ([`MixerKind::Monotonic`]) whose
//! mixing weights pass through an absolute value, which guarantees
//! `d q_tot / d q_i >= 0` for every agent.
//!
//! Graph templates are built once per run in [`Templates`] and re-bound
//! per evaluation. The templates differ in which leaves are trainable:
//!
//! * [`MixerLossTemplate`] — the per-agent utilities enter as plain inputs,
//!   so its gradients touch mixer parameters only.
//! * [`IndLossTemplate`] — no mixer at all; gradients touch the shared
//!   agent parameters only, through the chosen action's Q-value.
//! * [`JointLossTemplate`] — the full composition, used by the joint
//!   baseline mode and by the gradient-equivalence checks.

use crate::graph::{Bindings, Graph, GraphError, NodeId};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("zero-width dimension: {0}")]
    ZeroWidth(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Layer and environment widths every network is built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetDims {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_width: usize,
    pub state_width: usize,
    /// Width of both hidden layers of the agent network.
    pub agent_hidden: usize,
    /// Mixing embedding width of the monotonic mixer.
    pub mixer_embed: usize,
    /// Hidden width of the state-value head of the monotonic mixer.
    pub hyper_hidden: usize,
}

impl NetDims {
    /// Observation, then one-hot last action, then one-hot agent id.
    pub fn agent_input_width(&self) -> usize {
        self.obs_width + self.n_actions + self.n_agents
    }

    fn validate(&self) -> Result<(), NetError> {
        let checks: [(&'static str, usize); 7] = [
            ("n_agents", self.n_agents),
            ("n_actions", self.n_actions),
            ("obs_width", self.obs_width),
            ("state_width", self.state_width),
            ("agent_hidden", self.agent_hidden),
            ("mixer_embed", self.mixer_embed),
            ("hyper_hidden", self.hyper_hidden),
        ];
        for (name, v) in checks {
            if v == 0 {
                return Err(NetError::ZeroWidth(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerKind {
    /// Additive: `q_tot` is the plain sum of utilities.
    Vdn,
    /// State-conditioned monotonic mixing network.
    Monotonic,
}

/// The single shared agent network: two hidden layers, rectified.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNetParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
}

impl AgentNetParams {
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("agent.w1", &self.w1),
            ("agent.b1", &self.b1),
            ("agent.w2", &self.w2),
            ("agent.b2", &self.b2),
            ("agent.w3", &self.w3),
            ("agent.b3", &self.b3),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("agent.w1", &mut self.w1),
            ("agent.b1", &mut self.b1),
            ("agent.w2", &mut self.w2),
            ("agent.b2", &mut self.b2),
            ("agent.w3", &mut self.w3),
            ("agent.b3", &mut self.b3),
        ]
    }
}

/// Hypernetwork tensors of the monotonic mixer. The `hyper_*` heads are
/// linear maps from the global state; mixing weights (but not biases) are
/// passed through an absolute value downstream. The `value_*` head is a
/// one-hidden-layer state network producing the final scalar bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicParams {
    pub hyper_w1_w: Tensor,
    pub hyper_w1_b: Tensor,
    pub hyper_b1_w: Tensor,
    pub hyper_b1_b: Tensor,
    pub hyper_w2_w: Tensor,
    pub hyper_w2_b: Tensor,
    pub value_w1: Tensor,
    pub value_b1: Tensor,
    pub value_w2: Tensor,
    pub value_b2: Tensor,
}

impl MonotonicParams {
    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("mixer.hyper_w1_w", &self.hyper_w1_w),
            ("mixer.hyper_w1_b", &self.hyper_w1_b),
            ("mixer.hyper_b1_w", &self.hyper_b1_w),
            ("mixer.hyper_b1_b", &self.hyper_b1_b),
            ("mixer.hyper_w2_w", &self.hyper_w2_w),
            ("mixer.hyper_w2_b", &self.hyper_w2_b),
            ("mixer.value_w1", &self.value_w1),
            ("mixer.value_b1", &self.value_b1),
            ("mixer.value_w2", &self.value_w2),
            ("mixer.value_b2", &self.value_b2),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("mixer.hyper_w1_w", &mut self.hyper_w1_w),
            ("mixer.hyper_w1_b", &mut self.hyper_w1_b),
            ("mixer.hyper_b1_w", &mut self.hyper_b1_w),
            ("mixer.hyper_b1_b", &mut self.hyper_b1_b),
            ("mixer.hyper_w2_w", &mut self.hyper_w2_w),
            ("mixer.hyper_w2_b", &mut self.hyper_w2_b),
            ("mixer.value_w1", &mut self.value_w1),
            ("mixer.value_b1", &mut self.value_b1),
            ("mixer.value_w2", &mut self.value_w2),
            ("mixer.value_b2", &mut self.value_b2),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MixerParams {
    Vdn,
    Monotonic(MonotonicParams),
}

impl MixerParams {
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            MixerParams::Vdn => Vec::new(),
            MixerParams::Monotonic(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            MixerParams::Vdn => Vec::new(),
            MixerParams::Monotonic(p) => p.tensors_mut(),
        }
    }

    pub fn kind(&self) -> MixerKind {
        match self {
            MixerParams::Vdn => MixerKind::Vdn,
            MixerParams::Monotonic(_) => MixerKind::Monotonic,
        }
    }
}

/// One team-value evaluation: the total, the utilities it was built from,
/// and the mixer's sensitivity to each utility.
#[derive(Debug, Clone)]
pub struct QEval {
    pub q_tot: f64,
    pub q_chosen: Vec<f64>,
    /// `d q_tot / d q_i`; exactly 1.0 for the additive mixer, nonnegative
    /// for the monotonic mixer.
    pub grads_g: Vec<f64>,
}

/// Online and target copies of everything trainable.
#[derive(Debug, Clone)]
pub struct ParamStore {
    pub dims: NetDims,
    pub agent: AgentNetParams,
    pub agent_target: AgentNetParams,
    pub mixer: MixerParams,
    pub mixer_target: MixerParams,
}

impl ParamStore {
    /// Hard-copy online parameters into the target copies.
    pub fn sync_targets(&mut self) {
        self.agent_target = self.agent.clone();
        self.mixer_target = self.mixer.clone();
    }

    pub fn mixer_kind(&self) -> MixerKind {
        self.mixer.kind()
    }
}

/// Deterministic initialization: every tensor uniform in
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, drawn in a fixed order from the
/// seed. Target copies start equal to the online copies.
pub fn init_params(seed: u64, dims: &NetDims, kind: MixerKind) -> Result<ParamStore, NetError> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |fan_in: usize, rows: usize, cols: usize| -> Tensor {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Tensor::from_vec(rows, cols, data)
    };

    let (in_w, hid, a) = (dims.agent_input_width(), dims.agent_hidden, dims.n_actions);
    let agent = AgentNetParams {
        w1: layer(in_w, in_w, hid),
        b1: layer(in_w, 1, hid),
        w2: layer(hid, hid, hid),
        b2: layer(hid, 1, hid),
        w3: layer(hid, hid, a),
        b3: layer(hid, 1, a),
    };

    let (n, h, s, vh) = (
        dims.n_agents,
        dims.mixer_embed,
        dims.state_width,
        dims.hyper_hidden,
    );
    let mixer = match kind {
        MixerKind::Vdn => MixerParams::Vdn,
        MixerKind::Monotonic => MixerParams::Monotonic(MonotonicParams {
            hyper_w1_w: layer(s, s, n * h),
            hyper_w1_b: layer(s, 1, n * h),
            hyper_b1_w: layer(s, s, h),
            hyper_b1_b: layer(s, 1, h),
            hyper_w2_w: layer(s, s, h),
            hyper_w2_b: layer(s, 1, h),
            value_w1: layer(s, s, vh),
            value_b1: layer(s, 1, vh),
            value_w2: layer(vh, vh, 1),
            value_b2: layer(vh, 1, 1),
        }),
    };

    Ok(ParamStore {
        dims: dims.clone(),
        agent_target: agent.clone(),
        agent,
        mixer_target: mixer.clone(),
        mixer,
    })
}

/// One-hot row helper; `index == None` yields all zeros (used for the last
/// action at the first step of an episode).
fn onehot(len: usize, index: Option<usize>) -> Vec<f64> {
    let mut v = vec![0.0; len];
    if let Some(i) = index {
        v[i] = 1.0;
    }
    v
}

/// Assemble one agent's network input row from its observation, its last
/// action (none at episode start), and its index.
pub fn agent_input(
    dims: &NetDims,
    obs: &[f64],
    last_action: Option<usize>,
    agent_idx: usize,
) -> Tensor {
    debug_assert_eq!(obs.len(), dims.obs_width);
    let mut row = Vec::with_capacity(dims.agent_input_width());
    row.extend_from_slice(obs);
    row.extend_from_slice(&onehot(dims.n_actions, last_action));
    row.extend_from_slice(&onehot(dims.n_agents, Some(agent_idx)));
    Tensor::from_vec(1, row.len(), row)
}

/// Index of the row maximum; ties broken by the lowest index.
pub fn argmax(row: &Tensor) -> usize {
    let mut best = 0;
    for (i, &v) in row.data().iter().enumerate() {
        if v > row.data()[best] {
            best = i;
        }
    }
    best
}

fn bind_named(binds: &mut Bindings, ids: &[NodeId], tensors: &[(&'static str, &Tensor)]) {
    debug_assert_eq!(ids.len(), tensors.len());
    for (&id, (_, t)) in ids.iter().zip(tensors) {
        binds.set(id, (*t).clone());
    }
}

/// Create the six shared agent-parameter leaves.
fn agent_param_leaves(g: &mut Graph, dims: &NetDims) -> Vec<NodeId> {
    let (in_w, hid, a) = (dims.agent_input_width(), dims.agent_hidden, dims.n_actions);
    vec![
        g.param(in_w, hid),
        g.param(1, hid),
        g.param(hid, hid),
        g.param(1, hid),
        g.param(hid, a),
        g.param(1, a),
    ]
}

/// Wire one agent forward pass from input `x` through the shared leaves.
fn agent_forward_nodes(g: &mut Graph, x: NodeId, leaves: &[NodeId]) -> Result<NodeId, GraphError> {
    let (w1, b1, w2, b2, w3, b3) = (
        leaves[0], leaves[1], leaves[2], leaves[3], leaves[4], leaves[5],
    );
    let h1 = {
        let lin = g.matmul(x, w1)?;
        let aff = g.add(lin, b1)?;
        g.relu(aff)?
    };
    let h2 = {
        let lin = g.matmul(h1, w2)?;
        let aff = g.add(lin, b2)?;
        g.relu(aff)?
    };
    let lin = g.matmul(h2, w3)?;
    g.add(lin, b3)
}

/// Assemble N scalar nodes into one `[1, N]` row via basis-vector products.
fn row_from_scalars(g: &mut Graph, scalars: &[NodeId]) -> Result<NodeId, GraphError> {
    let n = scalars.len();
    let mut row = None;
    for (i, &sc) in scalars.iter().enumerate() {
        let mut basis = vec![0.0; n];
        basis[i] = 1.0;
        let e = g.constant(Tensor::row(&basis));
        let term = g.matmul(sc, e)?;
        row = Some(match row {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok(row.expect("at least one agent"))
}

/// Wire the mixer from per-agent utility scalars and the state input.
/// Returns the team-value node and the mixer parameter leaves in
/// [`MixerParams::tensors`] order (empty for the additive mixer).
fn mixer_nodes(
    g: &mut Graph,
    dims: &NetDims,
    kind: MixerKind,
    q_scalars: &[NodeId],
    state: NodeId,
) -> Result<(NodeId, Vec<NodeId>), GraphError> {
    let q_row = row_from_scalars(g, q_scalars)?;
    match kind {
        MixerKind::Vdn => {
            let q_tot = g.sum_reduce(q_row)?;
            Ok((q_tot, Vec::new()))
        }
        MixerKind::Monotonic => {
            let (n, h, s, vh) = (
                dims.n_agents,
                dims.mixer_embed,
                dims.state_width,
                dims.hyper_hidden,
            );
            let hyper_w1_w = g.param(s, n * h);
            let hyper_w1_b = g.param(1, n * h);
            let hyper_b1_w = g.param(s, h);
            let hyper_b1_b = g.param(1, h);
            let hyper_w2_w = g.param(s, h);
            let hyper_w2_b = g.param(1, h);
            let value_w1 = g.param(s, vh);
            let value_b1 = g.param(1, vh);
            let value_w2 = g.param(vh, 1);
            let value_b2 = g.param(1, 1);

            // Constant wiring: `tile` repeats each utility across its H
            // mixing slots; `fold` sums the N weighted copies per embedding
            // column. Together they express the q^T . W1 product without a
            // reshape primitive.
            let mut tile = Tensor::zeros(n, n * h);
            let mut fold = Tensor::zeros(n * h, h);
            for i in 0..n {
                for j in 0..h {
                    tile.set(i, i * h + j, 1.0);
                    fold.set(i * h + j, j, 1.0);
                }
            }
            let tile = g.constant(tile);
            let fold = g.constant(fold);

            let w1 = {
                let lin = g.matmul(state, hyper_w1_w)?;
                let aff = g.add(lin, hyper_w1_b)?;
                g.abs(aff)?
            };
            let b1 = {
                let lin = g.matmul(state, hyper_b1_w)?;
                g.add(lin, hyper_b1_b)?
            };
            let hidden = {
                let tiled = g.matmul(q_row, tile)?;
                let weighted = g.mul(tiled, w1)?;
                let folded = g.matmul(weighted, fold)?;
                let aff = g.add(folded, b1)?;
                g.elu(aff)?
            };
            let w2 = {
                let lin = g.matmul(state, hyper_w2_w)?;
                let aff = g.add(lin, hyper_w2_b)?;
                g.abs(aff)?
            };
            let mixed = {
                let weighted = g.mul(hidden, w2)?;
                g.sum_reduce(weighted)?
            };
            let v = {
                let lin = g.matmul(state, value_w1)?;
                let aff = g.add(lin, value_b1)?;
                let act = g.elu(aff)?;
                let out = g.matmul(act, value_w2)?;
                g.add(out, value_b2)?
            };
            let q_tot = g.add(mixed, v)?;
            Ok((
                q_tot,
                vec![
                    hyper_w1_w, hyper_w1_b, hyper_b1_w, hyper_b1_b, hyper_w2_w, hyper_w2_b,
                    value_w1, value_b1, value_w2, value_b2,
                ],
            ))
        }
    }
}

/// Forward-only template for the shared agent network.
#[derive(Debug, Clone)]
pub struct AgentTemplate {
    graph: Graph,
    x: NodeId,
    q_row: NodeId,
    param_ids: Vec<NodeId>,
}

impl AgentTemplate {
    fn build(dims: &NetDims) -> Result<Self, NetError> {
        let mut g = Graph::new();
        let x = g.input(1, dims.agent_input_width());
        let param_ids = agent_param_leaves(&mut g, dims);
        let q_row = agent_forward_nodes(&mut g, x, &param_ids)?;
        Ok(Self { graph: g, x, q_row, param_ids })
    }

    /// Q-values for every action of one agent, as a `[1, |A|]` row.
    pub fn eval(&self, params: &AgentNetParams, x: &Tensor) -> Result<Tensor, NetError> {
        let mut binds = Bindings::for_graph(&self.graph);
        bind_named(&mut binds, &self.param_ids, &params.tensors());
        binds.set(self.x, x.clone());
        let values = self.graph.forward(&binds)?;
        Ok(values.value(self.q_row).clone())
    }
}

/// Mixer template with each utility input registered as a probe, so one
/// backward sweep from the team value yields every sensitivity `g_i`.
#[derive(Debug, Clone)]
pub struct MixerTemplate {
    graph: Graph,
    q_in: Vec<NodeId>,
    state: NodeId,
    q_tot: NodeId,
    param_ids: Vec<NodeId>,
}

impl MixerTemplate {
    fn build(dims: &NetDims, kind: MixerKind) -> Result<Self, NetError> {
        let mut g = Graph::new();
        let q_in: Vec<NodeId> = (0..dims.n_agents).map(|_| g.input(1, 1)).collect();
        let state = g.input(1, dims.state_width);
        let (q_tot, param_ids) = mixer_nodes(&mut g, dims, kind, &q_in, state)?;
        for &q in &q_in {
            g.mark_probe(q)?;
        }
        Ok(Self { graph: g, q_in, state, q_tot, param_ids })
    }

    fn bind(&self, mixer: &MixerParams, q: &[f64], state: &Tensor) -> Bindings {
        let mut binds = Bindings::for_graph(&self.graph);
        bind_named(&mut binds, &self.param_ids, &mixer.tensors());
        for (&id, &v) in self.q_in.iter().zip(q) {
            binds.set(id, Tensor::scalar(v));
        }
        binds.set(self.state, state.clone());
        binds
    }

    /// Team value plus per-agent sensitivities.
    pub fn eval(&self, mixer: &MixerParams, q: &[f64], state: &Tensor) -> Result<QEval, NetError> {
        let binds = self.bind(mixer, q, state);
        let values = self.graph.forward(&binds)?;
        let report = self.graph.backward(&values, self.q_tot)?;
        let grads_g = self
            .q_in
            .iter()
            .map(|&id| report.probe_gradient(id).map(Tensor::item))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(QEval {
            q_tot: values.value(self.q_tot).item(),
            q_chosen: q.to_vec(),
            grads_g,
        })
    }

    /// Team value only (no backward sweep).
    pub fn eval_value(
        &self,
        mixer: &MixerParams,
        q: &[f64],
        state: &Tensor,
    ) -> Result<f64, NetError> {
        let binds = self.bind(mixer, q, state);
        let values = self.graph.forward(&binds)?;
        Ok(values.value(self.q_tot).item())
    }
}

/// Squared-error loss through the mixer alone: utilities are plain inputs,
/// so by construction no gradient reaches the agent network.
#[derive(Debug, Clone)]
pub struct MixerLossTemplate {
    graph: Graph,
    q_in: Vec<NodeId>,
    state: NodeId,
    target: NodeId,
    q_tot: NodeId,
    loss: NodeId,
    param_ids: Vec<NodeId>,
}

/// Loss value, team value, and parameter gradients from one transition.
#[derive(Debug, Clone)]
pub struct MixerLossEval {
    pub loss: f64,
    pub q_tot: f64,
    /// Aligned with [`MixerParams::tensors`]; empty for the additive mixer.
    pub grads: Vec<Tensor>,
}

impl MixerLossTemplate {
    fn build(dims: &NetDims, kind: MixerKind) -> Result<Self, NetError> {
        let mut g = Graph::new();
        let q_in: Vec<NodeId> = (0..dims.n_agents).map(|_| g.input(1, 1)).collect();
        let state = g.input(1, dims.state_width);
        let (q_tot, param_ids) = mixer_nodes(&mut g, dims, kind, &q_in, state)?;
        let target = g.input(1, 1);
        let loss = g.squared_error(q_tot, target)?;
        Ok(Self { graph: g, q_in, state, target, q_tot, loss, param_ids })
    }

    pub fn eval(
        &self,
        mixer: &MixerParams,
        q: &[f64],
        state: &Tensor,
        target: f64,
    ) -> Result<MixerLossEval, NetError> {
        let mut binds = Bindings::for_graph(&self.graph);
        bind_named(&mut binds, &self.param_ids, &mixer.tensors());
        for (&id, &v) in self.q_in.iter().zip(q) {
            binds.set(id, Tensor::scalar(v));
        }
        binds.set(self.state, state.clone());
        binds.set(self.target, Tensor::scalar(target));
        let values = self.graph.forward(&binds)?;
        let report = self.graph.backward(&values, self.loss)?;
        let grads = self
            .param_ids
            .iter()
            .map(|&id| report.param_gradient(id).map(Tensor::clone))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MixerLossEval {
            loss: values.value(self.loss).item(),
            q_tot: values.value(self.q_tot).item(),
            grads,
        })
    }
}

/// Importance-weighted squared error on one agent's chosen-action Q-value.
/// The target and the weight are inputs, so gradients flow only through
/// the agent network.
#[derive(Debug, Clone)]
pub struct IndLossTemplate {
    graph: Graph,
    x: NodeId,
    sel: NodeId,
    target: NodeId,
    weight: NodeId,
    q_sa: NodeId,
    loss: NodeId,
    param_ids: Vec<NodeId>,
}

/// Loss value, the chosen-action Q, and shared-agent-parameter gradients.
#[derive(Debug, Clone)]
pub struct IndLossEval {
    pub loss: f64,
    pub q_sa: f64,
    /// Aligned with [`AgentNetParams::tensors`].
    pub grads: Vec<Tensor>,
}

impl IndLossTemplate {
    fn build(dims: &NetDims) -> Result<Self, NetError> {
        let mut g = Graph::new();
        let x = g.input(1, dims.agent_input_width());
        let param_ids = agent_param_leaves(&mut g, dims);
        let q_row = agent_forward_nodes(&mut g, x, &param_ids)?;
        let sel = g.input(dims.n_actions, 1);
        let q_sa = g.matmul(q_row, sel)?;
        let target = g.input(1, 1);
        let weight = g.input(1, 1);
        let se = g.squared_error(q_sa, target)?;
        let loss = g.mul(weight, se)?;
        Ok(Self { graph: g, x, sel, target, weight, q_sa, loss, param_ids })
    }

    pub fn eval(
        &self,
        agent: &AgentNetParams,
        x: &Tensor,
        action: usize,
        target: f64,
        weight: f64,
    ) -> Result<IndLossEval, NetError> {
        let mut binds = Bindings::for_graph(&self.graph);
        bind_named(&mut binds, &self.param_ids, &agent.tensors());
        binds.set(self.x, x.clone());
        let n_actions = self.graph.shape(self.sel).0;
        binds.set(self.sel, Tensor::from_vec(n_actions, 1, onehot(n_actions, Some(action))));
        binds.set(self.target, Tensor::scalar(target));
        binds.set(self.weight, Tensor::scalar(weight));
        let values = self.graph.forward(&binds)?;
        let report = self.graph.backward(&values, self.loss)?;
        let grads = self
            .param_ids
            .iter()
            .map(|&id| report.param_gradient(id).map(Tensor::clone))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(IndLossEval {
            loss: values.value(self.loss).item(),
            q_sa: values.value(self.q_sa).item(),
            grads,
        })
    }
}

/// The full composition — N shared-parameter agent passes, chosen-action
/// selection, mixer, squared error — differentiable end to end. Used by
/// the joint baseline mode and the gradient-equivalence checks.
#[derive(Debug, Clone)]
pub struct JointLossTemplate {
    graph: Graph,
    xs: Vec<NodeId>,
    sels: Vec<NodeId>,
    state: NodeId,
    target: NodeId,
    q_tot: NodeId,
    loss: NodeId,
    agent_param_ids: Vec<NodeId>,
    mixer_param_ids: Vec<NodeId>,
}

/// Gradients of the joint loss for both parameter groups.
#[derive(Debug, Clone)]
pub struct JointLossEval {
    pub loss: f64,
    pub q_tot: f64,
    /// Aligned with [`AgentNetParams::tensors`].
    pub agent_grads: Vec<Tensor>,
    /// Aligned with [`MixerParams::tensors`].
    pub mixer_grads: Vec<Tensor>,
}

impl JointLossTemplate {
    fn build(dims: &NetDims, kind: MixerKind) -> Result<Self, NetError> {
        let mut g = Graph::new();
        let agent_param_ids = agent_param_leaves(&mut g, dims);
        let mut xs = Vec::with_capacity(dims.n_agents);
        let mut sels = Vec::with_capacity(dims.n_agents);
        let mut q_scalars = Vec::with_capacity(dims.n_agents);
        for _ in 0..dims.n_agents {
            let x = g.input(1, dims.agent_input_width());
            let q_row = agent_forward_nodes(&mut g, x, &agent_param_ids)?;
            let sel = g.input(dims.n_actions, 1);
            let q_sa = g.matmul(q_row, sel)?;
            xs.push(x);
            sels.push(sel);
            q_scalars.push(q_sa);
        }
        let state = g.input(1, dims.state_width);
        let (q_tot, mixer_param_ids) = mixer_nodes(&mut g, dims, kind, &q_scalars, state)?;
        let target = g.input(1, 1);
        let loss = g.squared_error(q_tot, target)?;
        Ok(Self {
            graph: g,
            xs,
            sels,
            state,
            target,
            q_tot,
            loss,
            agent_param_ids,
            mixer_param_ids,
        })
    }

    pub fn eval(
        &self,
        agent: &AgentNetParams,
        mixer: &MixerParams,
        xs: &[Tensor],
        actions: &[usize],
        state: &Tensor,
        target: f64,
    ) -> Result<JointLossEval, NetError> {
        let mut binds = Bindings::for_graph(&self.graph);
        bind_named(&mut binds, &self.agent_param_ids, &agent.tensors());
        bind_named(&mut binds, &self.mixer_param_ids, &mixer.tensors());
        let n_actions = self.graph.shape(self.sels[0]).0;
        for ((x_id, sel_id), (x, &a)) in self
            .xs
            .iter()
            .zip(&self.sels)
            .zip(xs.iter().zip(actions))
        {
            binds.set(*x_id, x.clone());
            binds.set(*sel_id, Tensor::from_vec(n_actions, 1, onehot(n_actions, Some(a))));
        }
        binds.set(self.state, state.clone());
        binds.set(self.target, Tensor::scalar(target));
        let values = self.graph.forward(&binds)?;
        let report = self.graph.backward(&values, self.loss)?;
        let collect = |ids: &[NodeId]| -> Result<Vec<Tensor>, GraphError> {
            ids.iter()
                .map(|&id| report.param_gradient(id).map(Tensor::clone))
                .collect()
        };
        Ok(JointLossEval {
            loss: values.value(self.loss).item(),
            q_tot: values.value(self.q_tot).item(),
            agent_grads: collect(&self.agent_param_ids)?,
            mixer_grads: collect(&self.mixer_param_ids)?,
        })
    }
}

/// All graph templates for one (dims, mixer) configuration, built once.
#[derive(Debug, Clone)]
pub struct Templates {
    pub dims: NetDims,
    pub kind: MixerKind,
    pub agent: AgentTemplate,
    pub mixer: MixerTemplate,
    pub mixer_loss: MixerLossTemplate,
    pub ind_loss: IndLossTemplate,
    pub joint_loss: JointLossTemplate,
}

impl Templates {
    pub fn new(dims: &NetDims, kind: MixerKind) -> Result<Self, NetError> {
        dims.validate()?;
        Ok(Self {
            dims: dims.clone(),
            kind,
            agent: AgentTemplate::build(dims)?,
            mixer: MixerTemplate::build(dims, kind)?,
            mixer_loss: MixerLossTemplate::build(dims, kind)?,
            ind_loss: IndLossTemplate::build(dims)?,
            joint_loss: JointLossTemplate::build(dims, kind)?,
        })
    }
}

/// Q-values for one agent given raw observation pieces.
pub fn agent_q(
    tpl: &AgentTemplate,
    params: &AgentNetParams,
    dims: &NetDims,
    obs: &[f64],
    last_action: Option<usize>,
    agent_idx: usize,
) -> Result<Tensor, NetError> {
    tpl.eval(params, &agent_input(dims, obs, last_action, agent_idx))
}

/// Greedy team value from per-agent Q rows: each agent's argmax feeds the
/// mixer. `done[i]` freezes agent i out (its utility is zero); a finished
/// team yields exactly zero without evaluating the mixer, so terminal
/// targets reduce to the reward alone.
pub fn greedy_from_rows(
    mixer_tpl: &MixerTemplate,
    mixer: &MixerParams,
    rows: &[Tensor],
    done: &[bool],
    team_done: bool,
    state: &Tensor,
) -> Result<TargetEval, NetError> {
    let n = rows.len();
    if team_done {
        return Ok(TargetEval {
            q_tot: 0.0,
            per_agent: vec![0.0; n],
            actions: vec![0; n],
        });
    }
    let mut per_agent = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        if done[i] {
            per_agent.push(0.0);
            actions.push(0);
        } else {
            let a = argmax(row);
            per_agent.push(row.data()[a]);
            actions.push(a);
        }
    }
    let q_tot = mixer_tpl.eval_value(mixer, &per_agent, state)?;
    Ok(TargetEval { q_tot, per_agent, actions })
}

/// Result of a greedy target evaluation.
#[derive(Debug, Clone)]
pub struct TargetEval {
    pub q_tot: f64,
    pub per_agent: Vec<f64>,
    pub actions: Vec<usize>,
}

/// Greedy team value under the *target* copies, from assembled next-step
/// agent inputs.
pub fn greedy_joint_target(
    tpls: &Templates,
    store: &ParamStore,
    next_inputs: &[Tensor],
    done: &[bool],
    team_done: bool,
    next_state: &Tensor,
) -> Result<TargetEval, NetError> {
    if team_done {
        // Skip the network evaluations entirely; the contract is exact zero.
        return Ok(TargetEval {
            q_tot: 0.0,
            per_agent: vec![0.0; next_inputs.len()],
            actions: vec![0; next_inputs.len()],
        });
    }
    let rows = next_inputs
        .iter()
        .map(|x| tpls.agent.eval(&store.agent_target, x))
        .collect::<Result<Vec<_>, _>>()?;
    greedy_from_rows(
        &tpls.mixer,
        &store.mixer_target,
        &rows,
        done,
        team_done,
        next_state,
    )
}
