//! Minimal reverse-mode differentiation over a fixed primitive set.
//!
//! A [`Graph`] is an append-only list of nodes in topological order: leaves
//! (parameters and per-call inputs), baked constants, and the eight
//! primitives needed to express the agent network and the mixers (`add`,
//! `mul`, `matmul`, `relu`, `abs`, `elu`, `sum_reduce`, `squared_error`).
//! Graphs are immutable once built; [`Graph::forward`] and
//! [`Graph::backward`] are pure functions of the bindings, so templates are
//! built once and re-bound for every evaluation.
//!
//! Any node can be marked as a *probe*: [`backward`](Graph::backward) then
//! reports the gradient of the seed scalar with respect to that intermediate
//! value. Probing the per-agent utility inputs of a mixer graph is how the
//! division step obtains the mixer sensitivities it folds into individual
//! rewards.
//!
//! Subgradient conventions: `abs` and `relu` use derivative 0 at exactly 0.
//! `elu` uses 1 there (both one-sided limits agree).

use crate::tensor::Tensor;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node {node}: shape mismatch ({detail})")]
    ShapeMismatch { node: NodeId, detail: String },
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("leaf node {0} was not bound before forward")]
    UnboundLeaf(NodeId),
    #[error("binding for node {node} has shape {got_rows}x{got_cols}, expected {want_rows}x{want_cols}")]
    BindingShape {
        node: NodeId,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("non-finite value bound to leaf {0}")]
    NonFiniteBinding(NodeId),
    #[error("backward seed node {0} is not scalar-shaped")]
    NonScalarSeed(NodeId),
    #[error("node {0} is not registered as a probe")]
    UnknownProbe(NodeId),
    #[error("node {0} is not a parameter leaf")]
    NotAParameter(NodeId),
    #[error("values were computed for a different graph")]
    StaleValues,
}

#[derive(Debug, Clone)]
enum Node {
    /// Trainable leaf, bound per call.
    Param,
    /// Non-trainable leaf, bound per call.
    Input,
    /// Leaf with a value baked into the graph (one-hot selectors, wiring
    /// matrices).
    Constant(Tensor),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Relu(NodeId),
    Abs(NodeId),
    Elu(NodeId),
    SumReduce(NodeId),
    /// Scalar `sum((a - b)^2)`.
    SquaredError(NodeId, NodeId),
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    shapes: Vec<(usize, usize)>,
    params: Vec<NodeId>,
    inputs: Vec<NodeId>,
    probes: Vec<NodeId>,
}

/// Per-call leaf values, indexed by node id.
#[derive(Debug, Clone)]
pub struct Bindings {
    slots: Vec<Option<Tensor>>,
}

impl Bindings {
    pub fn for_graph(graph: &Graph) -> Self {
        Self { slots: vec![None; graph.nodes.len()] }
    }

    pub fn set(&mut self, id: NodeId, value: Tensor) {
        self.slots[id] = Some(value);
    }

    pub fn bound(&self, id: NodeId) -> Option<&Tensor> {
        self.slots.get(id).and_then(|s| s.as_ref())
    }

    pub fn bound_mut(&mut self, id: NodeId) -> Option<&mut Tensor> {
        self.slots.get_mut(id).and_then(|s| s.as_mut())
    }

    fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.bound(id)
    }
}

/// Forward values for every node of one evaluation.
#[derive(Debug, Clone)]
pub struct Values {
    vals: Vec<Tensor>,
}

impl Values {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.vals[id]
    }
}

/// Gradients produced by one backward sweep: one tensor per parameter leaf
/// and one per probe, zero-filled for nodes the seed does not reach.
#[derive(Debug, Clone)]
pub struct GradientReport {
    param_grads: Vec<(NodeId, Tensor)>,
    probe_grads: Vec<(NodeId, Tensor)>,
}

impl GradientReport {
    pub fn param_gradient(&self, id: NodeId) -> Result<&Tensor, GraphError> {
        self.param_grads
            .iter()
            .find(|(n, _)| *n == id)
            .map(|(_, t)| t)
            .ok_or(GraphError::NotAParameter(id))
    }

    pub fn probe_gradient(&self, id: NodeId) -> Result<&Tensor, GraphError> {
        self.probe_grads
            .iter()
            .find(|(n, _)| *n == id)
            .map(|(_, t)| t)
            .ok_or(GraphError::UnknownProbe(id))
    }

    /// Parameter gradients in registration order.
    pub fn param_gradients(&self) -> &[(NodeId, Tensor)] {
        &self.param_grads
    }

    pub fn probe_count(&self) -> usize {
        self.probe_grads.len()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn param(&mut self, rows: usize, cols: usize) -> NodeId {
        assert!(rows > 0 && cols > 0, "zero-sized parameter leaf");
        let id = self.push(Node::Param, (rows, cols));
        self.params.push(id);
        id
    }

    pub fn input(&mut self, rows: usize, cols: usize) -> NodeId {
        assert!(rows > 0 && cols > 0, "zero-sized input leaf");
        let id = self.push(Node::Input, (rows, cols));
        self.inputs.push(id);
        id
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape();
        self.push(Node::Constant(value), shape)
    }

    fn push(&mut self, node: Node, shape: (usize, usize)) -> NodeId {
        self.nodes.push(node);
        self.shapes.push(shape);
        self.nodes.len() - 1
    }

    fn check_id(&self, id: NodeId) -> Result<(), GraphError> {
        if id >= self.nodes.len() {
            Err(GraphError::UnknownNode(id))
        } else {
            Ok(())
        }
    }

    fn same_shape(&self, a: NodeId, b: NodeId) -> Result<(usize, usize), GraphError> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (sa, sb) = (self.shapes[a], self.shapes[b]);
        if sa != sb {
            return Err(GraphError::ShapeMismatch {
                node: self.nodes.len(),
                detail: format!("{}x{} vs {}x{}", sa.0, sa.1, sb.0, sb.1),
            });
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let shape = self.same_shape(a, b)?;
        Ok(self.push(Node::Add(a, b), shape))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let shape = self.same_shape(a, b)?;
        Ok(self.push(Node::Mul(a, b), shape))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (m, k) = self.shapes[a];
        let (k2, n) = self.shapes[b];
        if k != k2 {
            return Err(GraphError::ShapeMismatch {
                node: self.nodes.len(),
                detail: format!("matmul {}x{} by {}x{}", m, k, k2, n),
            });
        }
        Ok(self.push(Node::MatMul(a, b), (m, n)))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check_id(x)?;
        let shape = self.shapes[x];
        Ok(self.push(Node::Relu(x), shape))
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check_id(x)?;
        let shape = self.shapes[x];
        Ok(self.push(Node::Abs(x), shape))
    }

    pub fn elu(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check_id(x)?;
        let shape = self.shapes[x];
        Ok(self.push(Node::Elu(x), shape))
    }

    pub fn sum_reduce(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check_id(x)?;
        Ok(self.push(Node::SumReduce(x), (1, 1)))
    }

    pub fn squared_error(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape(a, b)?;
        Ok(self.push(Node::SquaredError(a, b), (1, 1)))
    }

    /// Register `id` as a probe: its gradient is reported by every backward
    /// sweep over this graph.
    pub fn mark_probe(&mut self, id: NodeId) -> Result<(), GraphError> {
        self.check_id(id)?;
        if !self.probes.contains(&id) {
            self.probes.push(id);
        }
        Ok(())
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.shapes[id]
    }

    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    pub fn probes(&self) -> &[NodeId] {
        &self.probes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Evaluate every node. Leaves take their value from `binds`
    /// (constants from the graph itself). Pure: identical bindings produce
    /// bit-identical values.
    pub fn forward(&self, binds: &Bindings) -> Result<Values, GraphError> {
        let mut vals: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let value = match node {
                Node::Param | Node::Input => {
                    let bound = binds.get(id).ok_or(GraphError::UnboundLeaf(id))?;
                    let want = self.shapes[id];
                    if bound.shape() != want {
                        return Err(GraphError::BindingShape {
                            node: id,
                            got_rows: bound.rows(),
                            got_cols: bound.cols(),
                            want_rows: want.0,
                            want_cols: want.1,
                        });
                    }
                    if cfg!(debug_assertions) && !bound.is_finite() {
                        return Err(GraphError::NonFiniteBinding(id));
                    }
                    bound.clone()
                }
                Node::Constant(t) => t.clone(),
                Node::Add(a, b) => {
                    let (a, b) = (&vals[*a], &vals[*b]);
                    let data = a
                        .data()
                        .iter()
                        .zip(b.data())
                        .map(|(x, y)| x + y)
                        .collect();
                    Tensor::from_vec(a.rows(), a.cols(), data)
                }
                Node::Mul(a, b) => {
                    let (a, b) = (&vals[*a], &vals[*b]);
                    let data = a
                        .data()
                        .iter()
                        .zip(b.data())
                        .map(|(x, y)| x * y)
                        .collect();
                    Tensor::from_vec(a.rows(), a.cols(), data)
                }
                Node::MatMul(a, b) => matmul(&vals[*a], &vals[*b]),
                Node::Relu(x) => {
                    let x = &vals[*x];
                    let data = x.data().iter().map(|v| v.max(0.0)).collect();
                    Tensor::from_vec(x.rows(), x.cols(), data)
                }
                Node::Abs(x) => {
                    let x = &vals[*x];
                    let data = x.data().iter().map(|v| v.abs()).collect();
                    Tensor::from_vec(x.rows(), x.cols(), data)
                }
                Node::Elu(x) => {
                    let x = &vals[*x];
                    let data = x
                        .data()
                        .iter()
                        .map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 })
                        .collect();
                    Tensor::from_vec(x.rows(), x.cols(), data)
                }
                Node::SumReduce(x) => Tensor::scalar(vals[*x].data().iter().sum()),
                Node::SquaredError(a, b) => {
                    let (a, b) = (&vals[*a], &vals[*b]);
                    let sum = a
                        .data()
                        .iter()
                        .zip(b.data())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    Tensor::scalar(sum)
                }
            };
            vals.push(value);
        }
        Ok(Values { vals })
    }

    /// Reverse sweep from `seed` (any scalar-shaped node). Returns exact
    /// gradients of the seed value with respect to every parameter leaf and
    /// every probe.
    pub fn backward(&self, values: &Values, seed: NodeId) -> Result<GradientReport, GraphError> {
        self.check_id(seed)?;
        if values.vals.len() != self.nodes.len() {
            return Err(GraphError::StaleValues);
        }
        if self.shapes[seed] != (1, 1) {
            return Err(GraphError::NonScalarSeed(seed));
        }

        let mut adjoints: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adjoints[seed] = Some(Tensor::scalar(1.0));

        for id in (0..self.nodes.len()).rev() {
            let adj = match adjoints[id].take() {
                Some(adj) => adj,
                None => continue,
            };
            match &self.nodes[id] {
                Node::Param | Node::Input | Node::Constant(_) => {
                    // Leaves keep their adjoint for the report.
                    adjoints[id] = Some(adj);
                    continue;
                }
                Node::Add(a, b) => {
                    accumulate(&mut adjoints, *a, adj.data().iter().copied(), self.shapes[*a]);
                    accumulate(&mut adjoints, *b, adj.data().iter().copied(), self.shapes[*b]);
                }
                Node::Mul(a, b) => {
                    let (va, vb) = (&values.vals[*a], &values.vals[*b]);
                    accumulate(
                        &mut adjoints,
                        *a,
                        adj.data().iter().zip(vb.data()).map(|(g, y)| g * y),
                        self.shapes[*a],
                    );
                    accumulate(
                        &mut adjoints,
                        *b,
                        adj.data().iter().zip(va.data()).map(|(g, x)| g * x),
                        self.shapes[*b],
                    );
                }
                Node::MatMul(a, b) => {
                    let (va, vb) = (&values.vals[*a], &values.vals[*b]);
                    let da = matmul_nt(&adj, vb); // adj . b^T
                    let db = matmul_tn(va, &adj); // a^T . adj
                    accumulate(&mut adjoints, *a, da.data().iter().copied(), self.shapes[*a]);
                    accumulate(&mut adjoints, *b, db.data().iter().copied(), self.shapes[*b]);
                }
                Node::Relu(x) => {
                    let vx = &values.vals[*x];
                    accumulate(
                        &mut adjoints,
                        *x,
                        adj.data()
                            .iter()
                            .zip(vx.data())
                            .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }),
                        self.shapes[*x],
                    );
                }
                Node::Abs(x) => {
                    let vx = &values.vals[*x];
                    accumulate(
                        &mut adjoints,
                        *x,
                        adj.data().iter().zip(vx.data()).map(|(g, &v)| {
                            if v > 0.0 {
                                *g
                            } else if v < 0.0 {
                                -*g
                            } else {
                                0.0
                            }
                        }),
                        self.shapes[*x],
                    );
                }
                Node::Elu(x) => {
                    let vx = &values.vals[*x];
                    accumulate(
                        &mut adjoints,
                        *x,
                        adj.data()
                            .iter()
                            .zip(vx.data())
                            .map(|(g, &v)| if v > 0.0 { *g } else { g * v.exp() }),
                        self.shapes[*x],
                    );
                }
                Node::SumReduce(x) => {
                    let g = adj.item();
                    let len = self.shapes[*x].0 * self.shapes[*x].1;
                    accumulate(
                        &mut adjoints,
                        *x,
                        std::iter::repeat(g).take(len),
                        self.shapes[*x],
                    );
                }
                Node::SquaredError(a, b) => {
                    let g = adj.item();
                    let (va, vb) = (&values.vals[*a], &values.vals[*b]);
                    accumulate(
                        &mut adjoints,
                        *a,
                        va.data()
                            .iter()
                            .zip(vb.data())
                            .map(|(x, y)| 2.0 * g * (x - y)),
                        self.shapes[*a],
                    );
                    accumulate(
                        &mut adjoints,
                        *b,
                        va.data()
                            .iter()
                            .zip(vb.data())
                            .map(|(x, y)| -2.0 * g * (x - y)),
                        self.shapes[*b],
                    );
                }
            }
        }

        let collect = |ids: &[NodeId]| {
            ids.iter()
                .map(|&id| {
                    let grad = adjoints[id]
                        .clone()
                        .unwrap_or_else(|| Tensor::zeros(self.shapes[id].0, self.shapes[id].1));
                    (id, grad)
                })
                .collect::<Vec<_>>()
        };
        Ok(GradientReport {
            param_grads: collect(&self.params),
            probe_grads: collect(&self.probes),
        })
    }
}

fn accumulate(
    adjoints: &mut [Option<Tensor>],
    id: NodeId,
    contrib: impl Iterator<Item = f64>,
    shape: (usize, usize),
) {
    match &mut adjoints[id] {
        Some(existing) => {
            for (slot, c) in existing.data_mut().iter_mut().zip(contrib) {
                *slot += c;
            }
        }
        None => {
            let data: Vec<f64> = contrib.collect();
            adjoints[id] = Some(Tensor::from_vec(shape.0, shape.1, data));
        }
    }
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.shape();
    let (_, n) = b.shape();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data()[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data()[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(m, n, out)
}

/// `a . b^T` with `a: m x n`, `b: k x n` -> `m x k`.
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = a.shape();
    let (k, _) = b.shape();
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a.data()[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b.data()[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * k + p] = acc;
        }
    }
    Tensor::from_vec(m, k, out)
}

/// `a^T . b` with `a: m x n`, `b: m x k` -> `n x k`.
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = a.shape();
    let (_, k) = b.shape();
    let mut out = vec![0.0; n * k];
    for i in 0..m {
        let arow = &a.data()[i * n..(i + 1) * n];
        let brow = &b.data()[i * k..(i + 1) * k];
        for (j, av) in arow.iter().enumerate() {
            if *av == 0.0 {
                continue;
            }
            let orow = &mut out[j * k..(j + 1) * k];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(n, k, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(graph: &Graph, pairs: &[(NodeId, Tensor)]) -> Bindings {
        let mut b = Bindings::for_graph(graph);
        for (id, t) in pairs {
            b.set(*id, t.clone());
        }
        b
    }

    #[test]
    fn forward_square() {
        let mut g = Graph::new();
        let x = g.input(1, 1);
        let y = g.mul(x, x).unwrap();
        let vals = g.forward(&bind(&g, &[(x, Tensor::scalar(3.0))])).unwrap();
        assert_eq!(vals.value(y).item(), 9.0);
    }

    #[test]
    fn forward_sum() {
        let mut g = Graph::new();
        let x = g.input(1, 3);
        let s = g.sum_reduce(x).unwrap();
        let vals = g
            .forward(&bind(&g, &[(x, Tensor::row(&[1.0, 2.0, 3.0]))]))
            .unwrap();
        assert_eq!(vals.value(s).item(), 6.0);
    }

    #[test]
    fn backward_square_gradient() {
        let mut g = Graph::new();
        let x = g.param(1, 1);
        let y = g.mul(x, x).unwrap();
        let vals = g.forward(&bind(&g, &[(x, Tensor::scalar(3.0))])).unwrap();
        let report = g.backward(&vals, y).unwrap();
        assert_eq!(report.param_gradient(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_sum_is_ones() {
        let mut g = Graph::new();
        let q = g.param(1, 4);
        let s = g.sum_reduce(q).unwrap();
        let vals = g
            .forward(&bind(&g, &[(q, Tensor::row(&[0.5, -1.0, 2.0, 7.0]))]))
            .unwrap();
        let report = g.backward(&vals, s).unwrap();
        assert_eq!(report.param_gradient(q).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn probe_gradients_of_weighted_sum() {
        // q_tot = 2*q1 + 3*q2 -> probe gradients [2, 3].
        let mut g = Graph::new();
        let q1 = g.input(1, 1);
        let q2 = g.input(1, 1);
        let c2 = g.constant(Tensor::scalar(2.0));
        let c3 = g.constant(Tensor::scalar(3.0));
        let t1 = g.mul(q1, c2).unwrap();
        let t2 = g.mul(q2, c3).unwrap();
        let tot = g.add(t1, t2).unwrap();
        g.mark_probe(q1).unwrap();
        g.mark_probe(q2).unwrap();
        let vals = g
            .forward(&bind(&g, &[(q1, Tensor::scalar(1.0)), (q2, Tensor::scalar(1.0))]))
            .unwrap();
        let report = g.backward(&vals, tot).unwrap();
        assert_eq!(report.probe_gradient(q1).unwrap().item(), 2.0);
        assert_eq!(report.probe_gradient(q2).unwrap().item(), 3.0);
        assert_eq!(report.probe_count(), 2);
    }

    #[test]
    fn unbound_leaf_is_an_error() {
        let mut g = Graph::new();
        let x = g.input(1, 1);
        let _ = g.mul(x, x).unwrap();
        let err = g.forward(&Bindings::for_graph(&g)).unwrap_err();
        assert_eq!(err, GraphError::UnboundLeaf(x));
    }

    #[test]
    fn shape_mismatch_rejected_at_build() {
        let mut g = Graph::new();
        let a = g.input(1, 2);
        let b = g.input(1, 3);
        assert!(matches!(g.add(a, b), Err(GraphError::ShapeMismatch { .. })));
        assert!(matches!(g.matmul(a, a), Err(GraphError::ShapeMismatch { .. })));
    }

    #[test]
    fn non_scalar_seed_rejected() {
        let mut g = Graph::new();
        let x = g.input(1, 2);
        let y = g.relu(x).unwrap();
        let vals = g
            .forward(&bind(&g, &[(x, Tensor::row(&[1.0, -1.0]))]))
            .unwrap();
        assert_eq!(g.backward(&vals, y).unwrap_err(), GraphError::NonScalarSeed(y));
    }

    #[test]
    fn abs_derivative_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.param(1, 3);
        let a = g.abs(x).unwrap();
        let s = g.sum_reduce(a).unwrap();
        let vals = g
            .forward(&bind(&g, &[(x, Tensor::row(&[-2.0, 0.0, 5.0]))]))
            .unwrap();
        let report = g.backward(&vals, s).unwrap();
        assert_eq!(report.param_gradient(x).unwrap().data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut g = Graph::new();
        let x = g.input(1, 8);
        let w = g.param(8, 8);
        let h = g.matmul(x, w).unwrap();
        let r = g.relu(h).unwrap();
        let out = g.sum_reduce(r).unwrap();
        let xv = Tensor::row(&[0.3, -0.1, 0.7, 0.2, -0.9, 0.05, 1.3, -0.4]);
        let wv = Tensor::from_vec(8, 8, (0..64).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect());
        let binds = bind(&g, &[(x, xv), (w, wv)]);
        let v1 = g.forward(&binds).unwrap();
        let v2 = g.forward(&binds).unwrap();
        assert_eq!(v1.value(out).item().to_bits(), v2.value(out).item().to_bits());
        let r1 = g.backward(&v1, out).unwrap();
        let r2 = g.backward(&v2, out).unwrap();
        let g1 = r1.param_gradient(w).unwrap();
        let g2 = r2.param_gradient(w).unwrap();
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
