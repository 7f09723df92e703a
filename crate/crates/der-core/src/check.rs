//! Finite-difference gradient checking.
//!
//! Used by the test suites to validate every [`graph`](crate::graph)
//! primitive and every composed network against central differences. Kept
//! in the library (rather than test-only code) so the acceptance suite and
//! unit tests share one implementation of the oracle.

use crate::graph::{Bindings, Graph, GraphError, NodeId};

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Default relative tolerance for analytic-vs-numeric agreement.
pub const FD_REL_TOL: f64 = 1e-4;
/// Absolute floor below which tiny gradients are compared absolutely.
pub const FD_ABS_TOL: f64 = 1e-8;

/// True when `analytic` and `numeric` agree within `rel` relative error or
/// `abs` absolute error.
pub fn agrees(analytic: f64, numeric: f64, rel: f64, abs: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs || diff <= rel * analytic.abs().max(numeric.abs())
}

/// Central-difference estimate of `d loss / d leaf[index]`.
pub fn central_difference(
    graph: &Graph,
    binds: &Bindings,
    loss: NodeId,
    leaf: NodeId,
    index: usize,
    h: f64,
) -> Result<f64, GraphError> {
    let eval_at = |offset: f64| -> Result<f64, GraphError> {
        let mut shifted = binds.clone();
        let t = shifted
            .bound_mut(leaf)
            .ok_or(GraphError::UnboundLeaf(leaf))?;
        t.data_mut()[index] += offset;
        Ok(graph.forward(&shifted)?.value(loss).item())
    };
    Ok((eval_at(h)? - eval_at(-h)?) / (2.0 * h))
}

/// Check every component of every parameter leaf — and of every probe that
/// is itself an input leaf — against central differences. Returns the
/// number of comparisons performed, or a description of the first
/// disagreement.
pub fn check_gradients(
    graph: &Graph,
    binds: &Bindings,
    loss: NodeId,
    h: f64,
    rel: f64,
    abs: f64,
) -> Result<usize, String> {
    let values = graph.forward(binds).map_err(|e| e.to_string())?;
    let report = graph.backward(&values, loss).map_err(|e| e.to_string())?;

    let mut leaves: Vec<(NodeId, &str)> = graph
        .params()
        .iter()
        .map(|&id| (id, "param"))
        .collect();
    for &p in graph.probes() {
        if graph.inputs().contains(&p) {
            leaves.push((p, "probe"));
        }
    }

    let mut comparisons = 0;
    for (leaf, kind) in leaves {
        let analytic = match kind {
            "param" => report.param_gradient(leaf),
            _ => report.probe_gradient(leaf),
        }
        .map_err(|e| e.to_string())?
        .clone();
        for index in 0..analytic.len() {
            let numeric = central_difference(graph, binds, loss, leaf, index, h)
                .map_err(|e| e.to_string())?;
            let a = analytic.data()[index];
            if !agrees(a, numeric, rel, abs) {
                return Err(format!(
                    "{kind} leaf {leaf} component {index}: analytic {a} vs central-difference {numeric}"
                ));
            }
            comparisons += 1;
        }
    }
    Ok(comparisons)
}
