//! First-order optimizers over named tensor groups.
//!
//! The trainer accumulates gradients itself (so losses can be summed or
//! averaged over a batch before one `apply`); the optimizer only maps a
//! gradient list to a parameter update. Plain gradient descent exists
//! mainly for the gradient-equivalence checks, where the update must be a
//! fixed linear map of the gradient.

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        let zeros: Vec<Tensor> = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimKind, lr: f64, shapes: &[(usize, usize)]) -> Self {
        match kind {
            OptimKind::Sgd => Optimizer::Sgd(Sgd { lr }),
            OptimKind::Adam => Optimizer::Adam(Adam::new(lr, shapes)),
        }
    }

    /// Apply one step. `params` and `grads` must be aligned with the shapes
    /// the optimizer was created with.
    pub fn apply(&mut self, params: &mut [(&'static str, &mut Tensor)], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient group mismatch");
        match self {
            Optimizer::Sgd(s) => {
                for ((_, p), g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= s.lr * gv;
                    }
                }
            }
            Optimizer::Adam(a) => {
                a.t += 1;
                let bc1 = 1.0 - a.beta1.powi(a.t as i32);
                let bc2 = 1.0 - a.beta2.powi(a.t as i32);
                for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (a.m[i].data_mut(), a.v[i].data_mut());
                    for (j, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = a.beta1 * m[j] + (1.0 - a.beta1) * gv;
                        v[j] = a.beta2 * v[j] + (1.0 - a.beta2) * gv * gv;
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        *pv -= a.lr * m_hat / (v_hat.sqrt() + a.eps);
                    }
                }
            }
        }
    }
}
