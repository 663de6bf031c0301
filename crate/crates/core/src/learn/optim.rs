//! AdamW with decoupled weight decay.

use crate::nncore::Tensor;

use super::LearnError;

/// Moment coefficients and decay of an AdamW update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: each step shrinks parameters by `lr * weight_decay`
    /// on top of the moment update.
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> AdamHyper {
        AdamHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

impl AdamHyper {
    pub fn with_weight_decay(weight_decay: f64) -> AdamHyper {
        AdamHyper { weight_decay, ..AdamHyper::default() }
    }
}

/// First/second moment estimates, one pair per parameter, plus the step
/// counter that drives bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    /// Zero moments shaped like the parameters they will track.
    pub fn new(params: &[Tensor]) -> AdamState {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW step over a parameter list, in place:
///
/// ```text
/// m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
/// p <- p - lr * ( (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps) + weight_decay * p )
/// ```
///
/// Every gradient is checked for finiteness before anything is written, so a
/// failed step leaves parameters and state untouched.
pub fn adamw_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    hyper: &AdamHyper,
) -> Result<(), LearnError> {
    if params.len() != grads.len() {
        return Err(LearnError::LengthMismatch { left: params.len(), right: grads.len() });
    }
    assert_eq!(params.len(), state.m.len(), "optimizer state tracks a different parameter list");
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        assert_eq!(p.shape(), g.shape(), "gradient {i} shaped unlike its parameter");
        if !g.is_finite() {
            return Err(LearnError::NonFinite {
                context: format!("gradient of parameter {i}"),
                iteration: state.step,
            });
        }
    }

    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);

    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(&mut state.v)) {
        *m = m.zip(g, |mi, gi| hyper.beta1 * mi + (1.0 - hyper.beta1) * gi);
        *v = v.zip(g, |vi, gi| hyper.beta2 * vi + (1.0 - hyper.beta2) * gi * gi);
        let data = p.data_mut();
        for ((x, mi), vi) in data.iter_mut().zip(m.data()).zip(v.data()) {
            let mhat = mi / bc1;
            let vhat = vi / bc2;
            *x -= lr * (mhat / (vhat.sqrt() + hyper.eps) + hyper.weight_decay * *x);
        }
    }
    Ok(())
}
