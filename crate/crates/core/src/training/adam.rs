//! Adam with bias correction, operating tensor-by-tensor on the network
//! parameter struct.

use crate::netmodel::NetParams;

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: NetParams,
    pub v: NetParams,
}

impl AdamState {
    pub fn new(params: &NetParams) -> Self {
        AdamState {
            step: 0,
            m: NetParams::zeros(params.arch, params.hidden),
            v: NetParams::zeros(params.arch, params.hidden),
        }
    }
}

/// One Adam update. Deterministic and in-place.
pub fn adam_step(
    params: &mut NetParams,
    grads: &NetParams,
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) {
    let (b1, b2) = betas;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (((_, p), (_, g)), ((_, m), (_, v))) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().into_iter().zip(state.v.tensors_mut()))
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
