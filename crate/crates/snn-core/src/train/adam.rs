//! Adam optimizer over named parameter tensors.

use crate::nn::checkpoint::Checkpointable;
use std::collections::BTreeMap;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second moment state is keyed by parameter name, so the update is
/// independent of visit order and survives across steps.
pub struct Adam {
    pub lr: f64,
    /// Running beta powers for bias correction, multiplied up one step at a
    /// time so the arithmetic is identical on every platform and opt level.
    pow1: f64,
    pow2: f64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        assert!(lr >= 0.0, "negative learning rate");
        Adam { lr, pow1: 1.0, pow2: 1.0, moments: BTreeMap::new() }
    }

    /// One bias-corrected update from the gradients currently stored in the
    /// model; gradients are left untouched (callers zero them per batch).
    pub fn step(&mut self, model: &mut dyn Checkpointable) {
        self.pow1 *= BETA1;
        self.pow2 *= BETA2;
        let c1 = 1.0 - self.pow1;
        let c2 = 1.0 - self.pow2;
        let lr = self.lr;
        let moments = &mut self.moments;
        model.visit_params(&mut |name, value, grad| {
            let (m, v) = moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; value.len()], vec![0.0; value.len()]));
            assert_eq!(m.len(), value.len(), "parameter {name} changed size");
            let p = value.data_mut();
            let g = grad.data();
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        });
    }
}
