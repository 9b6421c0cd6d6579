//! Stateful layer wrappers around the kernels in the parent module.
//!
//! A layer owns its parameters, their gradient accumulators, and whatever
//! the backward pass needs from the last training forward. Calling
//! `backward` consumes that cache, so passes pair up one to one.
//!
//! The membrane layer is the only one that sees the time axis: its input
//! rows are grouped as `t_steps` contiguous blocks and its potential carries
//! from block to block. Everything else treats rows independently, which is
//! what lets the rest of the network run time-folded.

use super::{
    batchnorm_backward, batchnorm_forward_eval, batchnorm_forward_train, conv3x3_backward,
    conv3x3_forward, dropout_mask, linear_backward, linear_forward, maxpool2_backward,
    maxpool2_forward, voting_backward, voting_forward, BnCache,
};
use crate::neurons::{
    membrane_update, selu, selu_grad, sigmoid_grad, spike, surrogate_grad, NeuronKind,
    NeuronParams, SpikeMode,
};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Whether a forward pass is part of training (with its dropout source) or
/// evaluation. Training forwards cache activations and use batch
/// statistics; evaluation forwards are cache-free and frozen.
pub enum Phase<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

impl Phase<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Phase::Train(_))
    }
}

/// Weights drawn uniformly within `1 / sqrt(fan_in)`; biases start at zero
/// so an all-zero input stays zero through the linear parts of the network.
fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    t
}

/// A parameter visitor: name, value, gradient.
pub type ParamVisitor<'v> = dyn FnMut(&str, &mut Tensor, &mut Tensor) + 'v;
/// A buffer visitor for non-trained state such as running statistics.
pub type BufferVisitor<'v> = dyn FnMut(&str, &mut Tensor) + 'v;

pub struct Conv2d {
    pub w: Tensor,
    pub b: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
    cache_x: Option<Tensor>,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        Conv2d {
            w: kaiming_uniform(&[out_ch, in_ch, 3, 3], in_ch * 9, rng),
            b: Tensor::zeros(&[out_ch]),
            dw: Tensor::zeros(&[out_ch, in_ch, 3, 3]),
            db: Tensor::zeros(&[out_ch]),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, phase: &Phase) -> Tensor {
        let out = conv3x3_forward(x, &self.w, &self.b);
        if phase.is_train() {
            self.cache_x = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, d_out: &Tensor) -> Tensor {
        let x = self.cache_x.take().expect("conv backward without a training forward");
        conv3x3_backward(&x, &self.w, d_out, &mut self.dw, &mut self.db)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        f(&format!("{prefix}.w"), &mut self.w, &mut self.dw);
        f(&format!("{prefix}.b"), &mut self.b, &mut self.db);
    }
}

pub struct BatchNorm2d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            dgamma: Tensor::zeros(&[channels]),
            dbeta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
        cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, phase: &Phase) -> Tensor {
        if phase.is_train() {
            let (out, cache) = batchnorm_forward_train(
                x,
                &self.gamma,
                &self.beta,
                &mut self.running_mean,
                &mut self.running_var,
            );
            self.cache = Some(cache);
            out
        } else {
            batchnorm_forward_eval(x, &self.gamma, &self.beta, &self.running_mean, &self.running_var)
        }
    }

    pub fn backward(&mut self, d_out: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("batch norm backward without a training forward");
        batchnorm_backward(d_out, &self.gamma, &cache, &mut self.dgamma, &mut self.dbeta)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        f(&format!("{prefix}.gamma"), &mut self.gamma, &mut self.dgamma);
        f(&format!("{prefix}.beta"), &mut self.beta, &mut self.dbeta);
    }

    pub fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor) {
        f(&format!("{prefix}.running_mean"), &mut self.running_mean);
        f(&format!("{prefix}.running_var"), &mut self.running_var);
    }
}

#[derive(Default)]
pub struct MaxPool2 {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        MaxPool2::default()
    }

    pub fn forward(&mut self, x: &Tensor, phase: &Phase) -> Tensor {
        let (out, idx) = maxpool2_forward(x);
        if phase.is_train() {
            self.cache = Some((idx, x.shape().to_vec()));
        }
        out
    }

    pub fn backward(&mut self, d_out: &Tensor) -> Tensor {
        let (idx, shape) = self.cache.take().expect("pool backward without a training forward");
        maxpool2_backward(d_out, &idx, &shape)
    }
}

pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
    cache_x: Option<Tensor>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: kaiming_uniform(&[out_features, in_features], in_features, rng),
            b: Tensor::zeros(&[out_features]),
            dw: Tensor::zeros(&[out_features, in_features]),
            db: Tensor::zeros(&[out_features]),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, phase: &Phase) -> Tensor {
        let out = linear_forward(x, &self.w, &self.b);
        if phase.is_train() {
            self.cache_x = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, d_out: &Tensor) -> Tensor {
        let x = self.cache_x.take().expect("linear backward without a training forward");
        linear_backward(&x, &self.w, d_out, &mut self.dw, &mut self.db)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        f(&format!("{prefix}.w"), &mut self.w, &mut self.dw);
        f(&format!("{prefix}.b"), &mut self.b, &mut self.db);
    }
}

pub struct Dropout {
    pub p: f64,
    mask: Option<Tensor>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout rate {p} outside [0, 1)");
        Dropout { p, mask: None }
    }

    pub fn forward(&mut self, x: &Tensor, phase: &mut Phase) -> Tensor {
        match phase {
            Phase::Train(rng) if self.p > 0.0 => {
                let mask = dropout_mask(x.len(), self.p, rng);
                let mut out = x.clone();
                for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
                    *o *= m;
                }
                self.mask = Some(mask);
                out
            }
            _ => {
                self.mask = None;
                x.clone()
            }
        }
    }

    pub fn backward(&mut self, d_out: &Tensor) -> Tensor {
        match self.mask.take() {
            Some(mask) => {
                let mut dx = d_out.clone();
                for (g, m) in dx.data_mut().iter_mut().zip(mask.data()) {
                    *g *= m;
                }
                dx
            }
            None => d_out.clone(),
        }
    }
}

struct NeuronCache {
    u: Tensor,
    fired: Tensor,
    t_steps: usize,
}

/// A layer of neurons sharing one parameter set, unrolled over time.
///
/// Input rows are `t_steps` contiguous blocks of `batch x features`; the
/// membrane state flows from block to block. In `Hard` mode the backward
/// pass routes output gradients through the surrogate derivative and treats
/// the reset mask as a constant; in `Soft` mode the forward emits the
/// surrogate value itself and the backward also differentiates the mask, so
/// the layer is exactly the derivative of its forward.
pub struct NeuronLayer {
    pub params: NeuronParams,
    pub mode: SpikeMode,
    /// Learnable decay logit, used only by `Plif`.
    pub plif_logit: Tensor,
    pub d_plif_logit: Tensor,
    cache: Option<NeuronCache>,
}

impl NeuronLayer {
    pub fn new(params: NeuronParams, mode: SpikeMode) -> Self {
        NeuronLayer {
            params,
            mode,
            plif_logit: Tensor::zeros(&[1]),
            d_plif_logit: Tensor::zeros(&[1]),
            cache: None,
        }
    }

    fn decay(&self) -> f64 {
        self.params.decay(self.plif_logit.data()[0])
    }

    pub fn forward(&mut self, x: &Tensor, t_steps: usize, phase: &Phase) -> Tensor {
        let rows = x.shape()[0];
        assert!(t_steps > 0 && rows % t_steps == 0, "{rows} rows do not split into {t_steps} steps");
        let s = x.len() / t_steps;
        let decay = self.decay();
        let liaf = self.params.kind == NeuronKind::Liaf;

        let mut u = Tensor::zeros(&[x.len()]);
        let mut fired = Tensor::zeros(&[x.len()]);
        let mut out = Tensor::zeros(x.shape());
        {
            let xs = x.data();
            let us = u.data_mut();
            let fs = fired.data_mut();
            let os = out.data_mut();
            for step in 0..t_steps {
                let lo = step * s;
                for i in 0..s {
                    let (u_prev, f_prev) =
                        if step == 0 { (0.0, 0.0) } else { (us[lo - s + i], fs[lo - s + i]) };
                    let uv = membrane_update(decay, u_prev, f_prev, xs[lo + i]);
                    let fv = spike(uv - self.params.v_th, self.params.alpha, self.mode);
                    us[lo + i] = uv;
                    fs[lo + i] = fv;
                    os[lo + i] = if liaf { selu(uv) } else { fv };
                }
            }
        }
        if phase.is_train() {
            self.cache = Some(NeuronCache { u, fired, t_steps });
        }
        out
    }

    pub fn backward(&mut self, d_out: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("neuron backward without a training forward");
        let t_steps = cache.t_steps;
        let s = d_out.len() / t_steps;
        let decay = self.decay();
        let liaf = self.params.kind == NeuronKind::Liaf;
        let soft = self.mode == SpikeMode::Soft;

        let mut dx = Tensor::zeros(d_out.shape());
        let mut d_decay = 0.0;
        {
            let us = cache.u.data();
            let fs = cache.fired.data();
            let gs = d_out.data();
            let dxs = dx.data_mut();
            // du_carry[i] holds the potential gradient of step + 1.
            let mut du_carry = vec![0.0; s];
            for step in (0..t_steps).rev() {
                let lo = step * s;
                let last = step + 1 == t_steps;
                for i in 0..s {
                    let uv = us[lo + i];
                    let arg = uv - self.params.v_th;
                    let mut df = if liaf { 0.0 } else { gs[lo + i] };
                    if soft && !last {
                        // The fired value gates the next step's membrane:
                        // u[t+1] = decay * u[t] * (1 - f[t]) + x[t+1].
                        df += du_carry[i] * (-decay * uv);
                    }
                    let mut du = df * surrogate_grad(arg, self.params.alpha);
                    if liaf {
                        du += gs[lo + i] * selu_grad(uv);
                    }
                    if !last {
                        du += du_carry[i] * decay * (1.0 - fs[lo + i]);
                    }
                    dxs[lo + i] = du;
                    if step > 0 {
                        d_decay += du * us[lo - s + i] * (1.0 - fs[lo - s + i]);
                    }
                    du_carry[i] = du;
                }
            }
        }
        if self.params.kind == NeuronKind::Plif {
            let logit = self.plif_logit.data()[0];
            self.d_plif_logit.data_mut()[0] += d_decay * sigmoid_grad(logit);
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        if self.params.kind == NeuronKind::Plif {
            f(&format!("{prefix}.plif_logit"), &mut self.plif_logit, &mut self.d_plif_logit);
        }
    }
}

pub struct Voting {
    pub groups: usize,
}

impl Voting {
    pub fn new(groups: usize) -> Self {
        assert!(groups > 0, "voting needs at least one column per class");
        Voting { groups }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        voting_forward(x, self.groups)
    }

    pub fn backward(&self, d_out: &Tensor) -> Tensor {
        voting_backward(d_out, self.groups)
    }
}
