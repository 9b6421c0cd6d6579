//! Spiking neuron primitives.
//!
//! All four neuron kinds share one membrane recurrence, written exactly once
//! in [`membrane_update`]: the previous potential decays, is zeroed where the
//! neuron just fired, and the new input current is added. They differ only in
//! where the decay factor comes from and in what they emit:
//!
//! * `Lif` decays by `(tau - 1) / tau` and emits a spike.
//! * `If` keeps the full potential (decay 1) and emits a spike.
//! * `Plif` reads its decay from a learnable logit through a sigmoid.
//! * `Liaf` decays like `Lif` but emits `selu(u)` while the reset still
//!   follows the spike comparison.
//!
//! A spike is `u >= v_th`, with the boundary counting as a spike. Training
//! replaces the step's zero derivative with the derivative of a scaled
//! arctangent sigmoid; its sharpness `alpha` makes the surrogate slope at
//! threshold `alpha / 2`.

/// The reset potential `v_reset` is carried in the parameters for
/// completeness, but the recurrence multiplies the fired entries to zero
/// rather than pinning them to `v_reset`, so its value never enters the
/// computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronParams {
    pub kind: NeuronKind,
    pub tau: f64,
    pub v_th: f64,
    pub v_reset: f64,
    /// Surrogate sharpness.
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeuronKind {
    Lif,
    If,
    Plif,
    Liaf,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams { kind: NeuronKind::Lif, tau: 2.0, v_th: 1.0, v_reset: 0.0, alpha: 2.0 }
    }
}

impl NeuronParams {
    /// Membrane decay factor. `Plif` owns a logit parameter per layer; the
    /// other kinds ignore it.
    pub fn decay(&self, plif_logit: f64) -> f64 {
        match self.kind {
            NeuronKind::Lif | NeuronKind::Liaf => (self.tau - 1.0) / self.tau,
            NeuronKind::If => 1.0,
            NeuronKind::Plif => sigmoid(plif_logit),
        }
    }
}

/// How the spike nonlinearity behaves in the forward pass.
///
/// `Hard` emits binary spikes and backpropagates the surrogate derivative
/// straight through, ignoring the reset-mask path. `Soft` runs the surrogate
/// itself forward and keeps the mask path in the backward pass, which makes
/// the whole network a smooth function that finite differences can verify.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpikeMode {
    Hard,
    Soft,
}

/// One membrane step: decayed potential, zeroed where the neuron fired on
/// the previous step, plus the new input.
#[inline]
pub fn membrane_update(decay: f64, u_prev: f64, fired_prev: f64, input: f64) -> f64 {
    decay * u_prev * (1.0 - fired_prev) + input
}

/// Unit step with the boundary on the firing side.
#[inline]
pub fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Scaled arctangent sigmoid: the smooth stand-in for [`heaviside`].
#[inline]
pub fn surrogate(x: f64, alpha: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    (FRAC_PI_2 * alpha * x).atan() / PI + 0.5
}

/// Derivative of [`surrogate`]; equals `alpha / 2` at the threshold.
#[inline]
pub fn surrogate_grad(x: f64, alpha: f64) -> f64 {
    let z = std::f64::consts::FRAC_PI_2 * alpha * x;
    alpha / (2.0 * (1.0 + z * z))
}

/// Spike value in the given mode.
#[inline]
pub fn spike(x: f64, alpha: f64, mode: SpikeMode) -> f64 {
    match mode {
        SpikeMode::Hard => heaviside(x),
        SpikeMode::Soft => surrogate(x, alpha),
    }
}

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

#[inline]
pub fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn sigmoid_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// One simulated step of a single neuron.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarStep {
    /// Potential after integration, before any reset.
    pub u: f64,
    /// What the neuron emits: the (hard or soft) spike, or `selu(u)` for `Liaf`.
    pub out: f64,
    /// The reset mask applied on the next step.
    pub fired: f64,
}

/// Straight-line single-neuron simulator. This is the behavioral reference
/// the vectorized layers are checked against, step for step and bit for bit.
pub fn simulate_scalar(
    params: &NeuronParams,
    plif_logit: f64,
    mode: SpikeMode,
    inputs: &[f64],
) -> Vec<ScalarStep> {
    let decay = params.decay(plif_logit);
    let mut u_prev = 0.0;
    let mut fired_prev = 0.0;
    let mut steps = Vec::with_capacity(inputs.len());
    for &input in inputs {
        let u = membrane_update(decay, u_prev, fired_prev, input);
        let fired = spike(u - params.v_th, params.alpha, mode);
        let out = match params.kind {
            NeuronKind::Liaf => selu(u),
            _ => fired,
        };
        steps.push(ScalarStep { u, out, fired });
        u_prev = u;
        fired_prev = fired;
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIF: NeuronParams = NeuronParams {
        kind: NeuronKind::Lif,
        tau: 2.0,
        v_th: 1.0,
        v_reset: 0.0,
        alpha: 2.0,
    };

    #[test]
    fn lif_subthreshold_step() {
        let u = membrane_update(LIF.decay(0.0), 0.6, 0.0, 0.6);
        assert!((u - 0.9).abs() < 1e-15);
        assert_eq!(heaviside(u - LIF.v_th), 0.0);
    }

    #[test]
    fn lif_firing_step() {
        let u = membrane_update(LIF.decay(0.0), 0.6, 0.0, 0.8);
        assert!((u - 1.1).abs() < 1e-15);
        assert_eq!(heaviside(u - LIF.v_th), 1.0);
    }

    #[test]
    fn if_neuron_integrates_without_leak_and_fires_at_threshold() {
        let params = NeuronParams { kind: NeuronKind::If, ..LIF };
        let steps = simulate_scalar(&params, 0.0, SpikeMode::Hard, &[0.4, 0.3, 0.3]);
        assert_eq!(steps[0].u, 0.4);
        assert_eq!(steps[1].u, 0.7);
        assert_eq!(steps[2].u, 1.0);
        assert_eq!(steps[0].out, 0.0);
        assert_eq!(steps[1].out, 0.0);
        // Reaching the threshold exactly counts as firing.
        assert_eq!(steps[2].out, 1.0);
    }

    #[test]
    fn firing_resets_the_potential_to_zero_whatever_v_reset_says() {
        for v_reset in [0.0, 0.3, -0.5] {
            let params = NeuronParams { v_reset, ..LIF };
            let steps = simulate_scalar(&params, 0.0, SpikeMode::Hard, &[2.0, 0.0, 0.4]);
            assert_eq!(steps[0].out, 1.0);
            assert_eq!(steps[1].u, 0.0);
            assert_eq!(steps[2].u, 0.4);
        }
    }

    #[test]
    fn plif_decay_comes_from_its_logit() {
        let params = NeuronParams { kind: NeuronKind::Plif, ..LIF };
        assert_eq!(params.decay(0.0), 0.5);
        assert!((params.decay(2.0) - sigmoid(2.0)).abs() < 1e-15);
        let hot = simulate_scalar(&params, 4.0, SpikeMode::Hard, &[0.5, 0.4]);
        let cold = simulate_scalar(&params, -4.0, SpikeMode::Hard, &[0.5, 0.4]);
        assert!(hot[1].u > cold[1].u);
    }

    #[test]
    fn liaf_emits_selu_but_resets_by_the_spike() {
        let params = NeuronParams { kind: NeuronKind::Liaf, ..LIF };
        let steps = simulate_scalar(&params, 0.0, SpikeMode::Hard, &[2.0, 0.5]);
        assert_eq!(steps[0].u, 2.0);
        assert_eq!(steps[0].out, selu(2.0));
        assert_eq!(steps[0].fired, 1.0);
        // The potential was cleared by the spike even though the output
        // channel carried an analog value.
        assert_eq!(steps[1].u, 0.5);
        assert_eq!(steps[1].out, selu(0.5));
    }

    #[test]
    fn surrogate_is_a_sigmoid_around_the_step() {
        assert_eq!(surrogate(0.0, 2.0), 0.5);
        assert!(surrogate(-1.0, 2.0) < surrogate(-0.5, 2.0));
        assert!(surrogate(0.5, 2.0) < surrogate(1.0, 2.0));
        assert!(surrogate(-1e6, 2.0) < 1e-5);
        assert!(surrogate(1e6, 2.0) > 1.0 - 1e-5);
        assert_eq!(surrogate_grad(0.0, 2.0), 1.0);
        assert_eq!(surrogate_grad(0.0, 4.0), 2.0);
    }

    #[test]
    fn surrogate_grad_matches_finite_differences() {
        for alpha in [0.5, 2.0, 10.0] {
            for x in [-3.0, -0.7, 0.0, 0.2, 1.5] {
                let h = 1e-6;
                let fd = (surrogate(x + h, alpha) - surrogate(x - h, alpha)) / (2.0 * h);
                let g = surrogate_grad(x, alpha);
                assert!((fd - g).abs() <= 1e-6 * g.max(1.0), "alpha {alpha} x {x}: {fd} vs {g}");
            }
        }
    }

    /// The integral of the surrogate derivative over [-50, 50] is
    /// `(2 / pi) * atan(25 * pi * alpha)` in closed form. For sharp slopes it
    /// is within a milli of 1; at `alpha = 2` the tails outside the window
    /// still hold about 0.004 of the mass, so only the closed form is exact.
    #[test]
    fn surrogate_grad_integrates_to_one_over_a_wide_window() {
        let trapezoid = |alpha: f64| {
            let (a, b, n) = (-50.0, 50.0, 200_000usize);
            let h = (b - a) / n as f64;
            let mut acc = (surrogate_grad(a, alpha) + surrogate_grad(b, alpha)) / 2.0;
            for i in 1..n {
                acc += surrogate_grad(a + i as f64 * h, alpha);
            }
            acc * h
        };
        for alpha in [2.0, 10.0, 20.0, 50.0] {
            let numeric = trapezoid(alpha);
            let analytic =
                2.0 / std::f64::consts::PI * (25.0 * std::f64::consts::PI * alpha).atan();
            assert!((numeric - analytic).abs() < 1e-6, "alpha {alpha}: {numeric} vs {analytic}");
            if alpha >= 10.0 {
                assert!((numeric - 1.0).abs() <= 1e-3, "alpha {alpha}: {numeric}");
            } else {
                assert!((numeric - 1.0).abs() <= 5e-3, "alpha {alpha}: {numeric}");
            }
        }
    }

    #[test]
    fn soft_mode_runs_the_surrogate_forward() {
        let steps = simulate_scalar(&LIF, 0.0, SpikeMode::Soft, &[1.0]);
        assert_eq!(steps[0].out, 0.5);
        let steps = simulate_scalar(&LIF, 0.0, SpikeMode::Soft, &[3.0]);
        assert!(steps[0].out > 0.5 && steps[0].out < 1.0);
    }

    #[test]
    fn selu_is_continuous_and_matches_its_gradient() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1e-12) - selu(-1e-12)).abs() < 1e-11);
        assert_eq!(selu(1.0), SELU_LAMBDA);
        for x in [-2.0, -0.3, 0.4, 2.5] {
            let h = 1e-7;
            let fd = (selu(x + h) - selu(x - h)) / (2.0 * h);
            assert!((fd - selu_grad(x)).abs() < 1e-6, "x {x}");
        }
    }
}
