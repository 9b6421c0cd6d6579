//! Classifier assemblies.
//!
//! [`BaselineModel`] is the single-stream network: a ladder of
//! conv/norm/neuron/pool blocks, a fully connected ladder with dropout, and
//! a vote-averaged spiking head. It serves the event-only, frame-only, and
//! early-fusion (channel-stacked input) configurations; only `in_channels`
//! differs.
//!
//! [`FusionModel`] runs one encoder per modality, joins them at a chosen
//! conv depth either by plain concatenation or through [`CmaModule`], and
//! continues with a shared trunk whose widths double to carry both streams.
//!
//! Construction draws every parameter from the caller's seeded generator in
//! a fixed order, so a seed fully determines the network.

use super::layers::{
    BatchNorm2d, BufferVisitor, Conv2d, Dropout, Linear, MaxPool2, NeuronLayer, ParamVisitor,
    Phase, Voting,
};
use crate::cma::{CmaConfig, CmaModule};
use crate::neurons::{NeuronParams, SpikeMode};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub t_steps: usize,
    pub n_classes: usize,
    /// Output channels of each conv block; every block halves the spatial
    /// dimensions.
    pub conv_channels: Vec<usize>,
    /// Hidden widths of the fully connected ladder.
    pub fc_hidden: Vec<usize>,
    pub neuron: NeuronParams,
    pub mode: SpikeMode,
    pub dropout: f64,
    /// Spiking output units per class, averaged into the class score.
    pub voting: usize,
}

impl ModelSpec {
    fn check(&self) {
        assert!(self.in_channels > 0 && self.height > 0 && self.width > 0, "empty input");
        assert!(self.t_steps > 0, "at least one time step");
        assert!(self.n_classes >= 2, "a classifier needs at least two classes");
        assert!(self.voting > 0, "at least one voting unit per class");
        assert!((0.0..1.0).contains(&self.dropout), "dropout outside [0, 1)");
        assert!(self.conv_channels.iter().all(|&c| c > 0), "zero-width conv block");
        assert!(self.fc_hidden.iter().all(|&f| f > 0), "zero-width fc layer");
        let (h, w) = self.pooled_hw();
        assert!(h > 0 && w > 0, "conv ladder pools the input away");
    }

    fn pooled_hw(&self) -> (usize, usize) {
        let mut h = self.height;
        let mut w = self.width;
        for _ in &self.conv_channels {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        (h, w)
    }

    /// Flattened feature count entering the fc ladder.
    fn conv_out_features(&self) -> usize {
        let (h, w) = self.pooled_hw();
        let c = self.conv_channels.last().copied().unwrap_or(self.in_channels);
        c * h * w
    }
}

/// conv -> batch norm -> membrane -> pool.
struct ConvBlock {
    conv: Conv2d,
    bn: BatchNorm2d,
    neuron: NeuronLayer,
    pool: MaxPool2,
}

impl ConvBlock {
    fn new(in_ch: usize, out_ch: usize, spec_neuron: NeuronParams, mode: SpikeMode, rng: &mut ChaCha8Rng) -> Self {
        ConvBlock {
            conv: Conv2d::new(in_ch, out_ch, rng),
            bn: BatchNorm2d::new(out_ch),
            neuron: NeuronLayer::new(spec_neuron, mode),
            pool: MaxPool2::new(),
        }
    }

    fn forward(&mut self, x: &Tensor, t_steps: usize, phase: &Phase) -> Tensor {
        let x = self.conv.forward(x, phase);
        let x = self.bn.forward(&x, phase);
        let x = self.neuron.forward(&x, t_steps, phase);
        self.pool.forward(&x, phase)
    }

    fn backward(&mut self, d: &Tensor) -> Tensor {
        let d = self.pool.backward(d);
        let d = self.neuron.backward(&d);
        let d = self.bn.backward(&d);
        self.conv.backward(&d)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        self.conv.visit_params(&format!("{prefix}.conv"), f);
        self.bn.visit_params(&format!("{prefix}.bn"), f);
        self.neuron.visit_params(&format!("{prefix}.neuron"), f);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor) {
        self.bn.visit_buffers(&format!("{prefix}.bn"), f);
    }
}

/// dropout -> linear -> membrane.
struct FcBlock {
    dropout: Dropout,
    linear: Linear,
    neuron: NeuronLayer,
}

impl FcBlock {
    fn new(in_f: usize, out_f: usize, dropout: f64, spec_neuron: NeuronParams, mode: SpikeMode, rng: &mut ChaCha8Rng) -> Self {
        FcBlock {
            dropout: Dropout::new(dropout),
            linear: Linear::new(in_f, out_f, rng),
            neuron: NeuronLayer::new(spec_neuron, mode),
        }
    }

    fn forward(&mut self, x: &Tensor, t_steps: usize, phase: &mut Phase) -> Tensor {
        let x = self.dropout.forward(x, phase);
        let x = self.linear.forward(&x, phase);
        self.neuron.forward(&x, t_steps, phase)
    }

    fn backward(&mut self, d: &Tensor) -> Tensor {
        let d = self.neuron.backward(d);
        let d = self.linear.backward(&d);
        self.dropout.backward(&d)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        self.linear.visit_params(&format!("{prefix}.linear"), f);
        self.neuron.visit_params(&format!("{prefix}.neuron"), f);
    }
}

/// The fc ladder plus voting head shared by both model families.
struct Head {
    fc: Vec<FcBlock>,
    out: FcBlock,
    voting: Voting,
}

impl Head {
    fn new(spec: &ModelSpec, in_features: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut fc = Vec::new();
        let mut f_in = in_features;
        for &f_out in &spec.fc_hidden {
            fc.push(FcBlock::new(f_in, f_out, spec.dropout, spec.neuron, spec.mode, rng));
            f_in = f_out;
        }
        let out = FcBlock::new(
            f_in,
            spec.n_classes * spec.voting,
            spec.dropout,
            spec.neuron,
            spec.mode,
            rng,
        );
        Head { fc, out, voting: Voting::new(spec.voting) }
    }

    /// Spiking output before the voting average, `[N, n_classes * voting]`.
    fn forward_spikes(&mut self, x: &Tensor, t_steps: usize, phase: &mut Phase) -> Tensor {
        let mut x = x.clone();
        for blk in &mut self.fc {
            x = blk.forward(&x, t_steps, phase);
        }
        self.out.forward(&x, t_steps, phase)
    }

    fn forward(&mut self, x: &Tensor, t_steps: usize, phase: &mut Phase) -> Tensor {
        let s = self.forward_spikes(x, t_steps, phase);
        self.voting.forward(&s)
    }

    fn backward_spikes(&mut self, d_spikes: &Tensor) -> Tensor {
        let mut d = self.out.backward(d_spikes);
        for blk in self.fc.iter_mut().rev() {
            d = blk.backward(&d);
        }
        d
    }

    fn backward(&mut self, d_out: &Tensor) -> Tensor {
        let d = self.voting.backward(d_out);
        self.backward_spikes(&d)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        for (i, blk) in self.fc.iter_mut().enumerate() {
            blk.visit_params(&format!("fc{i}"), f);
        }
        self.out.visit_params("head", f);
    }
}

/// Flattens `[N, C, H, W]` into `[N, C * H * W]` rows.
fn flatten(x: Tensor) -> Tensor {
    let n = x.shape()[0];
    let f = x.len() / n;
    x.reshape(&[n, f])
}

pub struct BaselineModel {
    pub spec: ModelSpec,
    blocks: Vec<ConvBlock>,
    head: Head,
    conv_in_shape: Vec<usize>,
}

impl BaselineModel {
    pub fn new(spec: ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        spec.check();
        let mut blocks = Vec::new();
        let mut c_in = spec.in_channels;
        for &c_out in &spec.conv_channels {
            blocks.push(ConvBlock::new(c_in, c_out, spec.neuron, spec.mode, rng));
            c_in = c_out;
        }
        let head = Head::new(&spec, spec.conv_out_features(), rng);
        let conv_in_shape = vec![0, spec.in_channels, spec.height, spec.width];
        BaselineModel { spec, blocks, head, conv_in_shape }
    }

    /// `[t_steps * batch, in_channels, H, W] -> [t_steps * batch, n_classes]`.
    pub fn forward(&mut self, x: &Tensor, phase: &mut Phase) -> Tensor {
        let s = self.forward_spikes(x, phase);
        self.head.voting.forward(&s)
    }

    /// Output spikes before voting, `[t_steps * batch, n_classes * voting]`.
    /// Decision-level fusion combines these across modalities.
    pub fn forward_spikes(&mut self, x: &Tensor, phase: &mut Phase) -> Tensor {
        let t = self.spec.t_steps;
        assert_eq!(x.shape()[1..], self.conv_in_shape[1..], "input shape");
        assert!(x.shape()[0] % t == 0, "rows not a multiple of t_steps");
        let mut x = x.clone();
        for blk in &mut self.blocks {
            x = blk.forward(&x, t, phase);
        }
        let x = flatten(x);
        self.head.forward_spikes(&x, t, phase)
    }

    /// Voting average over the spiking output, `-> [N, n_classes]`.
    pub fn vote(&self, spikes: &Tensor) -> Tensor {
        self.head.voting.forward(spikes)
    }

    pub fn vote_backward(&self, d_out: &Tensor) -> Tensor {
        self.head.voting.backward(d_out)
    }

    /// Gradient of the input; parameter gradients accumulate in place.
    pub fn backward(&mut self, d_out: &Tensor) -> Tensor {
        let d = self.head.voting.backward(d_out);
        self.backward_spikes(&d)
    }

    /// Backward from a gradient on the pre-voting spikes.
    pub fn backward_spikes(&mut self, d_spikes: &Tensor) -> Tensor {
        let mut d = self.head.backward_spikes(d_spikes);
        let n = d.shape()[0];
        let (h, w) = self.spec.pooled_hw();
        let c = self.spec.conv_channels.last().copied().unwrap_or(self.spec.in_channels);
        d = d.reshape(&[n, c, h, w]);
        for blk in self.blocks.iter_mut().rev() {
            d = blk.backward(&d);
        }
        d
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor) {
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            blk.visit_params(&format!("block{i}"), f);
        }
        self.head.visit_params(f);
    }

    pub fn visit_buffers(&mut self, f: &mut BufferVisitor) {
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            blk.visit_buffers(&format!("block{i}"), f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, _, g| g.fill(0.0));
    }
}

/// How the two branches are joined at the fusion point.
#[derive(Clone, Debug, PartialEq)]
pub enum FusionKind {
    /// Plain channel concatenation.
    Concat,
    /// Attention-modulated concatenation.
    Cma(CmaConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionSpec {
    /// Branch architecture; `in_channels` is ignored (events carry 2
    /// channels, frames 3).
    pub base: ModelSpec,
    /// Number of conv blocks each branch runs before fusion, `1..=n_conv`.
    pub placement: usize,
    pub kind: FusionKind,
}

pub const EVENT_CHANNELS: usize = 2;
pub const FRAME_CHANNELS: usize = 3;

pub struct FusionModel {
    pub spec: FusionSpec,
    event_blocks: Vec<ConvBlock>,
    frame_blocks: Vec<ConvBlock>,
    cma: Option<CmaModule>,
    trunk: Vec<ConvBlock>,
    head: Head,
}

impl FusionModel {
    pub fn new(spec: FusionSpec, rng: &mut ChaCha8Rng) -> Self {
        spec.base.check();
        let n_conv = spec.base.conv_channels.len();
        assert!(n_conv > 0, "fusion needs at least one conv block");
        assert!(
            (1..=n_conv).contains(&spec.placement),
            "placement {} outside 1..={n_conv}",
            spec.placement
        );
        let s = &spec.base;
        let mut event_blocks = Vec::new();
        let mut c_in = EVENT_CHANNELS;
        for &c_out in &s.conv_channels[..spec.placement] {
            event_blocks.push(ConvBlock::new(c_in, c_out, s.neuron, s.mode, rng));
            c_in = c_out;
        }
        let mut frame_blocks = Vec::new();
        let mut c_in = FRAME_CHANNELS;
        for &c_out in &s.conv_channels[..spec.placement] {
            frame_blocks.push(ConvBlock::new(c_in, c_out, s.neuron, s.mode, rng));
            c_in = c_out;
        }
        let cma = match &spec.kind {
            FusionKind::Concat => None,
            FusionKind::Cma(cfg) => Some(CmaModule::new(*cfg, s.t_steps, rng)),
        };
        // After fusion the channel count doubles, and stays doubled.
        let mut trunk = Vec::new();
        let mut c_in = 2 * s.conv_channels[spec.placement - 1];
        for &c_out in &s.conv_channels[spec.placement..] {
            trunk.push(ConvBlock::new(c_in, 2 * c_out, s.neuron, s.mode, rng));
            c_in = 2 * c_out;
        }
        let (h, w) = s.pooled_hw();
        let features = c_in * h * w;
        let head = Head::new(s, features, rng);
        FusionModel { spec, event_blocks, frame_blocks, cma, trunk, head }
    }

    pub fn forward(&mut self, x_events: &Tensor, x_frames: &Tensor, phase: &mut Phase) -> Tensor {
        self.forward_with_scores(x_events, x_frames, phase).0
    }

    /// Forward pass that also exposes the fusion attention scores (empty
    /// tensors when fusing by plain concatenation).
    pub fn forward_with_scores(
        &mut self,
        x_events: &Tensor,
        x_frames: &Tensor,
        phase: &mut Phase,
    ) -> (Tensor, Tensor, Tensor) {
        let t = self.spec.base.t_steps;
        assert_eq!(x_events.shape()[0], x_frames.shape()[0], "branch batch sizes differ");
        let mut e = x_events.clone();
        for blk in &mut self.event_blocks {
            e = blk.forward(&e, t, phase);
        }
        let mut fr = x_frames.clone();
        for blk in &mut self.frame_blocks {
            fr = blk.forward(&fr, t, phase);
        }
        let (mut x, s_ev, s_fr) = match &mut self.cma {
            Some(cma) => cma.forward_with_scores(&e, &fr, phase.is_train()),
            None => (
                crate::cma::concat_channels(&e, &fr),
                Tensor::zeros(&[0]),
                Tensor::zeros(&[0]),
            ),
        };
        for blk in &mut self.trunk {
            x = blk.forward(&x, t, phase);
        }
        let x = flatten(x);
        (self.head.forward(&x, t, phase), s_ev, s_fr)
    }

    /// Gradients of both inputs; parameter gradients accumulate in place.
    pub fn backward(&mut self, d_out: &Tensor) -> (Tensor, Tensor) {
        let s = &self.spec.base;
        let mut d = self.head.backward(d_out);
        let n = d.shape()[0];
        let (h, w) = s.pooled_hw();
        let c_last = 2 * s.conv_channels.last().unwrap();
        d = d.reshape(&[n, c_last, h, w]);
        for blk in self.trunk.iter_mut().rev() {
            d = blk.backward(&d);
        }
        let (mut d_e, mut d_f) = match &mut self.cma {
            Some(cma) => cma.backward(&d),
            None => {
                let c = s.conv_channels[self.spec.placement - 1];
                split_concat(&d, c)
            }
        };
        for blk in self.event_blocks.iter_mut().rev() {
            d_e = blk.backward(&d_e);
        }
        for blk in self.frame_blocks.iter_mut().rev() {
            d_f = blk.backward(&d_f);
        }
        (d_e, d_f)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor) {
        for (i, blk) in self.event_blocks.iter_mut().enumerate() {
            blk.visit_params(&format!("event{i}"), f);
        }
        for (i, blk) in self.frame_blocks.iter_mut().enumerate() {
            blk.visit_params(&format!("frame{i}"), f);
        }
        if let Some(cma) = &mut self.cma {
            cma.visit_params("cma", f);
        }
        for (i, blk) in self.trunk.iter_mut().enumerate() {
            blk.visit_params(&format!("trunk{i}"), f);
        }
        self.head.visit_params(f);
    }

    pub fn visit_buffers(&mut self, f: &mut BufferVisitor) {
        for (i, blk) in self.event_blocks.iter_mut().enumerate() {
            blk.visit_buffers(&format!("event{i}"), f);
        }
        for (i, blk) in self.frame_blocks.iter_mut().enumerate() {
            blk.visit_buffers(&format!("frame{i}"), f);
        }
        for (i, blk) in self.trunk.iter_mut().enumerate() {
            blk.visit_buffers(&format!("trunk{i}"), f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, _, g| g.fill(0.0));
    }

    /// Zeroes the attention parameters (tests only); no-op without CMA.
    pub fn zero_attention(&mut self) {
        if let Some(cma) = &mut self.cma {
            cma.zero_params();
        }
    }
}

/// Splits the gradient of a channel concatenation into its halves.
fn split_concat(g: &Tensor, c_first: usize) -> (Tensor, Tensor) {
    let (n, c, h, w) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
    let c_second = c - c_first;
    let plane = h * w;
    let mut a = Tensor::zeros(&[n, c_first, h, w]);
    let mut b = Tensor::zeros(&[n, c_second, h, w]);
    for ni in 0..n {
        let src = &g.data()[ni * c * plane..(ni + 1) * c * plane];
        a.data_mut()[ni * c_first * plane..(ni + 1) * c_first * plane]
            .copy_from_slice(&src[..c_first * plane]);
        b.data_mut()[ni * c_second * plane..(ni + 1) * c_second * plane]
            .copy_from_slice(&src[c_first * plane..]);
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            in_channels: 2,
            height: 8,
            width: 8,
            t_steps: 3,
            n_classes: 2,
            conv_channels: vec![4],
            fc_hidden: vec![8],
            neuron: NeuronParams::default(),
            mode: SpikeMode::Hard,
            dropout: 0.0,
            voting: 3,
        }
    }

    fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn baseline_shapes_and_determinism() {
        let spec = tiny_spec();
        let mut m1 = BaselineModel::new(spec.clone(), &mut rng_from(1, &[]));
        let mut m2 = BaselineModel::new(spec, &mut rng_from(1, &[]));
        let x = randn(&[6, 2, 8, 8], &mut rng_from(2, &[]));
        let out1 = m1.forward(&x, &mut Phase::Eval);
        let out2 = m2.forward(&x, &mut Phase::Eval);
        assert_eq!(out1.shape(), &[6, 2]);
        assert_eq!(out1.data(), out2.data());
        // A different seed gives different parameters.
        let mut m3 = BaselineModel::new(tiny_spec(), &mut rng_from(3, &[]));
        let collect = |m: &mut BaselineModel| {
            let mut all = Vec::new();
            m.visit_params(&mut |_, v, _| all.extend_from_slice(v.data()));
            all
        };
        assert_ne!(collect(&mut m1), collect(&mut m3));
    }

    #[test]
    fn fresh_model_maps_zero_input_to_zero_output() {
        // Zero biases, zero batch-norm shifts, and sub-threshold membranes
        // propagate an all-zero input to an all-zero score.
        let mut m = BaselineModel::new(tiny_spec(), &mut rng_from(4, &[]));
        let out = m.forward(&Tensor::zeros(&[6, 2, 8, 8]), &mut Phase::Eval);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn baseline_soft_gradients_match_finite_differences() {
        let spec = ModelSpec { mode: SpikeMode::Soft, ..tiny_spec() };
        let mut model = BaselineModel::new(spec, &mut rng_from(5, &[]));
        let x = randn(&[6, 2, 8, 8], &mut rng_from(6, &[]));
        let r = randn(&[6, 2], &mut rng_from(7, &[]));

        let mut loss_rng = rng_from(8, &[]);
        let mut phase = Phase::Train(&mut loss_rng);
        let out = model.forward(&x, &mut phase);
        model.zero_grads();
        let dx = model.backward(&r);
        let _ = out;

        let eval_loss = |model: &mut BaselineModel| -> f64 {
            let mut rng = rng_from(8, &[]);
            let mut phase = Phase::Train(&mut rng);
            let out = model.forward(&x, &mut phase);
            out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };

        // Input gradients.
        let h = 1e-5;
        let loss_x = |model: &mut BaselineModel, x: &Tensor| -> f64 {
            let mut rng = rng_from(8, &[]);
            let mut phase = Phase::Train(&mut rng);
            let out = model.forward(x, &mut phase);
            out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        for i in (0..x.len()).step_by(97) {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            let fd = (loss_x(&mut model, &p) - loss_x(&mut model, &m)) / (2.0 * h);
            let an = dx.data()[i];
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1.0), "dx[{i}]: {fd} vs {an}");
        }

        // A few elements of every parameter tensor.
        let mut names = Vec::new();
        model.visit_params(&mut |n, _, _| names.push(n.to_string()));
        for name in names {
            let (len, analytic) = {
                let mut found = None;
                model.visit_params(&mut |n, v, g| {
                    if n == name {
                        found = Some((v.len(), g.data().to_vec()));
                    }
                });
                found.unwrap()
            };
            let step = (len / 4).max(1);
            for i in (0..len).step_by(step) {
                let mut probe = |delta: f64| -> f64 {
                    model.visit_params(&mut |n, v, _| {
                        if n == name {
                            v.data_mut()[i] += delta;
                        }
                    });
                    let l = eval_loss(&mut model);
                    model.visit_params(&mut |n, v, _| {
                        if n == name {
                            v.data_mut()[i] -= delta;
                        }
                    });
                    l
                };
                let fd = (probe(h) - probe(-h)) / (2.0 * h);
                let an = analytic[i];
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                    "{name}[{i}]: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    fn fusion_spec(placement: usize, kind: FusionKind) -> FusionSpec {
        FusionSpec {
            base: ModelSpec {
                conv_channels: vec![4, 4],
                mode: SpikeMode::Soft,
                ..tiny_spec()
            },
            placement,
            kind,
        }
    }

    #[test]
    fn fusion_shapes_for_every_placement_and_kind() {
        for placement in [1, 2] {
            for kind in [FusionKind::Concat, FusionKind::Cma(CmaConfig::default())] {
                let mut m = FusionModel::new(fusion_spec(placement, kind), &mut rng_from(9, &[]));
                let xe = randn(&[6, 2, 8, 8], &mut rng_from(10, &[]));
                let xf = randn(&[6, 3, 8, 8], &mut rng_from(11, &[]));
                let out = m.forward(&xe, &xf, &mut Phase::Eval);
                assert_eq!(out.shape(), &[6, 2], "placement {placement}");
            }
        }
    }

    #[test]
    fn cma_fusion_with_zeroed_attention_matches_its_score_contract() {
        let mut m = FusionModel::new(
            fusion_spec(2, FusionKind::Cma(CmaConfig::default())),
            &mut rng_from(12, &[]),
        );
        m.zero_attention();
        let xe = randn(&[6, 2, 8, 8], &mut rng_from(13, &[]));
        let xf = randn(&[6, 3, 8, 8], &mut rng_from(14, &[]));
        let (_, s_ev, s_fr) = m.forward_with_scores(&xe, &xf, &mut Phase::Eval);
        assert!(s_ev.data().iter().all(|&v| v == 0.5));
        assert!(s_fr.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fusion_soft_gradients_match_finite_differences() {
        for kind in [FusionKind::Concat, FusionKind::Cma(CmaConfig::default())] {
            let mut model = FusionModel::new(fusion_spec(1, kind.clone()), &mut rng_from(15, &[]));
            let xe = randn(&[6, 2, 8, 8], &mut rng_from(16, &[]));
            let xf = randn(&[6, 3, 8, 8], &mut rng_from(17, &[]));
            let r = randn(&[6, 2], &mut rng_from(18, &[]));

            let mut rng = rng_from(19, &[]);
            let mut phase = Phase::Train(&mut rng);
            let _ = model.forward(&xe, &xf, &mut phase);
            model.zero_grads();
            let (d_e, d_f) = model.backward(&r);

            let loss = |model: &mut FusionModel, xe: &Tensor, xf: &Tensor| -> f64 {
                let mut rng = rng_from(19, &[]);
                let mut phase = Phase::Train(&mut rng);
                let out = model.forward(xe, xf, &mut phase);
                out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
            };

            let h = 1e-5;
            for i in (0..xe.len()).step_by(131) {
                let mut p = xe.clone();
                p.data_mut()[i] += h;
                let mut m = xe.clone();
                m.data_mut()[i] -= h;
                let fd = (loss(&mut model, &p, &xf) - loss(&mut model, &m, &xf)) / (2.0 * h);
                let an = d_e.data()[i];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1.0), "{kind:?} d_e[{i}]: {fd} vs {an}");
            }
            for i in (0..xf.len()).step_by(131) {
                let mut p = xf.clone();
                p.data_mut()[i] += h;
                let mut m = xf.clone();
                m.data_mut()[i] -= h;
                let fd = (loss(&mut model, &xe, &p) - loss(&mut model, &xe, &m)) / (2.0 * h);
                let an = d_f.data()[i];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1.0), "{kind:?} d_f[{i}]: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn param_names_are_unique() {
        let mut m = FusionModel::new(
            fusion_spec(1, FusionKind::Cma(CmaConfig::default())),
            &mut rng_from(20, &[]),
        );
        let mut names = Vec::new();
        m.visit_params(&mut |n, _, _| names.push(n.to_string()));
        m.visit_buffers(&mut |n, _| names.push(n.to_string()));
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len(), "{names:?}");
        assert!(names.iter().any(|n| n == "cma.event.m1"));
        assert!(names.iter().any(|n| n == "cma.frame.m3"));
    }
}
