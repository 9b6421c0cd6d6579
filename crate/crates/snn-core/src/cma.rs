//! Cross-modality attention fusion.
//!
//! At the fusion point both branches carry feature maps of the same shape
//! `[t_steps * batch, C, H, W]`. Each side summarizes its own features into
//! a firing-rate profile and turns that into attention scores that modulate
//! the *other* side before the two are concatenated along channels:
//!
//! * A **temporal** head averages its source over channels and space,
//!   leaving one rate per time step, and passes it through a two-layer
//!   bottleneck (`sigmoid(M2^T relu(M1^T r))` by default). The resulting
//!   per-step score scales every feature of the other side at that step.
//! * A **spatial** head averages its source over channels and time, leaving
//!   one rate per pixel, and passes it through a 3x3 convolution and a
//!   relu. The per-pixel score scales the other side at that pixel.
//!
//! By default the event side computes the temporal head and the frame side
//! the spatial one; either side can be switched for ablations. The
//! `literal_order` flag swaps the two nonlinearities of the temporal
//! bottleneck (`relu(M2^T sigmoid(M1^T r))`).
//!
//! Scores multiply features directly, so forcing every score to one
//! reproduces a plain channel concatenation bit for bit; the
//! `forward_overridden` hook exists to let tests inject such scores.
//! Gradients flow through both the modulated features and the rate
//! summaries.

use crate::neurons::{sigmoid, sigmoid_grad};
use crate::nn::{conv3x3_backward, conv3x3_forward};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Which summary a side computes over its own features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttKind {
    Temporal,
    Spatial,
}

impl AttKind {
    pub fn name(self) -> &'static str {
        match self {
            AttKind::Temporal => "temporal",
            AttKind::Spatial => "spatial",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmaConfig {
    /// Head computed from the event features (it modulates the frames).
    pub event_att: AttKind,
    /// Head computed from the frame features (it modulates the events).
    pub frame_att: AttKind,
    /// Bottleneck reduction of the temporal head; the hidden width is
    /// `max(1, t_steps / reduce)`.
    pub reduce: usize,
    /// Swap the temporal head's nonlinearities.
    pub literal_order: bool,
}

impl Default for CmaConfig {
    fn default() -> Self {
        CmaConfig { event_att: AttKind::Temporal, frame_att: AttKind::Spatial, reduce: 4, literal_order: false }
    }
}

/// Concatenates two `[N, C, H, W]` tensors along channels.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, ca, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2], a.shape()[3]);
    let cb = b.shape()[1];
    b.assert_shape(&[n, cb, h, w], "concat second input");
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, ca + cb, h, w]);
    let os = out.data_mut();
    for ni in 0..n {
        let dst = &mut os[ni * (ca + cb) * plane..(ni + 1) * (ca + cb) * plane];
        dst[..ca * plane].copy_from_slice(&a.data()[ni * ca * plane..(ni + 1) * ca * plane]);
        dst[ca * plane..].copy_from_slice(&b.data()[ni * cb * plane..(ni + 1) * cb * plane]);
    }
    out
}

/// Splits a channel concatenation back into its two halves.
fn split_channels(g: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let (n, c, h, w) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
    let cb = c - ca;
    let plane = h * w;
    let mut a = Tensor::zeros(&[n, ca, h, w]);
    let mut b = Tensor::zeros(&[n, cb, h, w]);
    for ni in 0..n {
        let src = &g.data()[ni * c * plane..(ni + 1) * c * plane];
        a.data_mut()[ni * ca * plane..(ni + 1) * ca * plane].copy_from_slice(&src[..ca * plane]);
        b.data_mut()[ni * cb * plane..(ni + 1) * cb * plane].copy_from_slice(&src[ca * plane..]);
    }
    (a, b)
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

enum HeadParams {
    Temporal {
        /// `[t_steps, hidden]`
        m1: Tensor,
        dm1: Tensor,
        /// `[hidden, t_steps]`
        m2: Tensor,
        dm2: Tensor,
    },
    Spatial {
        /// `[1, 1, 3, 3]`
        m3: Tensor,
        dm3: Tensor,
    },
}

struct TemporalCache {
    /// `[batch, t_steps]` rates.
    r: Tensor,
    /// `[batch, hidden]` pre- and post-activation bottleneck.
    z1: Tensor,
    h1: Tensor,
    /// `[batch, t_steps]` pre-activation scores.
    z2: Tensor,
}

struct SpatialCache {
    /// `[batch, 1, H, W]` rates.
    m: Tensor,
    /// `[batch, 1, H, W]` pre-relu conv output.
    z: Tensor,
}

enum HeadCache {
    Temporal(TemporalCache),
    Spatial(SpatialCache),
}

/// One side's score computation.
struct AttentionHead {
    kind: AttKind,
    t_steps: usize,
    hidden: usize,
    literal_order: bool,
    params: HeadParams,
    cache: Option<HeadCache>,
}

impl AttentionHead {
    fn new(kind: AttKind, cfg: &CmaConfig, t_steps: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(cfg.reduce > 0, "reduction must be positive");
        let hidden = (t_steps / cfg.reduce).max(1);
        let params = match kind {
            AttKind::Temporal => {
                let bound1 = 1.0 / (t_steps as f64).sqrt();
                let bound2 = 1.0 / (hidden as f64).sqrt();
                let mut m1 = Tensor::zeros(&[t_steps, hidden]);
                for v in m1.data_mut() {
                    *v = rng.gen_range(-bound1..bound1);
                }
                let mut m2 = Tensor::zeros(&[hidden, t_steps]);
                for v in m2.data_mut() {
                    *v = rng.gen_range(-bound2..bound2);
                }
                HeadParams::Temporal {
                    dm1: Tensor::zeros(m1.shape()),
                    dm2: Tensor::zeros(m2.shape()),
                    m1,
                    m2,
                }
            }
            AttKind::Spatial => {
                let bound = 1.0 / 3.0;
                let mut m3 = Tensor::zeros(&[1, 1, 3, 3]);
                for v in m3.data_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
                HeadParams::Spatial { dm3: Tensor::zeros(m3.shape()), m3 }
            }
        };
        AttentionHead { kind, t_steps, hidden, literal_order: cfg.literal_order, params, cache: None }
    }

    fn act1(&self, z: f64) -> f64 {
        if self.literal_order {
            sigmoid(z)
        } else {
            relu(z)
        }
    }

    fn act2(&self, z: f64) -> f64 {
        if self.literal_order {
            relu(z)
        } else {
            sigmoid(z)
        }
    }

    /// Score from source features: `[T, B]` for temporal, `[B, H, W]` for
    /// spatial.
    fn compute(&mut self, src: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = (src.shape()[0], src.shape()[1], src.shape()[2], src.shape()[3]);
        let t = self.t_steps;
        assert!(n % t == 0, "{n} rows do not split into {t} steps");
        let b = n / t;
        let plane = h * w;
        match (&self.params, self.kind) {
            (HeadParams::Temporal { m1, m2, .. }, AttKind::Temporal) => {
                let hid = self.hidden;
                let mut r = Tensor::zeros(&[b, t]);
                for ti in 0..t {
                    for bi in 0..b {
                        let row = ti * b + bi;
                        let lo = row * c * plane;
                        let mean =
                            src.data()[lo..lo + c * plane].iter().sum::<f64>() / (c * plane) as f64;
                        r.data_mut()[bi * t + ti] = mean;
                    }
                }
                let mut z1 = Tensor::zeros(&[b, hid]);
                let mut h1 = Tensor::zeros(&[b, hid]);
                let mut z2 = Tensor::zeros(&[b, t]);
                let mut score = Tensor::zeros(&[t, b]);
                for bi in 0..b {
                    for j in 0..hid {
                        let mut acc = 0.0;
                        for ti in 0..t {
                            acc += m1.data()[ti * hid + j] * r.data()[bi * t + ti];
                        }
                        z1.data_mut()[bi * hid + j] = acc;
                        h1.data_mut()[bi * hid + j] = self.act1(acc);
                    }
                    for ti in 0..t {
                        let mut acc = 0.0;
                        for j in 0..hid {
                            acc += m2.data()[j * t + ti] * h1.data()[bi * hid + j];
                        }
                        z2.data_mut()[bi * t + ti] = acc;
                        score.data_mut()[ti * b + bi] = self.act2(acc);
                    }
                }
                if train {
                    self.cache = Some(HeadCache::Temporal(TemporalCache { r, z1, h1, z2 }));
                }
                score
            }
            (HeadParams::Spatial { m3, .. }, AttKind::Spatial) => {
                let mut m = Tensor::zeros(&[b, 1, h, w]);
                let scale = 1.0 / (t * c) as f64;
                for ti in 0..t {
                    for bi in 0..b {
                        let row = ti * b + bi;
                        for ci in 0..c {
                            let lo = (row * c + ci) * plane;
                            let dst = &mut m.data_mut()[bi * plane..(bi + 1) * plane];
                            for (d, s) in dst.iter_mut().zip(&src.data()[lo..lo + plane]) {
                                *d += s * scale;
                            }
                        }
                    }
                }
                let z = conv3x3_forward(&m, m3, &Tensor::zeros(&[1]));
                let mut score = Tensor::zeros(&[b, h, w]);
                for (s, zv) in score.data_mut().iter_mut().zip(z.data()) {
                    *s = relu(*zv);
                }
                if train {
                    self.cache = Some(HeadCache::Spatial(SpatialCache { m, z }));
                }
                score
            }
            _ => unreachable!("head params always match the kind"),
        }
    }

    /// Backpropagates a score gradient to the source features.
    fn backward(&mut self, d_score: &Tensor, src_shape: &[usize]) -> Tensor {
        let (_, c, h, w) = (src_shape[0], src_shape[1], src_shape[2], src_shape[3]);
        let t = self.t_steps;
        let b = src_shape[0] / t;
        let plane = h * w;
        let cache = self.cache.take().expect("attention backward without a training forward");
        let mut d_src = Tensor::zeros(src_shape);
        match (&mut self.params, cache) {
            (HeadParams::Temporal { m1, dm1, m2, dm2 }, HeadCache::Temporal(tc)) => {
                let hid = self.hidden;
                let lit = self.literal_order;
                let act2_grad = |z: f64| if lit { relu_grad(z) } else { sigmoid_grad(z) };
                let act1_grad = |z: f64| if lit { sigmoid_grad(z) } else { relu_grad(z) };
                for bi in 0..b {
                    let mut dz2 = vec![0.0; t];
                    for ti in 0..t {
                        dz2[ti] = d_score.data()[ti * b + bi] * act2_grad(tc.z2.data()[bi * t + ti]);
                    }
                    let mut dh1 = vec![0.0; hid];
                    for j in 0..hid {
                        let h1v = tc.h1.data()[bi * hid + j];
                        let mut acc = 0.0;
                        for ti in 0..t {
                            dm2.data_mut()[j * t + ti] += h1v * dz2[ti];
                            acc += m2.data()[j * t + ti] * dz2[ti];
                        }
                        dh1[j] = acc;
                    }
                    let mut dz1 = vec![0.0; hid];
                    for j in 0..hid {
                        dz1[j] = dh1[j] * act1_grad(tc.z1.data()[bi * hid + j]);
                    }
                    for ti in 0..t {
                        let rv = tc.r.data()[bi * t + ti];
                        let mut acc = 0.0;
                        for j in 0..hid {
                            dm1.data_mut()[ti * hid + j] += rv * dz1[j];
                            acc += m1.data()[ti * hid + j] * dz1[j];
                        }
                        // The rate was a mean over channels and space.
                        let g = acc / (c * plane) as f64;
                        let lo = (ti * b + bi) * c * plane;
                        for v in &mut d_src.data_mut()[lo..lo + c * plane] {
                            *v += g;
                        }
                    }
                }
            }
            (HeadParams::Spatial { m3, dm3 }, HeadCache::Spatial(sc)) => {
                let mut dz = Tensor::zeros(&[b, 1, h, w]);
                for ((d, g), zv) in dz.data_mut().iter_mut().zip(d_score.data()).zip(sc.z.data()) {
                    *d = g * relu_grad(*zv);
                }
                let mut db_scratch = Tensor::zeros(&[1]);
                let dm = conv3x3_backward(&sc.m, m3, &dz, dm3, &mut db_scratch);
                let scale = 1.0 / (t * c) as f64;
                for ti in 0..t {
                    for bi in 0..b {
                        let row = ti * b + bi;
                        for ci in 0..c {
                            let lo = (row * c + ci) * plane;
                            let src_g = &dm.data()[bi * plane..(bi + 1) * plane];
                            for (v, g) in d_src.data_mut()[lo..lo + plane].iter_mut().zip(src_g) {
                                *v += g * scale;
                            }
                        }
                    }
                }
            }
            _ => unreachable!("head params always match the kind"),
        }
        d_src
    }

    fn visit_params(&mut self, prefix: &str, f: &mut crate::nn::layers::ParamVisitor) {
        match &mut self.params {
            HeadParams::Temporal { m1, dm1, m2, dm2 } => {
                f(&format!("{prefix}.m1"), m1, dm1);
                f(&format!("{prefix}.m2"), m2, dm2);
            }
            HeadParams::Spatial { m3, dm3 } => {
                f(&format!("{prefix}.m3"), m3, dm3);
            }
        }
    }

    /// Zeroes the head's parameters (used by tests probing fixed points).
    fn zero_params(&mut self) {
        match &mut self.params {
            HeadParams::Temporal { m1, m2, .. } => {
                m1.fill(0.0);
                m2.fill(0.0);
            }
            HeadParams::Spatial { m3, .. } => m3.fill(0.0),
        }
    }
}

/// Multiplies features by a score of the given kind.
fn apply_score(kind: AttKind, score: &Tensor, x: &Tensor, t_steps: usize) -> Tensor {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let b = n / t_steps;
    let plane = h * w;
    let mut out = x.clone();
    match kind {
        AttKind::Temporal => {
            score.assert_shape(&[t_steps, b], "temporal score");
            for ti in 0..t_steps {
                for bi in 0..b {
                    let s = score.data()[ti * b + bi];
                    let lo = (ti * b + bi) * c * plane;
                    for v in &mut out.data_mut()[lo..lo + c * plane] {
                        *v *= s;
                    }
                }
            }
        }
        AttKind::Spatial => {
            score.assert_shape(&[b, h, w], "spatial score");
            for ti in 0..t_steps {
                for bi in 0..b {
                    let row = ti * b + bi;
                    let sc = &score.data()[bi * plane..(bi + 1) * plane];
                    for ci in 0..c {
                        let lo = (row * c + ci) * plane;
                        for (v, s) in out.data_mut()[lo..lo + plane].iter_mut().zip(sc) {
                            *v *= s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of [`apply_score`] with respect to the score:
/// `sum over the scaled axes of g * x`.
fn score_grad(kind: AttKind, g: &Tensor, x: &Tensor, t_steps: usize) -> Tensor {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let b = n / t_steps;
    let plane = h * w;
    match kind {
        AttKind::Temporal => {
            let mut d = Tensor::zeros(&[t_steps, b]);
            for ti in 0..t_steps {
                for bi in 0..b {
                    let lo = (ti * b + bi) * c * plane;
                    let acc: f64 = g.data()[lo..lo + c * plane]
                        .iter()
                        .zip(&x.data()[lo..lo + c * plane])
                        .map(|(a, b)| a * b)
                        .sum();
                    d.data_mut()[ti * b + bi] = acc;
                }
            }
            d
        }
        AttKind::Spatial => {
            let mut d = Tensor::zeros(&[b, h, w]);
            for ti in 0..t_steps {
                for bi in 0..b {
                    let row = ti * b + bi;
                    for ci in 0..c {
                        let lo = (row * c + ci) * plane;
                        let dd = &mut d.data_mut()[bi * plane..(bi + 1) * plane];
                        for ((v, a), xx) in
                            dd.iter_mut().zip(&g.data()[lo..lo + plane]).zip(&x.data()[lo..lo + plane])
                        {
                            *v += a * xx;
                        }
                    }
                }
            }
            d
        }
    }
}

struct CmaCache {
    s_e: Tensor,
    s_f: Tensor,
    score_from_events: Tensor,
    score_from_frames: Tensor,
}

/// The fusion module: two attention heads plus the modulated concatenation.
pub struct CmaModule {
    pub cfg: CmaConfig,
    pub t_steps: usize,
    event_head: AttentionHead,
    frame_head: AttentionHead,
    cache: Option<CmaCache>,
}

impl CmaModule {
    pub fn new(cfg: CmaConfig, t_steps: usize, rng: &mut ChaCha8Rng) -> Self {
        CmaModule {
            event_head: AttentionHead::new(cfg.event_att, &cfg, t_steps, rng),
            frame_head: AttentionHead::new(cfg.frame_att, &cfg, t_steps, rng),
            cfg,
            t_steps,
        cache: None,
        }
    }

    /// Fused features `[N, 2C, H, W]`: modulated events first, then
    /// modulated frames.
    pub fn forward(&mut self, s_e: &Tensor, s_f: &Tensor, train: bool) -> Tensor {
        self.forward_with_scores(s_e, s_f, train).0
    }

    /// Like [`CmaModule::forward`] but also returns the two scores: the one
    /// computed from events (applied to frames) and the one computed from
    /// frames (applied to events).
    pub fn forward_with_scores(
        &mut self,
        s_e: &Tensor,
        s_f: &Tensor,
        train: bool,
    ) -> (Tensor, Tensor, Tensor) {
        s_f.assert_shape(s_e.shape(), "fusion inputs");
        let t = self.t_steps;
        let score_from_events = self.event_head.compute(s_e, train);
        let score_from_frames = self.frame_head.compute(s_f, train);
        let fused_e = apply_score(self.cfg.frame_att, &score_from_frames, s_e, t);
        let fused_f = apply_score(self.cfg.event_att, &score_from_events, s_f, t);
        let out = concat_channels(&fused_e, &fused_f);
        if train {
            self.cache = Some(CmaCache {
                s_e: s_e.clone(),
                s_f: s_f.clone(),
                score_from_events: score_from_events.clone(),
                score_from_frames: score_from_frames.clone(),
            });
        }
        (out, score_from_events, score_from_frames)
    }

    /// Fusion with externally supplied scores, bypassing both heads. With
    /// all-ones scores this is exactly a channel concatenation.
    pub fn forward_overridden(
        &self,
        s_e: &Tensor,
        s_f: &Tensor,
        score_from_events: &Tensor,
        score_from_frames: &Tensor,
    ) -> Tensor {
        let fused_e = apply_score(self.cfg.frame_att, score_from_frames, s_e, self.t_steps);
        let fused_f = apply_score(self.cfg.event_att, score_from_events, s_f, self.t_steps);
        concat_channels(&fused_e, &fused_f)
    }

    /// Gradients with respect to both inputs.
    pub fn backward(&mut self, d_out: &Tensor) -> (Tensor, Tensor) {
        let cache = self.cache.take().expect("fusion backward without a training forward");
        let t = self.t_steps;
        let c = cache.s_e.shape()[1];
        let (g_e, g_f) = split_channels(d_out, c);

        // Direct product paths.
        let mut d_se = apply_score(self.cfg.frame_att, &cache.score_from_frames, &g_e, t);
        let mut d_sf = apply_score(self.cfg.event_att, &cache.score_from_events, &g_f, t);
        // Score paths, routed through each head back to its source.
        let d_score_frames = score_grad(self.cfg.frame_att, &g_e, &cache.s_e, t);
        let d_score_events = score_grad(self.cfg.event_att, &g_f, &cache.s_f, t);
        d_sf.add_scaled(&self.frame_head.backward(&d_score_frames, cache.s_f.shape()), 1.0);
        d_se.add_scaled(&self.event_head.backward(&d_score_events, cache.s_e.shape()), 1.0);
        (d_se, d_sf)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut crate::nn::layers::ParamVisitor) {
        self.event_head.visit_params(&format!("{prefix}.event"), f);
        self.frame_head.visit_params(&format!("{prefix}.frame"), f);
    }

    /// Zeroes all attention parameters (tests only).
    pub fn zero_params(&mut self) {
        self.event_head.zero_params();
        self.frame_head.zero_params();
    }
}
