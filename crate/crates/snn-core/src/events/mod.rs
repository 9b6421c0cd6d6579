//! Event-camera streams, frame sequences, and the preprocessing that turns
//! both into fixed-shape tensors.
//!
//! An [`EventStream`] is a time-sorted list of per-pixel polarity events; a
//! [`DualSample`] pairs one stream with the RGB frames recorded alongside it.
//! Preprocessing accumulates events into `T x 2 x H x W` count tensors
//! ([`rasterize`]), resamples frames onto the same time grid
//! ([`align_frames`]), and cuts random latency segments for training
//! ([`extract_segment`]).
//!
//! Two controlled perturbations probe how much of a model's performance
//! rests on event timing: [`confuse_timing`] permutes the timestamp multiset
//! across events while keeping every (x, y, polarity) triple, and
//! [`eliminate_time`] collapses a whole stream into a single accumulation
//! window.

use crate::rng;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

pub mod codec;
pub mod dataset;
pub mod synth;

/// Event polarity: the sign of the log-intensity change that produced the
/// event. Channel 0 of every accumulated tensor holds positive events,
/// channel 1 negative ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Pos => 1,
            Polarity::Neg => -1,
        }
    }

    pub fn channel(self) -> usize {
        match self {
            Polarity::Pos => 0,
            Polarity::Neg => 1,
        }
    }
}

/// A single camera event. Timestamps are microseconds from stream start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: Polarity,
}

/// Validation and I/O failures for event and frame data.
#[derive(Debug, Clone, PartialEq)]
pub enum EventError {
    UnsortedEvents { index: usize },
    OutOfBounds { index: usize, x: u16, y: u16, width: u16, height: u16 },
    PastDuration { index: usize, t: u64, duration_us: u64 },
    UnsortedFrames { index: usize },
    FramePastDuration { index: usize, t: u64, duration_us: u64 },
    PixelRange { index: usize, value: f64 },
    NoFrames,
    ZeroDuration,
    SegmentTooLong { t_lat_us: u64, duration_us: u64 },
}

impl fmt::Display for EventError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventError::UnsortedEvents { index } => {
                write!(f, "event {index} has a smaller timestamp than its predecessor")
            }
            EventError::OutOfBounds { index, x, y, width, height } => {
                write!(f, "event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")
            }
            EventError::PastDuration { index, t, duration_us } => {
                write!(f, "event {index} at t={t}us lies past the stream duration {duration_us}us")
            }
            EventError::UnsortedFrames { index } => {
                write!(f, "frame {index} has a smaller timestamp than its predecessor")
            }
            EventError::FramePastDuration { index, t, duration_us } => {
                write!(f, "frame {index} at t={t}us lies past the stream duration {duration_us}us")
            }
            EventError::PixelRange { index, value } => {
                write!(f, "frame {index} holds pixel value {value} outside [0, 1]")
            }
            EventError::NoFrames => write!(f, "no frames to align"),
            EventError::ZeroDuration => write!(f, "stream duration is zero"),
            EventError::SegmentTooLong { t_lat_us, duration_us } => {
                write!(f, "segment of {t_lat_us}us exceeds the sample duration {duration_us}us")
            }
        }
    }
}

impl std::error::Error for EventError {}

/// Time-sorted event recording with a fixed sensor resolution.
///
/// Construction validates the invariants every consumer relies on:
/// timestamps are non-decreasing and at most `duration_us`, and all
/// coordinates lie inside the sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    width: u16,
    height: u16,
    duration_us: u64,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(
        width: u16,
        height: u16,
        duration_us: u64,
        events: Vec<Event>,
    ) -> Result<Self, EventError> {
        if duration_us == 0 {
            return Err(EventError::ZeroDuration);
        }
        let mut prev_t = 0u64;
        for (index, e) in events.iter().enumerate() {
            if e.t < prev_t {
                return Err(EventError::UnsortedEvents { index });
            }
            prev_t = e.t;
            if e.x >= width || e.y >= height {
                return Err(EventError::OutOfBounds { index, x: e.x, y: e.y, width, height });
            }
            if e.t > duration_us {
                return Err(EventError::PastDuration { index, t: e.t, duration_us });
            }
        }
        Ok(EventStream { width, height, duration_us, events })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn duration_us(&self) -> u64 {
        self.duration_us
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Events accumulated on a `T x 2 x H x W` grid of per-window counts.
#[derive(Clone, Debug, PartialEq)]
pub struct EventTensor {
    pub data: Tensor,
    pub t0_us: u64,
    pub dt_us: u64,
}

/// One RGB frame with pixels in `[0, 1]`, shaped `3 x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameImage {
    pixels: Tensor,
    t_us: u64,
}

impl FrameImage {
    pub fn new(pixels: Tensor, t_us: u64) -> Result<Self, EventError> {
        assert_eq!(pixels.shape().len(), 3, "frame pixels must be 3 x H x W");
        assert_eq!(pixels.shape()[0], 3, "frame pixels must have 3 channels");
        if let Some(bad) = pixels.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(EventError::PixelRange { index: bad, value: pixels.data()[bad] });
        }
        Ok(FrameImage { pixels, t_us })
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn t_us(&self) -> u64 {
        self.t_us
    }

    fn with_time(&self, t_us: u64) -> FrameImage {
        FrameImage { pixels: self.pixels.clone(), t_us }
    }
}

/// Frames resampled onto an accumulation-window grid, `T x 3 x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTensor {
    pub data: Tensor,
    pub t0_us: u64,
    pub dt_us: u64,
}

/// Recording illumination tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Light {
    Dim,
    Bright,
    Natural,
}

impl Light {
    pub const ALL: [Light; 3] = [Light::Dim, Light::Bright, Light::Natural];

    pub fn name(self) -> &'static str {
        match self {
            Light::Dim => "dim",
            Light::Bright => "bright",
            Light::Natural => "natural",
        }
    }

    pub fn from_name(name: &str) -> Option<Light> {
        Light::ALL.into_iter().find(|l| l.name() == name)
    }
}

/// Camera placement tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CameraPosition {
    Front,
    Back,
}

impl CameraPosition {
    pub const ALL: [CameraPosition; 2] = [CameraPosition::Front, CameraPosition::Back];

    pub fn name(self) -> &'static str {
        match self {
            CameraPosition::Front => "front",
            CameraPosition::Back => "back",
        }
    }

    pub fn from_name(name: &str) -> Option<CameraPosition> {
        CameraPosition::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Recording-condition tags carried by every sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub light: Light,
    pub position: CameraPosition,
    pub subject: u32,
}

/// One labeled dual-modality sample: an event stream plus the frames
/// captured over the same interval.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSample {
    pub events: EventStream,
    pub frames: Vec<FrameImage>,
    pub label: usize,
    pub scenario: Scenario,
}

impl DualSample {
    pub fn new(
        events: EventStream,
        frames: Vec<FrameImage>,
        label: usize,
        scenario: Scenario,
    ) -> Result<Self, EventError> {
        let duration_us = events.duration_us();
        let mut prev_t = 0u64;
        for (index, fr) in frames.iter().enumerate() {
            if index > 0 && fr.t_us < prev_t {
                return Err(EventError::UnsortedFrames { index });
            }
            prev_t = fr.t_us;
            if fr.t_us > duration_us {
                return Err(EventError::FramePastDuration { index, t: fr.t_us, duration_us });
            }
        }
        Ok(DualSample { events, frames, label, scenario })
    }
}

/// Counts events with `t0 <= t < t0 + dt` into a `2 x H x W` tensor,
/// positive polarity in channel 0. A window outside the recorded range is
/// all zeros, not an error.
pub fn accumulate_window(stream: &EventStream, t0_us: u64, dt_us: u64) -> Tensor {
    let h = stream.height as usize;
    let w = stream.width as usize;
    let mut out = Tensor::zeros(&[2, h, w]);
    if dt_us == 0 {
        return out;
    }
    let end = t0_us.saturating_add(dt_us);
    let start = stream.events.partition_point(|e| e.t < t0_us);
    let data = out.data_mut();
    for e in &stream.events[start..] {
        if e.t >= end {
            break;
        }
        data[e.p.channel() * h * w + e.y as usize * w + e.x as usize] += 1.0;
    }
    out
}

/// Accumulates `t_steps` consecutive windows of `dt_us` starting at `t0_us`
/// into a `T x 2 x H x W` count tensor.
pub fn rasterize(stream: &EventStream, t0_us: u64, dt_us: u64, t_steps: usize) -> EventTensor {
    assert!(t_steps >= 1, "rasterize needs at least one window");
    assert!(dt_us > 0, "rasterize needs a positive window length");
    let h = stream.height as usize;
    let w = stream.width as usize;
    let plane = h * w;
    let mut data = Tensor::zeros(&[t_steps, 2, h, w]);
    let end = t0_us.saturating_add(dt_us.saturating_mul(t_steps as u64));
    let start = stream.events.partition_point(|e| e.t < t0_us);
    let out = data.data_mut();
    for e in &stream.events[start..] {
        if e.t >= end {
            break;
        }
        let window = ((e.t - t0_us) / dt_us) as usize;
        out[(window * 2 + e.p.channel()) * plane + e.y as usize * w + e.x as usize] += 1.0;
    }
    EventTensor { data, t0_us, dt_us }
}

/// Resamples frames onto the accumulation-window grid.
///
/// Window `t` spans `[t0 + t*dt, t0 + (t+1)*dt)`. The slice for a window is,
/// in order of precedence:
///
/// 1. the latest frame inside the window,
/// 2. otherwise the latest frame at or before the window's end,
/// 3. otherwise (every frame is later) the earliest frame.
///
/// Rule 2 repeats the previous selection through frame-free windows and lets
/// a frame timestamped exactly at a window boundary serve the window it
/// closes when that window saw no frame of its own.
pub fn align_frames(
    frames: &[FrameImage],
    t0_us: u64,
    dt_us: u64,
    t_steps: usize,
) -> Result<FrameTensor, EventError> {
    if frames.is_empty() {
        return Err(EventError::NoFrames);
    }
    assert!(t_steps >= 1, "align_frames needs at least one window");
    assert!(dt_us > 0, "align_frames needs a positive window length");
    debug_assert!(frames.windows(2).all(|p| p[0].t_us <= p[1].t_us), "frames must be sorted");

    let shape = frames[0].pixels.shape();
    let (h, w) = (shape[1], shape[2]);
    let plane = 3 * h * w;
    let mut data = Tensor::zeros(&[t_steps, 3, h, w]);
    let out = data.data_mut();
    for t in 0..t_steps {
        let start = t0_us + dt_us * t as u64;
        let end = start + dt_us;
        // Latest frame with t_us < end; `in_window` tells rules 1 and 2 apart.
        let before_end = frames.partition_point(|f| f.t_us < end);
        let at_or_before_end = frames.partition_point(|f| f.t_us <= end);
        let pick = if before_end > 0 && frames[before_end - 1].t_us >= start {
            before_end - 1
        } else if at_or_before_end > 0 {
            at_or_before_end - 1
        } else {
            0
        };
        out[t * plane..(t + 1) * plane].copy_from_slice(frames[pick].pixels.data());
    }
    Ok(FrameTensor { data, t0_us, dt_us })
}

/// Cuts a random `t_lat_us` segment out of a sample and rebases all
/// timestamps so the segment starts at zero.
///
/// The start is uniform over `[0, duration - t_lat]`; with a fixed RNG the
/// cut is fully deterministic. Events keep only those inside
/// `[start, start + t_lat)`. Frames keep those inside
/// `[start, start + t_lat]`; when the segment starts between two captures,
/// the frame on display at the cut point (the latest one before the start)
/// is carried in at timestamp zero so alignment still sees it.
pub fn extract_segment(
    sample: &DualSample,
    t_lat_us: u64,
    rng: &mut ChaCha8Rng,
) -> Result<DualSample, EventError> {
    let duration = sample.events.duration_us();
    if t_lat_us > duration {
        return Err(EventError::SegmentTooLong { t_lat_us, duration_us: duration });
    }
    let start = rng.gen_range(0..=duration - t_lat_us);
    segment_at(sample, start, t_lat_us)
}

/// Deterministic variant of [`extract_segment`]: the segment centered in the
/// recording, used for evaluation.
pub fn centered_segment(sample: &DualSample, t_lat_us: u64) -> Result<DualSample, EventError> {
    let duration = sample.events.duration_us();
    if t_lat_us > duration {
        return Err(EventError::SegmentTooLong { t_lat_us, duration_us: duration });
    }
    segment_at(sample, (duration - t_lat_us) / 2, t_lat_us)
}

fn segment_at(sample: &DualSample, start: u64, t_lat_us: u64) -> Result<DualSample, EventError> {
    let end = start + t_lat_us;
    let events: Vec<Event> = sample
        .events
        .events()
        .iter()
        .filter(|e| e.t >= start && e.t < end)
        .map(|e| Event { t: e.t - start, ..*e })
        .collect();
    let stream = EventStream::new(sample.events.width(), sample.events.height(), t_lat_us, events)
        .expect("segment of a valid stream is valid");

    let mut frames: Vec<FrameImage> = Vec::new();
    let first_inside = sample.frames.partition_point(|f| f.t_us < start);
    let carry_in = sample.frames[..first_inside].last();
    let needs_carry = match sample.frames.get(first_inside) {
        Some(f) => f.t_us > start,
        None => true,
    };
    if needs_carry {
        if let Some(prev) = carry_in {
            frames.push(prev.with_time(0));
        }
    }
    for f in &sample.frames[first_inside..] {
        if f.t_us > end {
            break;
        }
        frames.push(f.with_time(f.t_us - start));
    }
    if frames.is_empty() {
        // Every frame lies past the segment; keep the earliest so alignment
        // has its fallback frame.
        if let Some(first) = sample.frames.first() {
            frames.push(first.with_time(0));
        }
    }
    DualSample::new(stream, frames, sample.label, sample.scenario)
}

/// Destroys event timing while keeping spatial structure: the timestamp
/// multiset is randomly permuted across events (each keeps its
/// (x, y, polarity)), then the stream is re-sorted by time.
pub fn confuse_timing(stream: &EventStream, rng: &mut ChaCha8Rng) -> EventStream {
    let mut times: Vec<u64> = stream.events.iter().map(|e| e.t).collect();
    // Fisher-Yates over the timestamp multiset.
    for i in (1..times.len()).rev() {
        let j = rng.gen_range(0..=i);
        times.swap(i, j);
    }
    let mut events: Vec<Event> = stream
        .events
        .iter()
        .zip(times)
        .map(|(e, t)| Event { t, ..*e })
        .collect();
    events.sort_by_key(|e| e.t);
    EventStream::new(stream.width, stream.height, stream.duration_us, events)
        .expect("permuting timestamps of a valid stream keeps it valid")
}

/// Collapses the whole stream into one accumulation window: a `1 x 2 x H x W`
/// tensor whose counts sum to the event count. Retraining on these tensors
/// measures how much of a task survives without any temporal structure.
pub fn eliminate_time(stream: &EventStream) -> EventTensor {
    // Events may sit exactly at `duration`; one extra microsecond keeps the
    // single window a superset of every tiling of `[0, duration)`.
    let dt = stream.duration_us.saturating_add(1);
    rasterize(stream, 0, dt, 1)
}

/// Mean event rate in thousands of events per second. The constructor
/// guarantees a positive duration, so the rate is always finite.
pub fn event_frequency(stream: &EventStream) -> f64 {
    let seconds = stream.duration_us as f64 / 1e6;
    stream.events.len() as f64 / seconds / 1e3
}

/// Derives the per-sample RNG used when [`confuse_timing`] is applied across
/// a whole evaluation set.
pub fn confusion_rng(base_seed: u64, sample_index: usize) -> ChaCha8Rng {
    rng::rng_from(base_seed, &[rng::stream::CONFUSE, sample_index as u64])
}
