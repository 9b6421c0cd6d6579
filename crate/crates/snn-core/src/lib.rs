//! Spiking neural networks over dual-modality (event camera + frame camera)
//! recordings.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: dense row-major `f64` tensors shared by every kernel.
//! * [`events`]: event-stream types, window accumulation, frame alignment,
//!   timing perturbations, a binary codec, and a synthetic dual-modality
//!   generator.
//! * [`neurons`]: spiking neuron step functions (LIF family) and the arctan
//!   surrogate gradient.
//! * [`nn`]: layer kernels with hand-written backward passes, the spiking
//!   encoder/decoder models, and a binary checkpoint container.
//! * [`cma`]: cross-modality attention fusion plus the early/middle/late
//!   fusion baselines.
//! * [`train`]: MSE-over-timesteps training with Adam, timing-perturbation
//!   evaluation protocols, and run reports.
//!
//! All randomness is drawn from explicitly seeded ChaCha streams ([`rng`]);
//! numerics are single-threaded, so results depend only on seeds and
//! configuration, never on thread count.

pub mod cma;
pub mod events;
pub mod neurons;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;
