//! Manual timing probe, ignored by default.
//!
//! Run with `cargo test --test timing_probe -- --ignored --nocapture` to
//! measure per-batch cost of the reference training configuration on the
//! current machine. Used to size the end-to-end runs; asserts nothing.

use rand::Rng;
use snn_core::neurons::{NeuronParams, SpikeMode};
use snn_core::nn::layers::Phase;
use snn_core::nn::model::{BaselineModel, FusionKind, FusionModel, FusionSpec, ModelSpec};
use snn_core::rng::rng_from;
use snn_core::tensor::Tensor;
use std::time::Instant;

fn randn(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = rng_from(seed, &[]);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    t
}

#[test]
#[ignore = "manual timing probe"]
fn batch_timings() {
    let spec = ModelSpec {
        in_channels: 2,
        height: 32,
        width: 32,
        t_steps: 10,
        n_classes: 4,
        conv_channels: vec![8, 16],
        fc_hidden: vec![128],
        neuron: NeuronParams::default(),
        mode: SpikeMode::Hard,
        dropout: 0.25,
        voting: 10,
    };
    let batch = 16;
    let n = spec.t_steps * batch;

    let mut model = BaselineModel::new(spec.clone(), &mut rng_from(1, &[]));
    let x = randn(&[n, 2, 32, 32], 2);
    let d = randn(&[n, spec.n_classes], 3);
    let mut rng = rng_from(4, &[]);
    // Warm up once, then time.
    let mut phase = Phase::Train(&mut rng);
    let _ = model.forward(&x, &mut phase);
    let _ = model.backward(&d);
    let reps = 5;
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = model.forward(&x, &mut phase);
        model.zero_grads();
        let _ = model.backward(&d);
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    println!("baseline 32x32 T=10 B=16 ch=[8,16] fc=[128]: {per:.3} s/batch (train)");

    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = model.forward(&x, &mut Phase::Eval);
    }
    let per_eval = t0.elapsed().as_secs_f64() / reps as f64;
    println!("  eval forward only: {per_eval:.3} s/batch");

    let fspec = FusionSpec {
        base: ModelSpec { n_classes: 8, ..spec.clone() },
        placement: 2,
        kind: FusionKind::Cma(Default::default()),
    };
    let mut fusion = FusionModel::new(fspec, &mut rng_from(5, &[]));
    let xe = randn(&[n, 2, 32, 32], 6);
    let xf = randn(&[n, 3, 32, 32], 7);
    let df = randn(&[n, 8], 8);
    let mut rng = rng_from(9, &[]);
    let mut phase = Phase::Train(&mut rng);
    let _ = fusion.forward(&xe, &xf, &mut phase);
    let _ = fusion.backward(&df);
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = fusion.forward(&xe, &xf, &mut phase);
        fusion.zero_grads();
        let _ = fusion.backward(&df);
    }
    let per_fusion = t0.elapsed().as_secs_f64() / reps as f64;
    println!("fusion CMA placement=2: {per_fusion:.3} s/batch (train)");
}
