//! Central finite-difference gradient checking for randomized small models.
//!
//! The numeric route perturbs one parameter at a time and re-evaluates the
//! full loss through the public forward path, so it shares nothing with the
//! hand-derived backward pass it verifies.

use ndarray::Array4;
use quanvis::nn::{
    loss, LayerParams, LayerSpec, ModelSpec, Padding, Tensor4, TrainedModel,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;

pub struct TrialReport {
    pub spec: ModelSpec,
    pub checked: usize,
    pub max_rel_err: f64,
}

/// A randomized stack exercising every layer type.
pub fn random_spec(rng: &mut ChaCha8Rng, trial: u64) -> ModelSpec {
    let input = if rng.random::<bool>() { (5, 5, 2) } else { (6, 6, 1) };
    let kernel = rng.random_range(2..=3usize);
    let padding = if rng.random::<bool>() {
        Padding::Valid
    } else {
        Padding::Same
    };
    let dropout = [0.0, 0.25, 0.5][rng.random_range(0..3usize)];
    ModelSpec {
        input_shape: input,
        layers: vec![
            LayerSpec::Conv2D {
                filters: rng.random_range(1..=3usize),
                kernel,
                stride: 1,
                padding,
            },
            LayerSpec::MaxPool2D { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: rng.random_range(3..=6usize),
            },
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ],
        rng_seed: trial,
    }
}

/// Compare analytic and numeric gradients for one random trial.
pub fn check_trial(trial: u64) -> TrialReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD0_0000 + trial);
    let spec = random_spec(&mut rng, trial);
    let batch_len = rng.random_range(1..=3usize);
    let (h, w, c) = spec.input_shape;
    let batch: Tensor4 =
        Array4::from_shape_fn((batch_len, h, w, c), |_| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..batch_len).map(|_| rng.random_range(0..2usize)).collect();
    let class_weights = if rng.random::<bool>() {
        Some([1.0, 1.8])
    } else {
        None
    };
    let dropout_seed = trial.wrapping_mul(31) + 5;

    let mut model = TrainedModel::init(&spec).expect("valid spec");
    let analytic = model
        .backward(&batch, &labels, class_weights.as_ref(), dropout_seed)
        .expect("backward")
        .grads;

    let mut checked = 0usize;
    let mut max_rel_err = 0.0f64;
    for layer_idx in 0..model.params.len() {
        for slot in 0..param_len(&model.params[layer_idx]) {
            let a = read_param(&analytic[layer_idx], slot);
            let base = read_param(&model.params[layer_idx], slot);

            write_param(&mut model.params[layer_idx], slot, base + FD_STEP);
            let plus = loss_of(&model, &batch, &labels, class_weights.as_ref(), dropout_seed);
            write_param(&mut model.params[layer_idx], slot, base - FD_STEP);
            let minus = loss_of(&model, &batch, &labels, class_weights.as_ref(), dropout_seed);
            write_param(&mut model.params[layer_idx], slot, base);

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let scale = a.abs().max(numeric.abs());
            if scale < 1e-8 {
                continue; // both vanish; absolute agreement
            }
            let rel = (a - numeric).abs() / scale.max(1e-6);
            max_rel_err = max_rel_err.max(rel);
            checked += 1;
        }
    }
    TrialReport {
        spec,
        checked,
        max_rel_err,
    }
}

fn loss_of(
    model: &TrainedModel,
    batch: &Tensor4,
    labels: &[usize],
    class_weights: Option<&[f64; 2]>,
    dropout_seed: u64,
) -> f64 {
    let probs = model.forward(batch, true, dropout_seed).expect("forward");
    loss(&probs, labels, class_weights).expect("loss")
}

fn param_len(p: &LayerParams) -> usize {
    match p {
        LayerParams::Conv { kernel, bias } => kernel.len() + bias.len(),
        LayerParams::Dense { weights, bias } => weights.len() + bias.len(),
        LayerParams::None => 0,
    }
}

fn read_param(p: &LayerParams, slot: usize) -> f64 {
    match p {
        LayerParams::Conv { kernel, bias } => {
            if slot < kernel.len() {
                kernel.as_slice().unwrap()[slot]
            } else {
                bias[slot - kernel.len()]
            }
        }
        LayerParams::Dense { weights, bias } => {
            if slot < weights.len() {
                weights.as_slice().unwrap()[slot]
            } else {
                bias[slot - weights.len()]
            }
        }
        LayerParams::None => unreachable!(),
    }
}

fn write_param(p: &mut LayerParams, slot: usize, value: f64) {
    match p {
        LayerParams::Conv { kernel, bias } => {
            if slot < kernel.len() {
                kernel.as_slice_mut().unwrap()[slot] = value;
            } else {
                let at = slot - kernel.len();
                bias[at] = value;
            }
        }
        LayerParams::Dense { weights, bias } => {
            if slot < weights.len() {
                weights.as_slice_mut().unwrap()[slot] = value;
            } else {
                let at = slot - weights.len();
                bias[at] = value;
            }
        }
        LayerParams::None => unreachable!(),
    }
}
