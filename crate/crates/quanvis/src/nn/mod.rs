//! Minimal trainable feed-forward stack: 2D convolution, max pooling,
//! flatten, dense, dropout, and softmax with sparse categorical
//! cross-entropy, class-weighted loss, and Adam.
//!
//! Gradients are derived by hand and checked against central finite
//! differences in the test suite. Everything is float64, seeded, and
//! single-threaded, so a fixed seed reproduces a training run bit for bit.

mod adam;
mod io;
mod layers;

pub use adam::{adam_step, AdamState};
pub use io::{load_model, metrics_to_text, parse_metrics, save_model, write_metrics};
pub use layers::conv_geometry;

use ndarray::{Array1, Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor inside the loss so confident mispredictions cannot
/// produce log(0).
pub const PROB_FLOOR: f64 = 1e-12;

/// Batched activations: `(batch, height, width, channels)`.
pub type Tensor4 = Array4<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

/// One layer of a model stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2D {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    MaxPool2D {
        size: usize,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Dropout {
        rate: f64,
    },
    Softmax,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::MaxPool2D { .. } => "max_pooling2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }
}

/// Activation shape between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Spatial(usize, usize, usize),
    Flat(usize),
}

/// Ordered layer stack plus input shape and the seed for weight init.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    pub rng_seed: u64,
}

impl ModelSpec {
    /// Shape entering each layer plus the final output shape
    /// (`layers.len() + 1` entries). Errors when consecutive shapes do not
    /// compose.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config(format!(
                "input shape {:?} has a zero dimension",
                self.input_shape
            )));
        }
        let mut shapes = vec![Shape::Spatial(h, w, c)];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let mismatch = |expected: &str| {
                Error::Config(format!(
                    "layer {i} ({}) expects {expected} input, has {cur:?}",
                    layer.name()
                ))
            };
            let next = match *layer {
                LayerSpec::Conv2D {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    let Shape::Spatial(h, w, _) = cur else {
                        return Err(mismatch("spatial"));
                    };
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::Config(format!(
                            "layer {i} (conv2d) has zero-sized filters, kernel, or stride"
                        )));
                    }
                    if padding == Padding::Valid && (h < kernel || w < kernel) {
                        return Err(Error::Config(format!(
                            "layer {i} (conv2d) kernel {kernel} exceeds {h}×{w} input"
                        )));
                    }
                    let (oh, ow, _, _) = conv_geometry(h, w, kernel, kernel, stride, padding);
                    Shape::Spatial(oh, ow, filters)
                }
                LayerSpec::MaxPool2D { size } => {
                    let Shape::Spatial(h, w, c) = cur else {
                        return Err(mismatch("spatial"));
                    };
                    if size == 0 || h < size || w < size {
                        return Err(Error::Config(format!(
                            "layer {i} (max_pooling2d) window {size} exceeds {h}×{w} input"
                        )));
                    }
                    Shape::Spatial((h - size) / size + 1, (w - size) / size + 1, c)
                }
                LayerSpec::Flatten => {
                    let Shape::Spatial(h, w, c) = cur else {
                        return Err(mismatch("spatial"));
                    };
                    Shape::Flat(h * w * c)
                }
                LayerSpec::Dense { units } => {
                    let Shape::Flat(_) = cur else {
                        return Err(mismatch("flat"));
                    };
                    if units == 0 {
                        return Err(Error::Config(format!("layer {i} (dense) has zero units")));
                    }
                    Shape::Flat(units)
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::Config(format!(
                            "layer {i} (dropout) rate {rate} outside [0, 1)"
                        )));
                    }
                    cur
                }
                LayerSpec::Softmax => {
                    let Shape::Flat(_) = cur else {
                        return Err(mismatch("flat"));
                    };
                    cur
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// A classifier spec must end in Softmax over exactly two classes.
    pub fn validate(&self) -> Result<()> {
        let shapes = self.shapes()?;
        if !matches!(self.layers.last(), Some(LayerSpec::Softmax)) {
            return Err(Error::Config("model must end with a softmax layer".into()));
        }
        if *shapes.last().unwrap() != Shape::Flat(2) {
            return Err(Error::Config(format!(
                "final layer width must be 2 classes, got {:?}",
                shapes.last().unwrap()
            )));
        }
        Ok(())
    }

    /// Trainable parameter counts per layer and in total:
    /// `filters·(kernel²·in_channels + 1)` for convolutions,
    /// `units·(in + 1)` for dense layers, zero elsewhere.
    pub fn count_parameters(&self) -> Result<ParamCount> {
        let shapes = self.shapes()?;
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut total = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            let count = match (*layer, shapes[i]) {
                (LayerSpec::Conv2D { filters, kernel, .. }, Shape::Spatial(_, _, c)) => {
                    filters * (kernel * kernel * c + 1)
                }
                (LayerSpec::Dense { units }, Shape::Flat(input)) => units * (input + 1),
                _ => 0,
            };
            per_layer.push((layer.name().to_string(), count));
            total += count;
        }
        Ok(ParamCount { per_layer, total })
    }

    /// Width of the first flatten output, if the stack has one.
    pub fn flatten_width(&self) -> Result<Option<usize>> {
        let shapes = self.shapes()?;
        for (layer, shape) in self.layers.iter().zip(shapes.into_iter().skip(1)) {
            if matches!(layer, LayerSpec::Flatten) {
                let Shape::Flat(n) = shape else { unreachable!() };
                return Ok(Some(n));
            }
        }
        Ok(None)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCount {
    pub per_layer: Vec<(String, usize)>,
    pub total: usize,
}

/// Per-layer trainable parameters (or their gradients / Adam moments).
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv {
        kernel: Array4<f64>,
        bias: Array1<f64>,
    },
    Dense {
        weights: Array2<f64>,
        bias: Array1<f64>,
    },
    None,
}

impl LayerParams {
    pub fn count(&self) -> usize {
        match self {
            LayerParams::Conv { kernel, bias } => kernel.len() + bias.len(),
            LayerParams::Dense { weights, bias } => weights.len() + bias.len(),
            LayerParams::None => 0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            LayerParams::Conv { kernel, bias } => LayerParams::Conv {
                kernel: Array4::zeros(kernel.dim()),
                bias: Array1::zeros(bias.len()),
            },
            LayerParams::Dense { weights, bias } => LayerParams::Dense {
                weights: Array2::zeros(weights.dim()),
                bias: Array1::zeros(bias.len()),
            },
            LayerParams::None => LayerParams::None,
        }
    }
}

/// A model spec with its learned parameters and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: Vec<LayerParams>,
    pub adam: AdamState,
}

impl TrainedModel {
    /// He-uniform initialization (limit √(6/fan_in)), biases zero, drawn in
    /// layer order from a ChaCha8 generator seeded with `spec.rng_seed`.
    pub fn init(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let mut params = Vec::with_capacity(spec.layers.len());
        for (layer, shape) in spec.layers.iter().zip(&shapes) {
            params.push(match (*layer, *shape) {
                (LayerSpec::Conv2D { filters, kernel, .. }, Shape::Spatial(_, _, c)) => {
                    let fan_in = (kernel * kernel * c) as f64;
                    let limit = (6.0 / fan_in).sqrt();
                    LayerParams::Conv {
                        kernel: Array4::from_shape_fn((kernel, kernel, c, filters), |_| {
                            rng.random_range(-limit..limit)
                        }),
                        bias: Array1::zeros(filters),
                    }
                }
                (LayerSpec::Dense { units }, Shape::Flat(input)) => {
                    let limit = (6.0 / input as f64).sqrt();
                    LayerParams::Dense {
                        weights: Array2::from_shape_fn((input, units), |_| {
                            rng.random_range(-limit..limit)
                        }),
                        bias: Array1::zeros(units),
                    }
                }
                _ => LayerParams::None,
            });
        }
        let adam = AdamState::zeros_like(&params);
        let model = Self {
            spec: spec.clone(),
            params,
            adam,
        };
        debug_assert_eq!(
            model.params.iter().map(LayerParams::count).sum::<usize>(),
            spec.count_parameters()?.total,
            "allocated parameters must match the analytic count"
        );
        Ok(model)
    }

    /// Class probabilities for a batch, `(batch, 2)` rows summing to 1.
    /// Dropout is active only when `training`; its masks derive from
    /// `dropout_seed`, so a fixed seed gives a fixed mask.
    pub fn forward(&self, batch: &Tensor4, training: bool, dropout_seed: u64) -> Result<Array2<f64>> {
        let (probs, _) = self.run(batch, training, dropout_seed, false)?;
        Ok(probs)
    }

    /// Exact analytic gradients of the class-weighted loss for every
    /// parameter, along with the batch probabilities and loss.
    pub fn backward(
        &self,
        batch: &Tensor4,
        labels: &[usize],
        class_weights: Option<&[f64; 2]>,
        dropout_seed: u64,
    ) -> Result<BackwardOutcome> {
        let (probs, trace) = self.run(batch, true, dropout_seed, true)?;
        let trace = trace.expect("trace requested");
        let batch_len = probs.nrows();
        check_labels(labels, batch_len)?;
        let loss_value = loss(&probs, labels, class_weights)?;

        // Fused softmax + cross-entropy gradient at the logits:
        // w_y · (p − onehot_y) / B per row.
        let mut dlogits = probs.clone();
        for (row, &label) in labels.iter().enumerate() {
            let w = class_weights.map_or(1.0, |cw| cw[label]);
            dlogits[(row, label)] -= 1.0;
            for v in dlogits.row_mut(row) {
                *v *= w / batch_len as f64;
            }
        }

        let mut grads = vec![LayerParams::None; self.spec.layers.len()];
        let mut dact = Act::T2(dlogits);
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            match (layer, &trace[i]) {
                (LayerSpec::Softmax, _) => {} // folded into dlogits
                (LayerSpec::Dense { .. }, Cache::Dense { input }) => {
                    let LayerParams::Dense { weights, .. } = &self.params[i] else {
                        unreachable!()
                    };
                    let d = dact.as_t2();
                    let (dw, db, dx) = layers::dense_backward(input, weights, d);
                    grads[i] = LayerParams::Dense {
                        weights: dw,
                        bias: db,
                    };
                    dact = Act::T2(dx);
                }
                (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => {
                    dact.scale_by(mask);
                }
                (LayerSpec::Flatten, Cache::Flatten { input_dim }) => {
                    dact = Act::T4(unflatten(dact.into_t2(), *input_dim));
                }
                (LayerSpec::MaxPool2D { .. }, Cache::Pool { input_dim, argmax }) => {
                    dact = Act::T4(layers::maxpool_backward(dact.as_t4(), argmax, *input_dim));
                }
                (LayerSpec::Conv2D { stride, padding, .. }, Cache::Conv { input }) => {
                    let LayerParams::Conv { kernel, .. } = &self.params[i] else {
                        unreachable!()
                    };
                    let (dk, db, dx) =
                        layers::conv_backward(input, kernel, *stride, *padding, dact.as_t4());
                    grads[i] = LayerParams::Conv {
                        kernel: dk,
                        bias: db,
                    };
                    dact = Act::T4(dx);
                }
                _ => unreachable!("cache out of sync with layer list"),
            }
        }

        Ok(BackwardOutcome {
            grads,
            probs,
            loss: loss_value,
        })
    }

    fn run(
        &self,
        batch: &Tensor4,
        training: bool,
        dropout_seed: u64,
        want_trace: bool,
    ) -> Result<(Array2<f64>, Option<Vec<Cache>>)> {
        let (b, h, w, c) = batch.dim();
        if (h, w, c) != self.spec.input_shape || b == 0 {
            return Err(Error::Structural(format!(
                "batch shape ({b}, {h}, {w}, {c}) does not match input shape {:?}",
                self.spec.input_shape
            )));
        }
        if !batch.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite values in input batch".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let mut trace = want_trace.then(Vec::new);
        let mut act = Act::T4(batch.clone());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let mut cache = Cache::Passthrough;
            act = match *layer {
                LayerSpec::Conv2D { stride, padding, .. } => {
                    let LayerParams::Conv { kernel, bias } = &self.params[i] else {
                        unreachable!()
                    };
                    let input = act.into_t4();
                    let out = layers::conv_forward(&input, kernel, bias, stride, padding);
                    if want_trace {
                        cache = Cache::Conv { input };
                    }
                    Act::T4(out)
                }
                LayerSpec::MaxPool2D { size } => {
                    let input = act.into_t4();
                    let (out, argmax) = layers::maxpool_forward(&input, size);
                    if want_trace {
                        cache = Cache::Pool {
                            input_dim: input.dim(),
                            argmax,
                        };
                    }
                    Act::T4(out)
                }
                LayerSpec::Flatten => {
                    let input = act.into_t4();
                    let dim = input.dim();
                    if want_trace {
                        cache = Cache::Flatten { input_dim: dim };
                    }
                    Act::T2(flatten(input))
                }
                LayerSpec::Dense { .. } => {
                    let LayerParams::Dense { weights, bias } = &self.params[i] else {
                        unreachable!()
                    };
                    let input = act.into_t2();
                    let out = layers::dense_forward(&input, weights, bias);
                    if want_trace {
                        cache = Cache::Dense { input };
                    }
                    Act::T2(out)
                }
                LayerSpec::Dropout { rate } => {
                    if training && rate > 0.0 {
                        let mask = layers::dropout_mask(act.len(), rate, &mut rng);
                        act.scale_by(&mask);
                        if want_trace {
                            cache = Cache::Dropout { mask };
                        }
                    } else if want_trace {
                        cache = Cache::Dropout {
                            mask: vec![1.0; act.len()],
                        };
                    }
                    act
                }
                LayerSpec::Softmax => Act::T2(layers::softmax_forward(&act.into_t2())),
            };
            if !act.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite activation after layer {i} ({})",
                    layer.name()
                )));
            }
            if let Some(t) = trace.as_mut() {
                t.push(cache);
            }
        }
        Ok((act.into_t2(), trace))
    }
}

pub struct BackwardOutcome {
    pub grads: Vec<LayerParams>,
    pub probs: Array2<f64>,
    pub loss: f64,
}

/// Sparse categorical cross-entropy, optionally class-weighted:
/// mean over the batch of `−w_y · ln(max(p_y, 1e-12))`.
pub fn loss(probs: &Array2<f64>, labels: &[usize], class_weights: Option<&[f64; 2]>) -> Result<f64> {
    if probs.nrows() != labels.len() {
        return Err(Error::Structural(format!(
            "{} probability rows for {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    check_labels(labels, labels.len())?;
    let mut sum = 0.0;
    for (row, &label) in labels.iter().enumerate() {
        let w = class_weights.map_or(1.0, |cw| cw[label]);
        sum += -w * probs[(row, label)].max(PROB_FLOOR).ln();
    }
    Ok(sum / labels.len() as f64)
}

fn check_labels(labels: &[usize], expected_len: usize) -> Result<()> {
    if labels.len() != expected_len {
        return Err(Error::Structural(format!(
            "expected {expected_len} labels, got {}",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Input(format!("label {bad} is not a binary class id")));
    }
    Ok(())
}

enum Act {
    T4(Array4<f64>),
    T2(Array2<f64>),
}

impl Act {
    fn len(&self) -> usize {
        match self {
            Act::T4(a) => a.len(),
            Act::T2(a) => a.len(),
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            Act::T4(a) => a.iter().all(|v| v.is_finite()),
            Act::T2(a) => a.iter().all(|v| v.is_finite()),
        }
    }

    fn scale_by(&mut self, mask: &[f64]) {
        let slice = match self {
            Act::T4(a) => a.as_slice_mut().unwrap(),
            Act::T2(a) => a.as_slice_mut().unwrap(),
        };
        for (v, &m) in slice.iter_mut().zip(mask) {
            *v *= m;
        }
    }

    fn into_t4(self) -> Array4<f64> {
        match self {
            Act::T4(a) => a,
            Act::T2(_) => unreachable!("spatial activation expected"),
        }
    }

    fn into_t2(self) -> Array2<f64> {
        match self {
            Act::T2(a) => a,
            Act::T4(_) => unreachable!("flat activation expected"),
        }
    }

    fn as_t4(&self) -> &Array4<f64> {
        match self {
            Act::T4(a) => a,
            Act::T2(_) => unreachable!("spatial activation expected"),
        }
    }

    fn as_t2(&self) -> &Array2<f64> {
        match self {
            Act::T2(a) => a,
            Act::T4(_) => unreachable!("flat activation expected"),
        }
    }
}

enum Cache {
    Passthrough,
    Conv { input: Array4<f64> },
    Pool {
        input_dim: (usize, usize, usize, usize),
        argmax: Vec<u32>,
    },
    Flatten {
        input_dim: (usize, usize, usize, usize),
    },
    Dense { input: Array2<f64> },
    Dropout { mask: Vec<f64> },
}

fn flatten(a: Array4<f64>) -> Array2<f64> {
    let (b, h, w, c) = a.dim();
    let (vec, _) = a.into_raw_vec_and_offset();
    Array2::from_shape_vec((b, h * w * c), vec).expect("standard layout")
}

fn unflatten(a: Array2<f64>, dim: (usize, usize, usize, usize)) -> Array4<f64> {
    let (vec, _) = a.into_raw_vec_and_offset();
    Array4::from_shape_vec(dim, vec).expect("standard layout")
}

/// Optimizer and schedule settings. Defaults follow the usual Adam
/// constants; batch size and seed are experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Per-class loss multipliers `[w_negative, w_positive]`; computed from
    /// the training split, not read from config files.
    #[serde(skip)]
    pub class_weights: Option<[f64; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < beta && beta < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Labeled example set; all examples share one `(h, w, c)` shape.
#[derive(Clone, Debug)]
pub struct Dataset {
    examples: Vec<Array3<f64>>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(examples: Vec<Array3<f64>>, labels: Vec<usize>) -> Result<Self> {
        if examples.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} examples with {} labels",
                examples.len(),
                labels.len()
            )));
        }
        if examples.is_empty() {
            return Err(Error::Input("empty dataset".into()));
        }
        let shape = examples[0].dim();
        if let Some(odd) = examples.iter().find(|e| e.dim() != shape) {
            return Err(Error::Input(format!(
                "inconsistent example shapes: {:?} vs {:?}",
                shape,
                odd.dim()
            )));
        }
        check_labels(&labels, labels.len())?;
        Ok(Self { examples, labels })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn example_shape(&self) -> (usize, usize, usize) {
        self.examples[0].dim()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn examples(&self) -> &[Array3<f64>] {
        &self.examples
    }

    /// Assemble a batch tensor from the given example indices.
    pub fn batch(&self, indices: &[usize]) -> (Tensor4, Vec<usize>) {
        let (h, w, c) = self.example_shape();
        let mut tensor = Array4::zeros((indices.len(), h, w, c));
        let mut labels = Vec::with_capacity(indices.len());
        for (slot, &idx) in indices.iter().enumerate() {
            tensor
                .slice_mut(ndarray::s![slot, .., .., ..])
                .assign(&self.examples[idx]);
            labels.push(self.labels[idx]);
        }
        (tensor, labels)
    }
}

/// One line of the metrics file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

/// Mini-batch Adam over the dataset with per-epoch train/test metrics.
/// Shuffling, init, and dropout all derive from seeds, so two runs with the
/// same inputs produce identical models and metric curves.
pub fn train(
    spec: &ModelSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
) -> Result<(TrainedModel, Vec<EpochRecord>)> {
    config.validate()?;
    if config.class_weights.is_some() {
        let positives = train_set.labels.iter().filter(|&&l| l == 1).count();
        if positives == 0 || positives == train_set.len() {
            return Err(Error::Input(
                "class weighting needs both classes in the training set".into(),
            ));
        }
    }

    let mut model = TrainedModel::init(spec)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::with_capacity(config.epochs);
    let n = train_set.len();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let (batch, labels) = train_set.batch(chunk);
            let dropout_seed = mix_seed(config.seed, epoch as u64, batch_idx as u64);
            let out = model.backward(
                &batch,
                &labels,
                config.class_weights.as_ref(),
                dropout_seed,
            )?;
            adam_step(&mut model, &out.grads, config)?;
            loss_sum += out.loss * labels.len() as f64;
            correct += count_correct(&out.probs, &labels);
        }

        let (test_loss, test_acc) = evaluate(&model, test_set, config.batch_size)?;
        records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            test_loss,
            test_acc,
        });
    }

    Ok((model, records))
}

/// Unweighted loss and accuracy over a dataset, dropout inactive.
pub fn evaluate(model: &TrainedModel, dataset: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
    let n = dataset.len();
    let indices: Vec<usize> = (0..n).collect();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (batch, labels) = dataset.batch(chunk);
        let probs = model.forward(&batch, false, 0)?;
        loss_sum += loss(&probs, &labels, None)? * labels.len() as f64;
        correct += count_correct(&probs, &labels);
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

fn count_correct(probs: &Array2<f64>, labels: &[usize]) -> usize {
    probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &label)| {
            let predicted = if row[1] > row[0] { 1 } else { 0 };
            predicted == label
        })
        .count()
}

/// SplitMix-style seed derivation so every (seed, epoch, batch) triple gets
/// an independent dropout stream.
fn mix_seed(seed: u64, epoch: u64, batch: u64) -> u64 {
    let mut z = seed
        .wrapping_add(epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(batch.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(dropout: f64) -> ModelSpec {
        ModelSpec {
            input_shape: (5, 5, 2),
            layers: vec![
                LayerSpec::Conv2D {
                    filters: 2,
                    kernel: 2,
                    stride: 1,
                    padding: Padding::Valid,
                },
                LayerSpec::MaxPool2D { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 4 },
                LayerSpec::Dropout { rate: dropout },
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
            rng_seed: 7,
        }
    }

    fn random_batch(shape: (usize, usize, usize), n: usize, seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn((n, shape.0, shape.1, shape.2), |_| {
            rng.random_range(-1.0..1.0)
        })
    }

    #[test]
    fn parameter_count_formulas() {
        let spec = ModelSpec {
            input_shape: (32, 32, 1),
            layers: vec![
                LayerSpec::Conv2D {
                    filters: 32,
                    kernel: 4,
                    stride: 1,
                    padding: Padding::Valid,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
            rng_seed: 0,
        };
        let count = spec.count_parameters().unwrap();
        assert_eq!(count.per_layer[0], ("conv2d".to_string(), 544));
        assert_eq!(count.per_layer[1].1, 0, "flatten has no parameters");

        // Dense over a 1568-wide flatten.
        let spec = ModelSpec {
            input_shape: (1, 1, 1568),
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 32 },
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
            rng_seed: 0,
        };
        let count = spec.count_parameters().unwrap();
        assert_eq!(count.per_layer[1].1, 50_208);
    }

    #[test]
    fn allocated_parameters_match_counts() {
        let spec = tiny_spec(0.25);
        let model = TrainedModel::init(&spec).unwrap();
        let allocated: usize = model.params.iter().map(LayerParams::count).sum();
        assert_eq!(allocated, spec.count_parameters().unwrap().total);
    }

    #[test]
    fn init_is_deterministic() {
        let spec = tiny_spec(0.0);
        let a = TrainedModel::init(&spec).unwrap();
        let b = TrainedModel::init(&spec).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn forward_shape_mismatch_is_structural() {
        let model = TrainedModel::init(&tiny_spec(0.0)).unwrap();
        let batch = random_batch((4, 4, 2), 2, 0);
        assert!(matches!(
            model.forward(&batch, false, 0),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn non_finite_input_is_numeric_error() {
        let model = TrainedModel::init(&tiny_spec(0.0)).unwrap();
        let mut batch = random_batch((5, 5, 2), 1, 0);
        batch[(0, 0, 0, 0)] = f64::NAN;
        assert!(matches!(
            model.forward(&batch, false, 0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn dropout_rate_zero_matches_inference() {
        let model = TrainedModel::init(&tiny_spec(0.0)).unwrap();
        let batch = random_batch((5, 5, 2), 3, 1);
        let trained = model.forward(&batch, true, 99).unwrap();
        let inferred = model.forward(&batch, false, 99).unwrap();
        assert_eq!(trained, inferred);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = TrainedModel::init(&tiny_spec(0.25)).unwrap();
        let batch = random_batch((5, 5, 2), 8, 2);
        let probs = model.forward(&batch, false, 0).unwrap();
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_examples() {
        let perfect = Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap();
        assert_eq!(loss(&perfect, &[1], None).unwrap(), 0.0);

        let even = Array2::from_shape_vec((2, 2), vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let l = loss(&even, &[0, 1], None).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);

        // Weight 2 on class 1, every example class 1 at p = 0.5.
        let l = loss(&even, &[1, 1], Some(&[1.0, 2.0])).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        assert!(matches!(loss(&even, &[0, 2], None), Err(Error::Input(_))));
    }

    #[test]
    fn final_bias_gradient_rows_sum_to_zero() {
        // Softmax cross-entropy logit gradients sum to zero per example, so
        // the final dense bias gradient sums to zero across classes.
        let model = TrainedModel::init(&tiny_spec(0.0)).unwrap();
        let batch = random_batch((5, 5, 2), 4, 3);
        let out = model.backward(&batch, &[0, 1, 0, 1], None, 0).unwrap();
        let LayerParams::Dense { bias, .. } = &out.grads[5] else {
            panic!("expected dense grads");
        };
        assert!(bias.sum().abs() < 1e-12);
    }

    #[test]
    fn dropped_units_get_zero_gradient() {
        let spec = tiny_spec(0.5);
        let model = TrainedModel::init(&spec).unwrap();
        let batch = random_batch((5, 5, 2), 1, 4);
        let seed = 1234;
        let out = model.backward(&batch, &[1], None, seed).unwrap();

        // Reconstruct the mask the backward pass used (batch of one, so a
        // dropped element is a dropped unit).
        let (_, trace) = model.run(&batch, true, seed, true).unwrap();
        let Cache::Dropout { mask } = &trace.unwrap()[4] else {
            panic!("expected dropout cache");
        };
        let LayerParams::Dense { weights, .. } = &out.grads[5] else {
            panic!("expected dense grads");
        };
        assert!(mask.contains(&0.0), "seed should drop something");
        for (unit, &m) in mask.iter().enumerate() {
            if m == 0.0 {
                assert!(
                    weights.row(unit).iter().all(|&g| g == 0.0),
                    "dropped unit {unit} leaked gradient"
                );
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let spec = tiny_spec(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let examples: Vec<Array3<f64>> = (0..20)
            .map(|_| Array3::from_shape_fn((5, 5, 2), |_| rng.random_range(0.0..1.0)))
            .collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let train_set = Dataset::new(examples.clone(), labels.clone()).unwrap();
        let test_set = Dataset::new(examples, labels).unwrap();
        let config = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (model_a, records_a) = train(&spec, &train_set, &test_set, &config).unwrap();
        let (model_b, records_b) = train(&spec, &train_set, &test_set, &config).unwrap();
        assert_eq!(records_a, records_b);
        assert_eq!(model_a.params, model_b.params);
    }

    #[test]
    fn shapes_reject_bad_stacks() {
        // Dense before flatten.
        let spec = ModelSpec {
            input_shape: (4, 4, 1),
            layers: vec![LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
            rng_seed: 0,
        };
        assert!(matches!(spec.shapes(), Err(Error::Config(_))));

        // Missing softmax.
        let spec = ModelSpec {
            input_shape: (4, 4, 1),
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2 }],
            rng_seed: 0,
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        // Three-class head.
        let spec = ModelSpec {
            input_shape: (4, 4, 1),
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3 },
                LayerSpec::Softmax,
            ],
            rng_seed: 0,
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
