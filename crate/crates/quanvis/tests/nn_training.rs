//! End-to-end training sanity: the optimizer drives a tiny stack to perfect
//! accuracy on linearly separable data, and checkpoints survive a round trip.

use ndarray::Array3;
use quanvis::nn::{
    evaluate, load_model, save_model, train, Dataset, LayerSpec, ModelSpec, TrainConfig,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two well-separated Gaussian-ish blobs in the unit square, one per class.
fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let center = if label == 0 { 0.25 } else { 0.75 };
        examples.push(Array3::from_shape_fn((1, 1, 2), |_| {
            center + rng.random_range(-0.15..0.15)
        }));
        labels.push(label);
    }
    Dataset::new(examples, labels).unwrap()
}

fn blob_spec() -> ModelSpec {
    ModelSpec {
        input_shape: (1, 1, 2),
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 4 },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ],
        rng_seed: 11,
    }
}

#[test]
fn separable_blobs_reach_perfect_train_accuracy() {
    let train_set = blobs(40, 1);
    let test_set = blobs(40, 2);
    let config = TrainConfig {
        epochs: 200,
        batch_size: 16,
        seed: 3,
        ..TrainConfig::default()
    };
    let (_, records) = train(&blob_spec(), &train_set, &test_set, &config).unwrap();
    let last = records.last().unwrap();
    assert_eq!(records.len(), 200);
    assert_eq!(last.train_acc, 1.0, "separable data must fit exactly");
    assert!(last.test_acc > 0.95, "test accuracy {}", last.test_acc);
    assert!(last.train_loss < records[0].train_loss);
}

#[test]
fn checkpoint_preserves_behaviour() {
    let train_set = blobs(24, 4);
    let config = TrainConfig {
        epochs: 20,
        batch_size: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, _) = train(&blob_spec(), &train_set, &train_set, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blobs.qmdl");
    save_model(&model, &path).unwrap();
    let restored = load_model(&path).unwrap();

    let before = evaluate(&model, &train_set, 8).unwrap();
    let after = evaluate(&restored, &train_set, 8).unwrap();
    assert_eq!(before, after);
}
