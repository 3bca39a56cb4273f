//! Model checkpoints and per-epoch metrics files.
//!
//! Checkpoint layout (little-endian): magic `QMDL`, version u16, a u32-length
//! JSON encoding of the spec, then per layer the parameter tensors as raw
//! f64 data. Adam state is training-internal and not persisted.
//!
//! Metrics files are plain text, one header line then one
//! `epoch,train_loss,train_acc,test_loss,test_acc` line per epoch. Floats
//! print in Rust's shortest round-trip form, so the files are byte-stable
//! across reruns with identical inputs.

use ndarray::{Array1, Array2, Array4};
use std::fmt::Write as _;
use std::path::Path;

use super::{AdamState, EpochRecord, LayerParams, ModelSpec, TrainedModel};
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"QMDL";
const MODEL_VERSION: u16 = 1;

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc";

/// Persist spec and parameters.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let spec_json = serde_json::to_vec(&model.spec)
        .map_err(|e| Error::Format(format!("spec serialization: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&spec_json);
    for param in &model.params {
        match param {
            LayerParams::Conv { kernel, bias } => {
                write_values(&mut buf, kernel.iter());
                write_values(&mut buf, bias.iter());
            }
            LayerParams::Dense { weights, bias } => {
                write_values(&mut buf, weights.iter());
                write_values(&mut buf, bias.iter());
            }
            LayerParams::None => {}
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

fn write_values<'a>(buf: &mut Vec<u8>, values: impl Iterator<Item = &'a f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Load a checkpoint; parameter tensor shapes are rebuilt from the spec and
/// must consume the file exactly. The optimizer state starts fresh.
pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path)?;
    let fail = |msg: &str| Error::Format(format!("model checkpoint: {msg}"));
    if bytes.len() < 10 {
        return Err(fail("truncated header"));
    }
    if &bytes[0..4] != MODEL_MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let spec_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if bytes.len() < 10 + spec_len {
        return Err(fail("truncated spec"));
    }
    let spec: ModelSpec = serde_json::from_slice(&bytes[10..10 + spec_len])
        .map_err(|e| fail(&format!("spec: {e}")))?;
    spec.validate()?;

    let mut cursor = 10 + spec_len;
    let mut take = |count: usize| -> Result<Vec<f64>> {
        let need = count * 8;
        if bytes.len() < cursor + need {
            return Err(Error::Format("model checkpoint: truncated parameters".into()));
        }
        let values = bytes[cursor..cursor + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += need;
        Ok(values)
    };

    let shapes = spec.shapes()?;
    let mut params = Vec::with_capacity(spec.layers.len());
    for (layer, shape) in spec.layers.iter().zip(&shapes) {
        params.push(match (*layer, *shape) {
            (super::LayerSpec::Conv2D { filters, kernel, .. }, super::Shape::Spatial(_, _, c)) => {
                let k = Array4::from_shape_vec(
                    (kernel, kernel, c, filters),
                    take(kernel * kernel * c * filters)?,
                )
                .expect("shape product");
                LayerParams::Conv {
                    kernel: k,
                    bias: Array1::from_vec(take(filters)?),
                }
            }
            (super::LayerSpec::Dense { units }, super::Shape::Flat(input)) => LayerParams::Dense {
                weights: Array2::from_shape_vec((input, units), take(input * units)?)
                    .expect("shape product"),
                bias: Array1::from_vec(take(units)?),
            },
            _ => LayerParams::None,
        });
    }
    if cursor != bytes.len() {
        return Err(fail("trailing bytes after parameters"));
    }

    let adam = AdamState::zeros_like(&params);
    Ok(TrainedModel { spec, params, adam })
}

pub fn metrics_to_text(records: &[EpochRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc
        );
    }
    out
}

pub fn write_metrics(records: &[EpochRecord], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_to_text(records))?;
    Ok(())
}

pub fn parse_metrics(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == METRICS_HEADER => {}
        _ => return Err(Error::Format("metrics: missing header".into())),
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("metrics line {}: 5 fields expected", lineno + 2)));
        }
        let bad = |what: &str| Error::Format(format!("metrics line {}: bad {what}", lineno + 2));
        records.push(EpochRecord {
            epoch: fields[0].parse().map_err(|_| bad("epoch"))?,
            train_loss: fields[1].parse().map_err(|_| bad("train_loss"))?,
            train_acc: fields[2].parse().map_err(|_| bad("train_acc"))?,
            test_loss: fields[3].parse().map_err(|_| bad("test_loss"))?,
            test_acc: fields[4].parse().map_err(|_| bad("test_acc"))?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Padding};

    fn spec() -> ModelSpec {
        ModelSpec {
            input_shape: (6, 6, 2),
            layers: vec![
                LayerSpec::Conv2D {
                    filters: 3,
                    kernel: 2,
                    stride: 1,
                    padding: Padding::Same,
                },
                LayerSpec::MaxPool2D { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
            rng_seed: 21,
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.qmdl");
        let model = TrainedModel::init(&spec()).unwrap();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model.spec, back.spec);
        assert_eq!(model.params, back.params);

        // Same model, same bytes.
        let path2 = dir.path().join("model2.qmdl");
        save_model(&model, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.qmdl");
        let model = TrainedModel::init(&spec()).unwrap();
        save_model(&model, &path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }

    #[test]
    fn metrics_round_trip() {
        let records = vec![
            EpochRecord {
                epoch: 1,
                train_loss: 0.6931471805599453,
                train_acc: 0.5,
                test_loss: 0.7,
                test_acc: 0.48,
            },
            EpochRecord {
                epoch: 2,
                train_loss: 0.61,
                train_acc: 1.0 / 3.0,
                test_loss: 0.65,
                test_acc: 0.52,
            },
        ];
        let text = metrics_to_text(&records);
        assert_eq!(parse_metrics(&text).unwrap(), records);
        assert!(parse_metrics("nonsense").is_err());
    }
}
