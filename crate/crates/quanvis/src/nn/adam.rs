//! Adam optimizer state and update step, bias-corrected per Kingma & Ba.

use super::{LayerParams, TrainConfig, TrainedModel};
use crate::error::{Error, Result};

/// First/second moment estimates mirroring the parameter layout, plus the
/// step counter used for bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<LayerParams>,
    pub v: Vec<LayerParams>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(params: &[LayerParams]) -> Self {
        Self {
            m: params.iter().map(LayerParams::zeros_like).collect(),
            v: params.iter().map(LayerParams::zeros_like).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update over every parameter tensor; the step
/// counter increments once per call (one mini-batch).
pub fn adam_step(
    model: &mut TrainedModel,
    grads: &[LayerParams],
    config: &TrainConfig,
) -> Result<()> {
    if grads.len() != model.params.len() {
        return Err(Error::Structural(format!(
            "{} gradient entries for {} parameter entries",
            grads.len(),
            model.params.len()
        )));
    }
    model.adam.step += 1;
    let t = model.adam.step;
    let bias1 = 1.0 - config.beta1.powi(t as i32);
    let bias2 = 1.0 - config.beta2.powi(t as i32);

    for (((param, grad), m), v) in model
        .params
        .iter_mut()
        .zip(grads)
        .zip(&mut model.adam.m)
        .zip(&mut model.adam.v)
    {
        match (param, grad, m, v) {
            (LayerParams::None, LayerParams::None, _, _) => {}
            (
                LayerParams::Conv { kernel, bias },
                LayerParams::Conv {
                    kernel: gk,
                    bias: gb,
                },
                LayerParams::Conv {
                    kernel: mk,
                    bias: mb,
                },
                LayerParams::Conv {
                    kernel: vk,
                    bias: vb,
                },
            ) => {
                if kernel.dim() != gk.dim() || bias.len() != gb.len() {
                    return Err(Error::Structural("conv gradient shape mismatch".into()));
                }
                update(
                    kernel.as_slice_mut().unwrap(),
                    gk.as_slice().unwrap(),
                    mk.as_slice_mut().unwrap(),
                    vk.as_slice_mut().unwrap(),
                    config,
                    bias1,
                    bias2,
                );
                update(
                    bias.as_slice_mut().unwrap(),
                    gb.as_slice().unwrap(),
                    mb.as_slice_mut().unwrap(),
                    vb.as_slice_mut().unwrap(),
                    config,
                    bias1,
                    bias2,
                );
            }
            (
                LayerParams::Dense { weights, bias },
                LayerParams::Dense {
                    weights: gw,
                    bias: gb,
                },
                LayerParams::Dense {
                    weights: mw,
                    bias: mb,
                },
                LayerParams::Dense {
                    weights: vw,
                    bias: vb,
                },
            ) => {
                if weights.dim() != gw.dim() || bias.len() != gb.len() {
                    return Err(Error::Structural("dense gradient shape mismatch".into()));
                }
                update(
                    weights.as_slice_mut().unwrap(),
                    gw.as_slice().unwrap(),
                    mw.as_slice_mut().unwrap(),
                    vw.as_slice_mut().unwrap(),
                    config,
                    bias1,
                    bias2,
                );
                update(
                    bias.as_slice_mut().unwrap(),
                    gb.as_slice().unwrap(),
                    mb.as_slice_mut().unwrap(),
                    vb.as_slice_mut().unwrap(),
                    config,
                    bias1,
                    bias2,
                );
            }
            _ => {
                return Err(Error::Structural(
                    "gradient layer kinds do not match parameters".into(),
                ))
            }
        }
    }
    Ok(())
}

fn update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    config: &TrainConfig,
    bias1: f64,
    bias2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
}
