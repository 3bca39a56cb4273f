//! Forward and backward kernels for the individual layer types.
//!
//! Everything is float64 and single-threaded. Convolution accumulates taps
//! in (ki, kj, c) order for every output element, with the filter index as
//! the inner (vectorizable) dimension; out-of-range taps under `Same`
//! padding are skipped, which is bit-identical to adding the zero products.

use ndarray::{Array1, Array2, Array4};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::Padding;

/// Output extent and leading pad for one spatial axis.
fn axis_geometry(input: usize, kernel: usize, stride: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Valid => ((input - kernel) / stride + 1, 0),
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            // The leading side gets the smaller half, matching the usual
            // convention of framework `same` padding.
            (out, total / 2)
        }
    }
}

/// (out_h, out_w, pad_top, pad_left) of a convolution or pooling scan.
pub fn conv_geometry(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: Padding,
) -> (usize, usize, usize, usize) {
    let (oh, pad_top) = axis_geometry(h, kh, stride, padding);
    let (ow, pad_left) = axis_geometry(w, kw, stride, padding);
    (oh, ow, pad_top, pad_left)
}

/// 2D convolution: input `(B, H, W, C)`, kernel `(KH, KW, C, F)`, bias `F`.
pub fn conv_forward(
    input: &Array4<f64>,
    kernel: &Array4<f64>,
    bias: &Array1<f64>,
    stride: usize,
    padding: Padding,
) -> Array4<f64> {
    let (b, h, w, c) = input.dim();
    let (kh, kw, kc, f) = kernel.dim();
    assert_eq!(c, kc, "kernel channel mismatch");
    let (oh, ow, pad_top, pad_left) = conv_geometry(h, w, kh, kw, stride, padding);

    let xs = input.as_slice().expect("standard layout");
    let ks = kernel.as_slice().expect("standard layout");
    let bs = bias.as_slice().expect("standard layout");
    let mut out = Array4::<f64>::zeros((b, oh, ow, f));
    let os = out.as_slice_mut().expect("standard layout");
    let mut acc = vec![0.0f64; f];

    for bi in 0..b {
        let in_b = bi * h * w * c;
        for oi in 0..oh {
            let i0 = (oi * stride) as isize - pad_top as isize;
            for oj in 0..ow {
                let j0 = (oj * stride) as isize - pad_left as isize;
                acc.fill(0.0);
                for ki in 0..kh {
                    let ii = i0 + ki as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for kj in 0..kw {
                        let jj = j0 + kj as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        let x_base = in_b + (ii as usize * w + jj as usize) * c;
                        let k_base = (ki * kw + kj) * c * f;
                        for ci in 0..c {
                            let x = xs[x_base + ci];
                            let krow = &ks[k_base + ci * f..k_base + (ci + 1) * f];
                            for (a, &kv) in acc.iter_mut().zip(krow) {
                                *a += x * kv;
                            }
                        }
                    }
                }
                let o_base = ((bi * oh + oi) * ow + oj) * f;
                for (fi, &a) in acc.iter().enumerate() {
                    os[o_base + fi] = a + bs[fi];
                }
            }
        }
    }
    out
}

/// Gradients of a convolution: (d_kernel, d_bias, d_input).
pub fn conv_backward(
    input: &Array4<f64>,
    kernel: &Array4<f64>,
    stride: usize,
    padding: Padding,
    dout: &Array4<f64>,
) -> (Array4<f64>, Array1<f64>, Array4<f64>) {
    let (b, h, w, c) = input.dim();
    let (kh, kw, _, f) = kernel.dim();
    let (oh, ow, pad_top, pad_left) = conv_geometry(h, w, kh, kw, stride, padding);
    assert_eq!(dout.dim(), (b, oh, ow, f), "dout shape mismatch");

    let xs = input.as_slice().expect("standard layout");
    let ks = kernel.as_slice().expect("standard layout");
    let ds = dout.as_slice().expect("standard layout");

    let mut dkernel = Array4::<f64>::zeros((kh, kw, c, f));
    let mut dbias = Array1::<f64>::zeros(f);
    let mut dinput = Array4::<f64>::zeros((b, h, w, c));
    {
        let dks = dkernel.as_slice_mut().unwrap();
        let dbs = dbias.as_slice_mut().unwrap();
        let dxs = dinput.as_slice_mut().unwrap();

        for bi in 0..b {
            let in_b = bi * h * w * c;
            for oi in 0..oh {
                let i0 = (oi * stride) as isize - pad_top as isize;
                for oj in 0..ow {
                    let j0 = (oj * stride) as isize - pad_left as isize;
                    let d_row = &ds[((bi * oh + oi) * ow + oj) * f..][..f];
                    for (fi, &d) in d_row.iter().enumerate() {
                        dbs[fi] += d;
                    }
                    for ki in 0..kh {
                        let ii = i0 + ki as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for kj in 0..kw {
                            let jj = j0 + kj as isize;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            let x_base = in_b + (ii as usize * w + jj as usize) * c;
                            let k_base = (ki * kw + kj) * c * f;
                            for ci in 0..c {
                                let x = xs[x_base + ci];
                                let k_row = &ks[k_base + ci * f..][..f];
                                let dk_row = &mut dks[k_base + ci * f..][..f];
                                let mut dx = 0.0;
                                for fi in 0..f {
                                    dk_row[fi] += x * d_row[fi];
                                    dx += k_row[fi] * d_row[fi];
                                }
                                dxs[x_base + ci] += dx;
                            }
                        }
                    }
                }
            }
        }
    }
    (dkernel, dbias, dinput)
}

/// Max pooling with stride = window size; returns the output and the flat
/// input index of each winning element (first maximum wins ties).
pub fn maxpool_forward(input: &Array4<f64>, size: usize) -> (Array4<f64>, Vec<u32>) {
    let (b, h, w, c) = input.dim();
    let oh = (h - size) / size + 1;
    let ow = (w - size) / size + 1;
    let xs = input.as_slice().expect("standard layout");
    let mut out = Array4::<f64>::zeros((b, oh, ow, c));
    let os = out.as_slice_mut().unwrap();
    let mut argmax = vec![0u32; b * oh * ow * c];

    let mut best = vec![0.0f64; c];
    let mut best_at = vec![0u32; c];
    for bi in 0..b {
        for oi in 0..oh {
            for oj in 0..ow {
                best.fill(f64::NEG_INFINITY);
                for ki in 0..size {
                    for kj in 0..size {
                        let base = ((bi * h + oi * size + ki) * w + oj * size + kj) * c;
                        for ci in 0..c {
                            let v = xs[base + ci];
                            if v > best[ci] {
                                best[ci] = v;
                                best_at[ci] = (base + ci) as u32;
                            }
                        }
                    }
                }
                let o_base = ((bi * oh + oi) * ow + oj) * c;
                os[o_base..o_base + c].copy_from_slice(&best);
                argmax[o_base..o_base + c].copy_from_slice(&best_at);
            }
        }
    }
    (out, argmax)
}

/// Route gradients back to the winning elements.
pub fn maxpool_backward(
    dout: &Array4<f64>,
    argmax: &[u32],
    input_dim: (usize, usize, usize, usize),
) -> Array4<f64> {
    let mut dinput = Array4::<f64>::zeros(input_dim);
    let dxs = dinput.as_slice_mut().unwrap();
    for (&src, &d) in argmax.iter().zip(dout.as_slice().unwrap()) {
        dxs[src as usize] += d;
    }
    dinput
}

/// Fully connected layer: `y = x·W + b` with x `(B, I)`, W `(I, U)`.
pub fn dense_forward(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Gradients of a dense layer: (dW, db, dx).
pub fn dense_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dout: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let dw = x.t().dot(dout);
    let db = dout.sum_axis(ndarray::Axis(0));
    let dx = dout.dot(&w.t());
    (dw, db, dx)
}

/// Row-wise softmax with max subtraction for stability.
pub fn softmax_forward(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

/// Inverted-dropout mask: each element is 0 with probability `rate`, else
/// `1/(1−rate)`, so inference needs no rescale. Masks are drawn in row-major
/// order from the caller's seeded generator.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep_scale = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect()
}
