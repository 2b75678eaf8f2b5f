//! Convolution and pooling primitives: stride-1 valid cross-correlation
//! with 3x3 kernels, and 2x2 max pooling that records argmax positions
//! so the backward pass can route gradients.

use crate::ModelError;

/// Kernel side length; every convolution in the network is 3x3.
pub const KERNEL: usize = 3;

/// Dense `[channels x height x width]` grid. Storage is channel-major,
/// then row, then column, which is also the network's flatten order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_data(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if data.len() != channels * height * width {
            return Err(ModelError::ShapeMismatch(format!(
                "{} values cannot fill a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, value: f64) {
        self.data[(c * self.height + i) * self.width + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

fn check_kernels(c_in: usize, c_out: usize, kernels: &[f64]) -> Result<(), ModelError> {
    if c_out == 0 || kernels.len() != c_out * c_in * KERNEL * KERNEL {
        return Err(ModelError::ShapeMismatch(format!(
            "{} kernel weights do not form {c_out} filters of {c_in}x{KERNEL}x{KERNEL}",
            kernels.len()
        )));
    }
    Ok(())
}

/// Cross-correlation (no kernel flip), stride 1, valid padding, plus a
/// per-output-channel bias. Kernels are laid out
/// `[c_out x c_in x 3 x 3]` row-major; the output channel count is
/// `biases.len()`.
pub fn conv2d_forward(
    input: &Tensor3,
    kernels: &[f64],
    biases: &[f64],
) -> Result<Tensor3, ModelError> {
    let (c_in, h, w) = input.dims();
    if h < KERNEL || w < KERNEL {
        return Err(ModelError::InputTooSmall(format!(
            "{h}x{w} input is smaller than the {KERNEL}x{KERNEL} kernel"
        )));
    }
    let c_out = biases.len();
    check_kernels(c_in, c_out, kernels)?;
    let out_h = h - (KERNEL - 1);
    let out_w = w - (KERNEL - 1);
    let mut out = Tensor3::zeros(c_out, out_h, out_w);
    for f in 0..c_out {
        for i in 0..out_h {
            for j in 0..out_w {
                let mut acc = biases[f];
                for c in 0..c_in {
                    let k_base = (f * c_in + c) * KERNEL * KERNEL;
                    for di in 0..KERNEL {
                        let in_base = (c * h + i + di) * w + j;
                        let k_row = k_base + di * KERNEL;
                        for dj in 0..KERNEL {
                            acc += input.data[in_base + dj] * kernels[k_row + dj];
                        }
                    }
                }
                out.data[(f * out_h + i) * out_w + j] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of a conv2d_forward call: returns (kernel grads, bias
/// grads, input grads) given the upstream gradient `dout`.
pub fn conv2d_backward(
    input: &Tensor3,
    kernels: &[f64],
    dout: &Tensor3,
) -> Result<(Vec<f64>, Vec<f64>, Tensor3), ModelError> {
    let (c_in, h, w) = input.dims();
    let (c_out, out_h, out_w) = dout.dims();
    if h < KERNEL || w < KERNEL || out_h != h - (KERNEL - 1) || out_w != w - (KERNEL - 1) {
        return Err(ModelError::ShapeMismatch(format!(
            "output gradient {c_out}x{out_h}x{out_w} does not match a {c_in}x{h}x{w} input"
        )));
    }
    check_kernels(c_in, c_out, kernels)?;
    let mut d_kernels = vec![0.0; kernels.len()];
    let mut d_biases = vec![0.0; c_out];
    let mut d_input = Tensor3::zeros(c_in, h, w);
    for f in 0..c_out {
        for i in 0..out_h {
            for j in 0..out_w {
                let g = dout.data[(f * out_h + i) * out_w + j];
                d_biases[f] += g;
                for c in 0..c_in {
                    let k_base = (f * c_in + c) * KERNEL * KERNEL;
                    for di in 0..KERNEL {
                        let in_base = (c * h + i + di) * w + j;
                        let k_row = k_base + di * KERNEL;
                        for dj in 0..KERNEL {
                            d_kernels[k_row + dj] += g * input.data[in_base + dj];
                            d_input.data[in_base + dj] += g * kernels[k_row + dj];
                        }
                    }
                }
            }
        }
    }
    Ok((d_kernels, d_biases, d_input))
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are
/// dropped. Also returns, per output cell, the flat index of the winning
/// input cell (ties go to the first cell in row-major window order).
pub fn maxpool_forward(input: &Tensor3) -> Result<(Tensor3, Vec<usize>), ModelError> {
    let (c_in, h, w) = input.dims();
    if h < 2 || w < 2 {
        return Err(ModelError::InputTooSmall(format!(
            "{h}x{w} input is smaller than the 2x2 pooling window"
        )));
    }
    let out_h = h / 2;
    let out_w = w / 2;
    let mut out = Tensor3::zeros(c_in, out_h, out_w);
    let mut argmax = vec![0usize; c_in * out_h * out_w];
    for c in 0..c_in {
        for i in 0..out_h {
            for j in 0..out_w {
                let mut best_idx = (c * h + 2 * i) * w + 2 * j;
                let mut best = input.data[best_idx];
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (c * h + 2 * i + di) * w + 2 * j + dj;
                    if input.data[idx] > best {
                        best = input.data[idx];
                        best_idx = idx;
                    }
                }
                let out_idx = (c * out_h + i) * out_w + j;
                out.data[out_idx] = best;
                argmax[out_idx] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each pooled-output gradient back to the single input cell
/// that won its window.
pub fn maxpool_backward(
    input_dims: (usize, usize, usize),
    argmax: &[usize],
    dout: &Tensor3,
) -> Tensor3 {
    let (c, h, w) = input_dims;
    assert_eq!(argmax.len(), dout.data.len());
    let mut d_input = Tensor3::zeros(c, h, w);
    for (out_idx, &in_idx) in argmax.iter().enumerate() {
        d_input.data[in_idx] += dout.data[out_idx];
    }
    d_input
}
