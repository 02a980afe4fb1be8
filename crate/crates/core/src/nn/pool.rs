//! Valid-padding max pooling over HWC activations.

use super::missing_forward;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct PoolOutput {
    pub output: Tensor,
    /// Flat input index that produced each output element.
    pub argmax: Vec<usize>,
}

/// Output side `floor((dim - window) / stride) + 1`; the gradient goes to the
/// first maximal element of each window in row-major scan order.
pub fn maxpool_forward(input: &Tensor, window: usize, stride: usize) -> Result<PoolOutput> {
    let (batch, h, w, c) = match *input.shape() {
        [h, w, c] => (1, h, w, c),
        [n, h, w, c] => (n, h, w, c),
        _ => {
            return Err(Error::InvalidShape(format!(
                "maxpool: expected HxWxC or NxHxWxC input, got {:?}",
                input.shape()
            )))
        }
    };
    if window == 0 || stride == 0 {
        return Err(Error::InvalidShape("maxpool: window and stride must be at least 1".into()));
    }
    if h < window || w < window {
        return Err(Error::InvalidShape(format!(
            "maxpool: {h}x{w} input is smaller than the {window}x{window} window"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(batch * oh * ow * c);
    let mut argmax = Vec::with_capacity(batch * oh * ow * c);
    for n in 0..batch {
        let base = n * h * w * c;
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = base + ((oy * stride + dy) * w + ox * stride + dx) * c + ch;
                            if best_idx == usize::MAX || x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    let shape = if input.ndim() == 4 {
        vec![batch, oh, ow, c]
    } else {
        vec![oh, ow, c]
    };
    Ok(PoolOutput {
        output: Tensor::from_vec(&shape, out)?,
        argmax,
    })
}

/// Routes each output gradient to the recorded argmax input element.
pub fn maxpool_backward(
    input_shape: &[usize],
    argmax: &[usize],
    grad_output: &Tensor,
) -> Result<Tensor> {
    if grad_output.len() != argmax.len() {
        return Err(Error::InvalidShape(format!(
            "maxpool: gradient has {} elements for {} outputs",
            grad_output.len(),
            argmax.len()
        )));
    }
    let mut gx = Tensor::zeros(input_shape)?;
    let data = gx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_output.data()) {
        data[idx] += g;
    }
    Ok(gx)
}

#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
    /// Reuse the argmax of the last unfrozen forward pass.
    pub frozen: bool,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize) -> Self {
        MaxPool2d {
            window,
            stride,
            frozen: false,
            cache: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if self.frozen {
            let (shape, argmax) = self.cache.as_ref().ok_or_else(|| missing_forward("maxpool"))?;
            if shape.as_slice() != input.shape() {
                return Err(Error::InvalidShape(format!(
                    "frozen maxpool: expected {shape:?}, got {:?}",
                    input.shape()
                )));
            }
            let rank = shape.len();
            let mut out_shape = shape.clone();
            out_shape[rank - 3] = (shape[rank - 3] - self.window) / self.stride + 1;
            out_shape[rank - 2] = (shape[rank - 2] - self.window) / self.stride + 1;
            let data = argmax.iter().map(|&i| input.data()[i]).collect();
            return Tensor::from_vec(&out_shape, data);
        }
        let PoolOutput { output, argmax } = maxpool_forward(input, self.window, self.stride)?;
        self.cache = Some((input.shape().to_vec(), argmax));
        Ok(output)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let (shape, argmax) = self.cache.as_ref().ok_or_else(|| missing_forward("maxpool"))?;
        maxpool_backward(shape, argmax, grad_output)
    }
}
