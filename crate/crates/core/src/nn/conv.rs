//! Valid-padding 2-D convolution over HWC activations.
//!
//! Kernels are stored `[k, k, C, F]` row-major, so one output pixel is the
//! product of an im2col row (window in `(ky, kx, c)` order) with the
//! `[k*k*C, F]` kernel matrix.

use rand::Rng;
use rayon::prelude::*;

use super::{he_uniform, missing_forward, Param};
use crate::error::{Error, Result};
use crate::linalg::{gemm, Op};
use crate::tensor::Tensor;

/// Samples per partial weight-gradient buffer. Partials are summed in index
/// order, which keeps the result independent of the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    batch: usize,
    height: usize,
    width: usize,
    channels: usize,
    kernel: usize,
    filters: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(input: &Tensor, kernels: &Tensor, stride: usize, layer: &str) -> Result<Self> {
        let (batch, height, width, channels) = match *input.shape() {
            [h, w, c] => (1, h, w, c),
            [n, h, w, c] => (n, h, w, c),
            _ => {
                return Err(Error::InvalidShape(format!(
                    "{layer}: expected HxWxC or NxHxWxC input, got {:?}",
                    input.shape()
                )))
            }
        };
        let [k, k2, kc, filters] = *kernels.shape() else {
            return Err(Error::InvalidShape(format!(
                "{layer}: kernels must be k x k x C x F, got {:?}",
                kernels.shape()
            )));
        };
        if k != k2 {
            return Err(Error::InvalidShape(format!("{layer}: non-square kernel {k}x{k2}")));
        }
        if kc != channels {
            return Err(Error::InvalidShape(format!(
                "{layer}: kernel expects {kc} channels, input has {channels}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidShape(format!("{layer}: stride must be at least 1")));
        }
        if height < k || width < k {
            return Err(Error::InvalidShape(format!(
                "{layer}: {height}x{width} input is smaller than the {k}x{k} kernel"
            )));
        }
        if (height - k) % stride != 0 || (width - k) % stride != 0 {
            return Err(Error::InvalidShape(format!(
                "{layer}: stride {stride} does not tile a {height}x{width} input with a {k}x{k} kernel"
            )));
        }
        Ok(Geometry {
            batch,
            height,
            width,
            channels,
            kernel: k,
            filters,
            stride,
            out_h: (height - k) / stride + 1,
            out_w: (width - k) / stride + 1,
        })
    }

    fn in_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    fn pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    fn patch(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    fn out_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.batch, self.out_h, self.out_w, self.filters]
        } else {
            vec![self.out_h, self.out_w, self.filters]
        }
    }

    fn im2col(&self, x: &[f32], cols: &mut [f32]) {
        let row_len = self.kernel * self.channels;
        let patch = self.patch();
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = (oy * self.out_w + ox) * patch;
                for ky in 0..self.kernel {
                    let iy = oy * self.stride + ky;
                    let src = (iy * self.width + ox * self.stride) * self.channels;
                    let dst = row + ky * row_len;
                    cols[dst..dst + row_len].copy_from_slice(&x[src..src + row_len]);
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f32], gx: &mut [f32]) {
        let row_len = self.kernel * self.channels;
        let patch = self.patch();
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = (oy * self.out_w + ox) * patch;
                for ky in 0..self.kernel {
                    let iy = oy * self.stride + ky;
                    let dst = (iy * self.width + ox * self.stride) * self.channels;
                    let src = row + ky * row_len;
                    for (g, c) in gx[dst..dst + row_len].iter_mut().zip(&cols[src..src + row_len]) {
                        *g += c;
                    }
                }
            }
        }
    }
}

/// `out(i, j, f) = bias(f) + sum over the k x k x C window of input * kernel`.
///
/// Accepts a single `H x W x C` image or an `N x H x W x C` batch.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<Tensor> {
    conv_forward_named(input, kernels, bias, stride, "conv2d")
}

fn conv_forward_named(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    layer: &str,
) -> Result<Tensor> {
    let g = Geometry::new(input, kernels, stride, layer)?;
    if bias.len() != g.filters {
        return Err(Error::InvalidShape(format!(
            "{layer}: bias has {} entries for {} filters",
            bias.len(),
            g.filters
        )));
    }
    let out_len = g.pixels() * g.filters;
    let mut out = vec![0.0f32; g.batch * out_len];
    out.par_chunks_mut(out_len)
        .zip(input.data().par_chunks(g.in_len()))
        .for_each_init(
            || vec![0.0f32; g.pixels() * g.patch()],
            |cols, (o, x)| {
                g.im2col(x, cols);
                for px in o.chunks_mut(g.filters) {
                    px.copy_from_slice(bias.data());
                }
                gemm(
                    g.pixels(),
                    g.patch(),
                    g.filters,
                    cols,
                    Op::Normal,
                    kernels.data(),
                    Op::Normal,
                    o,
                    true,
                );
            },
        );
    Tensor::from_vec(&g.out_shape(input.ndim() == 4), out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    /// `None` when the input gradient was not requested.
    pub input: Option<Tensor>,
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// Gradients of [`conv2d_forward`] given `dL/d(output)`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    grad_output: &Tensor,
    need_input_grad: bool,
) -> Result<ConvGrads> {
    conv_backward_named(input, kernels, stride, grad_output, need_input_grad, "conv2d")
}

fn conv_backward_named(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    grad_output: &Tensor,
    need_input_grad: bool,
    layer: &str,
) -> Result<ConvGrads> {
    let g = Geometry::new(input, kernels, stride, layer)?;
    let expected = g.out_shape(input.ndim() == 4);
    if grad_output.shape() != expected.as_slice() {
        return Err(Error::InvalidShape(format!(
            "{layer}: output gradient {:?} does not match output shape {expected:?}",
            grad_output.shape()
        )));
    }
    let out_len = g.pixels() * g.filters;
    let kernel_len = g.patch() * g.filters;
    let mut gx = if need_input_grad {
        vec![0.0f32; input.len()]
    } else {
        Vec::new()
    };
    let in_chunk = GRAD_CHUNK * g.in_len();
    let out_chunk = GRAD_CHUNK * out_len;

    let work = |x: &[f32], go: &[f32], gx: Option<&mut [f32]>| -> (Vec<f32>, Vec<f32>) {
        let mut cols = vec![0.0f32; g.pixels() * g.patch()];
        let mut gcols = if gx.is_some() {
            vec![0.0f32; g.pixels() * g.patch()]
        } else {
            Vec::new()
        };
        let mut gk = vec![0.0f32; kernel_len];
        let mut gb = vec![0.0f32; g.filters];
        let mut gx = gx;
        for (s, (xs, gos)) in x.chunks(g.in_len()).zip(go.chunks(out_len)).enumerate() {
            g.im2col(xs, &mut cols);
            gemm(
                g.patch(),
                g.pixels(),
                g.filters,
                &cols,
                Op::Transposed,
                gos,
                Op::Normal,
                &mut gk,
                true,
            );
            for px in gos.chunks(g.filters) {
                for (b, v) in gb.iter_mut().zip(px) {
                    *b += v;
                }
            }
            if let Some(gx) = gx.as_deref_mut() {
                gemm(
                    g.pixels(),
                    g.filters,
                    g.patch(),
                    gos,
                    Op::Normal,
                    kernels.data(),
                    Op::Transposed,
                    &mut gcols,
                    false,
                );
                let len = g.in_len();
                g.col2im_add(&gcols, &mut gx[s * len..(s + 1) * len]);
            }
        }
        (gk, gb)
    };

    let partials: Vec<(Vec<f32>, Vec<f32>)> = if need_input_grad {
        gx.par_chunks_mut(in_chunk)
            .zip(input.data().par_chunks(in_chunk))
            .zip(grad_output.data().par_chunks(out_chunk))
            .map(|((gx, x), go)| work(x, go, Some(gx)))
            .collect()
    } else {
        input
            .data()
            .par_chunks(in_chunk)
            .zip(grad_output.data().par_chunks(out_chunk))
            .map(|(x, go)| work(x, go, None))
            .collect()
    };

    let mut gk = vec![0.0f32; kernel_len];
    let mut gb = vec![0.0f32; g.filters];
    for (pk, pb) in &partials {
        gk.iter_mut().zip(pk).for_each(|(a, b)| *a += b);
        gb.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
    }
    Ok(ConvGrads {
        input: if need_input_grad {
            Some(Tensor::from_vec(input.shape(), gx)?)
        } else {
            None
        },
        kernels: Tensor::from_vec(kernels.shape(), gk)?,
        bias: Tensor::from_vec(&[g.filters], gb)?,
    })
}

/// Convolution layer with learnable kernels and bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub stride: usize,
    pub weight: Param,
    pub bias: Param,
    /// The first layer of a network never needs `dL/d(input)`.
    pub skip_input_grad: bool,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        kernel: usize,
        channels: usize,
        filters: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = kernel * kernel * channels;
        let weight = he_uniform(&[kernel, kernel, channels, filters], fan_in, rng)?;
        Ok(Conv2d {
            name: name.to_string(),
            stride,
            weight: Param::new(format!("{name}.weight"), weight, true),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[filters])?, true),
            skip_input_grad: false,
            input: None,
        })
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = conv_forward_named(
            input,
            &self.weight.value,
            &self.bias.value,
            self.stride,
            &self.name,
        )?;
        self.input = Some(input.clone());
        Ok(out)
    }

    /// Accumulates parameter gradients and returns `dL/d(input)` (zeros when
    /// `skip_input_grad` is set).
    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().ok_or_else(|| missing_forward(&self.name))?;
        let grads = conv_backward_named(
            input,
            &self.weight.value,
            self.stride,
            grad_output,
            !self.skip_input_grad,
            &self.name,
        )?;
        self.weight.grad.add_assign(&grads.kernels)?;
        self.bias.grad.add_assign(&grads.bias)?;
        match grads.input {
            Some(gx) => Ok(gx),
            None => Ok(input.zeros_like()),
        }
    }
}
