//! Layers, loss and optimizer for the fixed-topology networks.
//!
//! Activations are batched with the batch index first and channels last:
//! images are `[N, H, W, C]`, vectors are `[N, D]`. Every layer caches what
//! its backward pass needs during `forward`, and `backward` always refers to
//! the most recent forward call.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod loss;
mod optim;
mod pool;
mod spec;

pub use activation::{relu_forward, sigmoid, sigmoid_forward, Relu, Sigmoid};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNorm, BatchNormCache, BatchNormParams,
    BN_EPSILON, BN_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGrads};
pub use dense::{dense_backward, dense_forward, Dense, DenseGrads};
pub use dropout::{dropout_forward, Dropout};
pub use loss::{bce_grad, bce_loss, bce_with_logits_grad, mean_bce, BCE_EPSILON};
pub use optim::{sgd_step, OptimizerState, SgdConfig};
pub use pool::{maxpool_backward, maxpool_forward, MaxPool2d, PoolOutput};
pub use spec::{
    count_params, format_shape, group_thousands, Activation, LayerKind, LayerRow, LayerSpec,
    Padding, ParamCount,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Whether layers behave as during training or as during inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running-stat updates and dropout masks drawn from
    /// `dropout_seed`.
    Train { dropout_seed: u64 },
    Infer,
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// A named parameter tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Running statistics are stored as parameters but never updated by the
    /// optimizer.
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor, trainable: bool) -> Self {
        let grad = value.zeros_like();
        Param {
            name: name.into(),
            value,
            grad,
            trainable,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// He-uniform initialisation: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub fn he_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Tensor> {
    let limit = (6.0 / fan_in.max(1) as f32).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data)
}

/// Collapses all trailing dimensions: `[N, ...] -> [N, prod(...)]`.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Vec<usize>,
}

impl Flatten {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.input_shape = input.shape().to_vec();
        let n = input.shape()[0];
        input.clone().reshape(&[n, input.len() / n])
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        grad_output.clone().reshape(&self.input_shape)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool(MaxPool2d),
    Dense(Dense),
    BatchNorm(BatchNorm),
    Dropout(Dropout),
    Relu(Relu),
    Sigmoid(Sigmoid),
    Flatten(Flatten),
}

impl Layer {
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.forward(input),
            Layer::MaxPool(l) => l.forward(input),
            Layer::Dense(l) => l.forward(input),
            Layer::BatchNorm(l) => l.forward(input, mode),
            Layer::Dropout(l) => l.forward(input, mode),
            Layer::Relu(l) => l.forward(input),
            Layer::Sigmoid(l) => l.forward(input),
            Layer::Flatten(l) => l.forward(input),
        }
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.backward(grad_output),
            Layer::MaxPool(l) => l.backward(grad_output),
            Layer::Dense(l) => l.backward(grad_output),
            Layer::BatchNorm(l) => l.backward(grad_output),
            Layer::Dropout(l) => l.backward(grad_output),
            Layer::Relu(l) => l.backward(grad_output),
            Layer::Sigmoid(l) => l.backward(grad_output),
            Layer::Flatten(l) => l.backward(grad_output),
        }
    }

    /// Freezes ReLU active sets and pooling argmaxes at their values from
    /// the last unfrozen forward pass, which makes the forward map smooth.
    pub fn set_frozen(&mut self, frozen: bool) {
        match self {
            Layer::Relu(l) => l.frozen = frozen,
            Layer::MaxPool(l) => l.frozen = frozen,
            _ => {}
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta, &l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![
                &mut l.gamma,
                &mut l.beta,
                &mut l.running_mean,
                &mut l.running_var,
            ],
            _ => Vec::new(),
        }
    }
}

/// A chain of layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.layers.iter_mut().for_each(|l| l.set_frozen(frozen));
    }

    /// Instantiates layers for `specs` applied to per-sample `input_shape`.
    ///
    /// Parameter names are `"{prefix}.{layer}.{tensor}"`. A dense layer fed
    /// a multi-dimensional activation gets an implicit flatten, and layers
    /// with a fused activation are followed by that activation.
    pub fn from_specs<R: Rng + ?Sized>(
        prefix: &str,
        specs: &[LayerSpec],
        input_shape: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut shape = input_shape.to_vec();
        for spec in specs {
            spec.validate()?;
            let name = format!("{prefix}.{}", spec.name);
            let out_shape = spec.output_shape(&shape)?;
            let activation = match spec.kind {
                LayerKind::Conv {
                    kernel,
                    stride,
                    filters,
                    activation,
                    ..
                } => {
                    let channels = shape[2];
                    layers.push(Layer::Conv2d(Conv2d::new(
                        &name, kernel, channels, filters, stride, rng,
                    )?));
                    activation
                }
                LayerKind::Dense { units, activation } => {
                    if shape.len() > 1 {
                        layers.push(Layer::Flatten(Flatten::default()));
                    }
                    let inputs = shape.iter().product();
                    layers.push(Layer::Dense(Dense::new(&name, inputs, units, rng)?));
                    activation
                }
                LayerKind::BatchNorm => {
                    let channels = *shape.last().expect("non-empty shape");
                    layers.push(Layer::BatchNorm(BatchNorm::new(&name, channels)?));
                    None
                }
                LayerKind::Dropout { rate } => {
                    layers.push(Layer::Dropout(Dropout::new(&name, rate)?));
                    None
                }
                LayerKind::MaxPool { window, stride, .. } => {
                    layers.push(Layer::MaxPool(MaxPool2d::new(window, stride)));
                    None
                }
                LayerKind::Activation(a) => Some(a),
            };
            match activation {
                Some(Activation::Relu) => layers.push(Layer::Relu(Relu::default())),
                Some(Activation::Sigmoid) => layers.push(Layer::Sigmoid(Sigmoid::default())),
                None => {}
            }
            shape = out_shape;
        }
        Ok(Sequential { layers })
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut layers = self.layers.iter_mut();
        let Some(first) = layers.next() else {
            return Ok(input.clone());
        };
        let mut x = first.forward(input, mode)?;
        for layer in layers {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let mut g = grad_output.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }
}

/// Deterministic 64-bit mix of a seed with a layer name (FNV-1a + splitmix).
pub(crate) fn mix_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn missing_forward(layer: &str) -> Error {
    Error::InvalidInput(format!("{layer}: backward called before forward"))
}

/// Adapter exposing one layer in a fixed mode to the gradient checker.
pub struct LayerOp<'a> {
    pub layer: &'a mut Layer,
    pub mode: Mode,
}

impl crate::gradcheck::Differentiable for LayerOp<'_> {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.layer.forward(input, self.mode)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        self.layer.backward(grad_output)
    }
}
