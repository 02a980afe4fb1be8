//! Batch normalization over the last (channel) axis.
//!
//! In training mode the statistics are taken over every other axis (batch and
//! spatial); inference mode uses the running estimates and is a fixed affine
//! map.

use super::{missing_forward, Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f32 = 1e-5;
/// Weight of the previous running estimate in each update.
pub const BN_MOMENTUM: f32 = 0.9;

#[derive(Debug)]
pub struct BatchNormParams<'a> {
    pub gamma: &'a Tensor,
    pub beta: &'a Tensor,
    pub running_mean: &'a mut Tensor,
    pub running_var: &'a mut Tensor,
}

/// Values saved by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Vec<f32>,
    inv_std: Vec<f32>,
    train: bool,
}

fn channels_of(input: &Tensor, gamma: &Tensor) -> Result<usize> {
    let c = *input.shape().last().expect("tensor rank >= 1");
    if gamma.len() != c {
        return Err(Error::InvalidShape(format!(
            "batchnorm: {} scale entries for {c} channels",
            gamma.len()
        )));
    }
    Ok(c)
}

/// `out = gamma * (x - mean) / sqrt(var + eps) + beta`.
///
/// Training mode needs at least two values per channel and updates the
/// running statistics; inference mode leaves them untouched.
pub fn batchnorm_forward(
    input: &Tensor,
    params: BatchNormParams<'_>,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache)> {
    let c = channels_of(input, params.gamma)?;
    for t in [&*params.beta, &*params.running_mean, &*params.running_var] {
        if t.len() != c {
            return Err(Error::InvalidShape(format!(
                "batchnorm: parameter of length {} for {c} channels",
                t.len()
            )));
        }
    }
    let count = input.len() / c;
    let x = input.data();
    let (mean, var) = if mode.is_train() {
        if count < 2 {
            return Err(Error::InvalidBatch(format!(
                "batchnorm: training needs more than one value per channel, got {count}"
            )));
        }
        let mut mean = vec![0.0f64; c];
        for row in x.chunks(c) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += f64::from(*v));
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0f64; c];
        for row in x.chunks(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = f64::from(*v) - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= count as f64);
        let mean: Vec<f32> = mean.into_iter().map(|m| m as f32).collect();
        let var: Vec<f32> = var.into_iter().map(|v| v as f32).collect();
        for (r, m) in params.running_mean.data_mut().iter_mut().zip(&mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
        }
        for (r, v) in params.running_var.data_mut().iter_mut().zip(&var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
        (mean, var)
    } else {
        (
            params.running_mean.data().to_vec(),
            params.running_var.data().to_vec(),
        )
    };
    let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let gamma = params.gamma.data();
    let beta = params.beta.data();
    let mut x_hat = vec![0.0f32; x.len()];
    let mut out = vec![0.0f32; x.len()];
    for ((xr, hr), or) in x.chunks(c).zip(x_hat.chunks_mut(c)).zip(out.chunks_mut(c)) {
        for ch in 0..c {
            let h = (xr[ch] - mean[ch]) * inv_std[ch];
            hr[ch] = h;
            or[ch] = gamma[ch] * h + beta[ch];
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), out)?,
        BatchNormCache {
            x_hat,
            inv_std,
            train: mode.is_train(),
        },
    ))
}

/// Returns `(dL/dx, dL/dgamma, dL/dbeta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    grad_output: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let c = channels_of(grad_output, gamma)?;
    if grad_output.len() != cache.x_hat.len() {
        return Err(Error::InvalidShape("batchnorm: gradient does not match cached input".into()));
    }
    let count = (grad_output.len() / c) as f32;
    let go = grad_output.data();
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for (gr, hr) in go.chunks(c).zip(cache.x_hat.chunks(c)) {
        for ch in 0..c {
            dgamma[ch] += gr[ch] * hr[ch];
            dbeta[ch] += gr[ch];
        }
    }
    let g = gamma.data();
    let mut dx = vec![0.0f32; go.len()];
    if cache.train {
        // dx = gamma * inv_std / m * (m * dy - sum(dy) - x_hat * sum(dy * x_hat))
        for ((dr, gr), hr) in dx.chunks_mut(c).zip(go.chunks(c)).zip(cache.x_hat.chunks(c)) {
            for ch in 0..c {
                dr[ch] = g[ch] * cache.inv_std[ch] / count
                    * (count * gr[ch] - dbeta[ch] - hr[ch] * dgamma[ch]);
            }
        }
    } else {
        for (dr, gr) in dx.chunks_mut(c).zip(go.chunks(c)) {
            for ch in 0..c {
                dr[ch] = g[ch] * cache.inv_std[ch] * gr[ch];
            }
        }
    }
    Ok((
        Tensor::from_vec(grad_output.shape(), dx)?,
        Tensor::from_vec(&[c], dgamma)?,
        Tensor::from_vec(&[c], dbeta)?,
    ))
}

/// Batch normalization layer; `running_mean`/`running_var` are stored with
/// the parameters but are not trainable.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub name: String,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<BatchNormCache>,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Result<Self> {
        let ones = Tensor::create(&[channels], crate::tensor::Fill::Constant(1.0))?;
        let zeros = Tensor::zeros(&[channels])?;
        Ok(BatchNorm {
            name: name.to_string(),
            gamma: Param::new(format!("{name}.gamma"), ones.clone(), true),
            beta: Param::new(format!("{name}.beta"), zeros.clone(), true),
            running_mean: Param::new(format!("{name}.running_mean"), zeros, false),
            running_var: Param::new(format!("{name}.running_var"), ones, false),
            cache: None,
        })
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let (out, cache) = batchnorm_forward(
            input,
            BatchNormParams {
                gamma: &self.gamma.value,
                beta: &self.beta.value,
                running_mean: &mut self.running_mean.value,
                running_var: &mut self.running_var.value,
            },
            mode,
        )
        .map_err(|e| match e {
            Error::InvalidShape(m) => Error::InvalidShape(format!("{}: {m}", self.name)),
            Error::InvalidBatch(m) => Error::InvalidBatch(format!("{}: {m}", self.name)),
            other => other,
        })?;
        self.cache = Some(cache);
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_forward(&self.name))?;
        let (dx, dgamma, dbeta) = batchnorm_backward(cache, &self.gamma.value, grad_output)?;
        self.gamma.grad.add_assign(&dgamma)?;
        self.beta.grad.add_assign(&dbeta)?;
        Ok(dx)
    }
}
