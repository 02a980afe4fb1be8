//! Finite-difference checks for every layer type and for a whole model.

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::{Batch, Model};
use crate::error::Result;
use crate::gradcheck::{check_scalar_fn, grad_check_with, project, GradCheckReport, PROJECTION_SEED};
use crate::nn::{
    bce_loss, bce_with_logits_grad, sigmoid, BatchNorm, Conv2d, Dense, Dropout, Layer, LayerOp, MaxPool2d,
    Mode, Relu, Sigmoid,
};
use crate::tensor::{Fill, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    /// `layer` or `layer:tensor`.
    pub name: String,
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradCheckEntry {
    fn new(name: impl Into<String>, report: &GradCheckReport) -> Self {
        GradCheckEntry {
            name: name.into(),
            max_relative_error: report.max_relative_error,
            checked: report.checked,
            skipped_kinks: report.skipped_kinks,
        }
    }
}

fn uniform(shape: &[usize], low: f32, high: f32, seed: u64) -> Result<Tensor> {
    Tensor::create(shape, Fill::Uniform { low, high, seed })
}

/// Input check plus a check of every parameter tensor of one layer.
fn check_layer(name: &str, mut layer: Layer, input: &Tensor, mode: Mode, epsilon: f32) -> Result<Vec<GradCheckEntry>> {
    let mut out = Vec::new();
    let report = grad_check_with(&mut LayerOp { layer: &mut layer, mode }, input, None, epsilon)?;
    out.push(GradCheckEntry::new(format!("{name}:input"), &report));

    let output = layer.forward(input, mode)?;
    let weights = uniform(output.shape(), -1.0, 1.0, PROJECTION_SEED)?;
    for p in layer.params_mut() {
        p.zero_grad();
    }
    layer.backward(&weights)?;
    let tensors: Vec<(String, Tensor, Tensor)> = layer
        .params()
        .into_iter()
        .filter(|p| p.trainable)
        .map(|p| (p.name.clone(), p.value.clone(), p.grad.clone()))
        .collect();
    for (pname, value, grad) in tensors {
        let report = check_scalar_fn(
            |probe| {
                if let Some(p) = layer.params_mut().into_iter().find(|p| p.name == pname) {
                    p.value = probe.clone();
                }
                project(&layer.forward(input, mode)?, &weights)
            },
            &value,
            &grad,
            epsilon,
            None,
        )?;
        if let Some(p) = layer.params_mut().into_iter().find(|p| p.name == pname) {
            p.value = value;
        }
        let short = pname.rsplit('.').next().unwrap_or(&pname).to_string();
        out.push(GradCheckEntry::new(format!("{name}:{short}"), &report));
    }
    Ok(out)
}

/// Checks each layer type on small random inputs, plus the fused
/// sigmoid/cross-entropy gradient.
pub fn layer_gradchecks(seed: u64, epsilon: f32) -> Result<Vec<GradCheckEntry>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let train = Mode::Train { dropout_seed: seed };
    let image = uniform(&[2, 7, 7, 3], -1.0, 1.0, seed ^ 1)?;
    let vector = uniform(&[4, 6], -1.0, 1.0, seed ^ 2)?;
    let mut out = Vec::new();

    let conv = Conv2d::new("conv", 3, 3, 4, 1, &mut rng)?;
    out.extend(check_layer("conv2d", Layer::Conv2d(conv), &image, train, epsilon)?);
    let strided = Conv2d::new("conv_s2", 3, 3, 2, 2, &mut rng)?;
    out.extend(check_layer("conv2d_stride2", Layer::Conv2d(strided), &image, train, epsilon)?);
    // distinct values keep the pooled maxima away from ties
    let mut pool_input = image.clone();
    for (i, v) in pool_input.data_mut().iter_mut().enumerate() {
        *v += i as f32 * 1e-2;
    }
    out.extend(check_layer("max_pool", Layer::MaxPool(MaxPool2d::new(2, 2)), &pool_input, train, epsilon)?);
    let dense = Dense::new("dense", 6, 5, &mut rng)?;
    out.extend(check_layer("dense", Layer::Dense(dense), &vector, train, epsilon)?);
    let mut bn = BatchNorm::new("bn", 6)?;
    bn.gamma.value = uniform(&[6], 0.5, 1.5, seed ^ 3)?;
    bn.beta.value = uniform(&[6], -0.5, 0.5, seed ^ 4)?;
    out.extend(check_layer("batch_norm_train", Layer::BatchNorm(bn.clone()), &vector, train, epsilon)?);
    out.extend(check_layer("batch_norm_spatial", Layer::BatchNorm(BatchNorm::new("bn3", 3)?), &image, train, epsilon)?);
    out.extend(check_layer("batch_norm_infer", Layer::BatchNorm(bn), &vector, Mode::Infer, epsilon)?);
    out.extend(check_layer("dropout", Layer::Dropout(Dropout::new("dropout", 0.3)?), &vector, train, epsilon)?);
    out.extend(check_layer("relu", Layer::Relu(Relu::default()), &vector, train, epsilon)?);
    out.extend(check_layer("sigmoid", Layer::Sigmoid(Sigmoid::default()), &vector, train, epsilon)?);

    // d/dz of BCE(sigmoid(z), y) against the analytic p - y
    let logits = uniform(&[8], -3.0, 3.0, seed ^ 5)?;
    let labels: Vec<f32> = (0..8).map(|i| (i % 2) as f32).collect();
    let analytic = Tensor::from_vec(
        &[8],
        logits
            .data()
            .iter()
            .zip(&labels)
            .map(|(&z, &y)| bce_with_logits_grad(sigmoid(z), y))
            .collect::<Result<Vec<f32>>>()?,
    )?;
    let report = check_scalar_fn(
        |z| {
            z.data()
                .iter()
                .zip(&labels)
                .map(|(&z, &y)| bce_loss(sigmoid(z), y).map(f64::from))
                .sum()
        },
        &logits,
        &analytic,
        epsilon,
        None,
    )?;
    out.push(GradCheckEntry::new("bce_with_sigmoid:logits", &report));
    Ok(out)
}

/// Numerically stable `mean(softplus(z) - y z)` in `f64`.
fn mean_loss(logits: &[f32], labels: &[f32]) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let z = f64::from(z);
            let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
            softplus - f64::from(y) * z
        })
        .sum::<f64>()
        / n
}

/// Evenly spaced flat indices, at most `limit` of them.
fn sample_coords(len: usize, limit: usize) -> Vec<usize> {
    if len <= limit {
        return (0..len).collect();
    }
    (0..limit).map(|i| i * len / limit + (i * 7919) % (len / limit).max(1)).collect()
}

/// End-to-end check of the mean cross-entropy against every parameter
/// tensor and both inputs of a freshly initialized model.
///
/// Probes run in inference mode with ReLU active sets and pooling argmaxes
/// frozen at the base point. Backpropagation differentiates exactly that
/// branch, and freezing it removes the kinks an early convolution weight
/// would otherwise cross in thousands of downstream units. Batch-statistic
/// normalization and dropout are covered by [`layer_gradchecks`]; through a
/// whole network their coupling is too curved for an `f32` central
/// difference. At most `samples` coordinates are probed per tensor.
pub fn model_gradcheck(
    config: &ModelConfig,
    batch_size: usize,
    epsilon: f32,
    samples: usize,
) -> Result<Vec<GradCheckEntry>> {
    let mut model = Model::new(config.clone())?;
    model.set_input_gradients(true);
    let seed = config.seed;
    let side = config.input_side;
    let mut batch = Batch::default();
    if config.variant.uses_deep() {
        batch.pixels = Some(uniform(&[batch_size, side, side, 3], 0.0, 1.0, seed ^ 11)?);
    }
    if config.variant.uses_wide() {
        batch.features = Some(uniform(&[batch_size, config.wide_input], 0.0, 1.0, seed ^ 12)?);
    }
    let labels: Vec<f32> = (0..batch_size).map(|i| (i % 2) as f32).collect();
    let mode = Mode::Infer;

    model.zero_grad();
    let logits = model.forward_logits(&batch, mode)?;
    let n = batch_size as f64;
    let grads: Vec<f32> = logits
        .iter()
        .zip(&labels)
        .map(|(&z, &y)| ((1.0 / (1.0 + (-f64::from(z)).exp()) - f64::from(y)) / n) as f32)
        .collect();
    let (grad_pixels, grad_features) = model.backward(&grads)?;
    model.set_frozen(true);

    let mut out = Vec::new();
    let names: Vec<String> = model.params().iter().filter(|p| p.trainable).map(|p| p.name.clone()).collect();
    for name in names {
        let (value, grad) = {
            let p = model.param(&name).expect("listed above");
            (p.value.clone(), p.grad.clone())
        };
        let coords = sample_coords(value.len(), samples);
        let report = check_scalar_fn(
            |probe| {
                model.param_mut(&name).expect("listed above").value = probe.clone();
                Ok(mean_loss(&model.forward_logits(&batch, mode)?, &labels))
            },
            &value,
            &grad,
            epsilon,
            Some(&coords),
        )?;
        model.param_mut(&name).expect("listed above").value = value;
        out.push(GradCheckEntry::new(name, &report));
    }
    let inputs = [
        ("input:pixels", batch.pixels.clone(), grad_pixels),
        ("input:features", batch.features.clone(), grad_features),
    ];
    for (label, point, grad) in inputs {
        let (Some(point), Some(grad)) = (point, grad) else {
            continue;
        };
        let coords = sample_coords(point.len(), samples);
        let is_pixels = label.ends_with("pixels");
        let report = check_scalar_fn(
            |probe| {
                let mut b = batch.clone();
                if is_pixels {
                    b.pixels = Some(probe.clone());
                } else {
                    b.features = Some(probe.clone());
                }
                Ok(mean_loss(&model.forward_logits(&b, mode)?, &labels))
            },
            &point,
            &grad,
            epsilon,
            Some(&coords),
        )?;
        out.push(GradCheckEntry::new(label, &report));
    }
    model.set_frozen(false);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        let entries = layer_gradchecks(7, 1e-3).unwrap();
        assert!(entries.len() >= 20);
        for e in &entries {
            assert!(e.checked > 0, "{} checked nothing", e.name);
            assert!(e.max_relative_error <= 1e-3, "{}: {}", e.name, e.max_relative_error);
        }
    }

    #[test]
    fn sampled_coords_are_in_range_and_distinct() {
        let c = sample_coords(1000, 40);
        assert_eq!(c.len(), 40);
        assert!(c.iter().all(|&i| i < 1000));
        let mut d = c.clone();
        d.dedup();
        assert_eq!(d.len(), 40);
        assert_eq!(sample_coords(5, 40), vec![0, 1, 2, 3, 4]);
    }
}
