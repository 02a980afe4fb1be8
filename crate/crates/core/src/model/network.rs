use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::nn::{bce_with_logits_grad, mean_bce, mix_seed, sigmoid, Layer, Mode, Param, Sequential};
use crate::tensor::Tensor;

/// Model inputs for a batch of `N` faces.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    /// `[N, S, S, 3]` pixels scaled to `[0, 1]`.
    pub pixels: Option<Tensor>,
    /// `[N, D]` texture vectors.
    pub features: Option<Tensor>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.pixels
            .as_ref()
            .or(self.features.as_ref())
            .map_or(0, |t| t.shape()[0])
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The network: optional deep and wide channels and a classifier head.
///
/// Parameter names are prefixed `deep.`, `wide.` and `head.`.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    deep: Option<Sequential>,
    wide: Option<Sequential>,
    /// Ends at the classification pre-activation.
    head: Sequential,
}

fn block_rng(seed: u64, block: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, block))
}

impl Model {
    /// Builds a freshly initialized model. Each block draws from its own
    /// seeded stream, so variants share channel weights for equal seeds.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let deep = if config.variant.uses_deep() {
            let mut seq = Sequential::from_specs(
                "deep",
                &config.deep_specs(),
                &config.input_shape(),
                &mut block_rng(config.seed, "deep"),
            )?;
            if let Some(Layer::Conv2d(first)) = seq.layers.first_mut() {
                first.skip_input_grad = true;
            }
            Some(seq)
        } else {
            None
        };
        let wide = if config.variant.uses_wide() {
            Some(Sequential::from_specs(
                "wide",
                &config.wide_specs(),
                &[config.wide_input],
                &mut block_rng(config.seed, "wide"),
            )?)
        } else {
            None
        };
        let head_stream = match config.variant {
            Variant::Dual => "head",
            Variant::DeepOnly => "head.deep",
            Variant::WideOnly => "head.wide",
        };
        let mut head = Sequential::from_specs(
            "head",
            &config.head_specs(),
            &[config.head_input()],
            &mut block_rng(config.seed, head_stream),
        )?;
        match head.layers.pop() {
            Some(Layer::Sigmoid(_)) => {}
            _ => unreachable!("classification layer ends in a sigmoid"),
        }
        Ok(Model {
            config,
            deep,
            wide,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Whether the first convolution computes its input gradient.
    pub fn set_input_gradients(&mut self, enabled: bool) {
        if let Some(Layer::Conv2d(first)) = self.deep.as_mut().and_then(|d| d.layers.first_mut()) {
            first.skip_input_grad = !enabled;
        }
    }

    /// See [`Layer::set_frozen`].
    pub fn set_frozen(&mut self, frozen: bool) {
        for block in [self.deep.as_mut(), self.wide.as_mut(), Some(&mut self.head)].into_iter().flatten() {
            block.set_frozen(frozen);
        }
    }

    fn expect_batch(t: &Tensor, trailing: &[usize], what: &str) -> Result<()> {
        let shape = t.shape();
        let single = shape == trailing;
        let batched = shape.len() == trailing.len() + 1 && &shape[1..] == trailing && shape[0] > 0;
        if !(single || batched) {
            return Err(Error::InvalidShape(format!(
                "{what}: expected [N, {}] input, got {shape:?}",
                trailing.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(())
    }

    fn batched(t: &Tensor, rank: usize) -> Result<Tensor> {
        if t.ndim() == rank {
            Ok(t.clone())
        } else {
            let mut shape = vec![1];
            shape.extend_from_slice(t.shape());
            t.clone().reshape(&shape)
        }
    }

    /// Pixels `[N, S, S, 3]` (or a single `[S, S, 3]`) to `[N, embedding]`.
    pub fn deep_forward(&mut self, pixels: &Tensor, mode: Mode) -> Result<Tensor> {
        let side = self.config.input_side;
        let deep = self
            .deep
            .as_mut()
            .ok_or_else(|| Error::InvalidInput(format!("{} model has no deep channel", self.config.variant.as_str())))?;
        Self::expect_batch(pixels, &[side, side, 3], "deep channel")?;
        deep.forward(&Self::batched(pixels, 4)?, mode)
    }

    /// Per-sample input and output shape of every deep-channel layer except
    /// activations and flattening, named as in the layer table.
    pub fn deep_shape_trace(&mut self, pixels: &Tensor, mode: Mode) -> Result<Vec<(String, Vec<usize>, Vec<usize>)>> {
        let side = self.config.input_side;
        Self::expect_batch(pixels, &[side, side, 3], "deep channel")?;
        let names: Vec<String> = self.config.deep_specs().into_iter().map(|s| s.name).collect();
        let deep = self
            .deep
            .as_mut()
            .ok_or_else(|| Error::InvalidInput(format!("{} model has no deep channel", self.config.variant.as_str())))?;
        let mut x = Self::batched(pixels, 4)?;
        let mut trace = Vec::new();
        let mut names = names.into_iter();
        for layer in deep.layers.iter_mut() {
            let input_shape = x.shape()[1..].to_vec();
            let mut y = layer.forward(&x, mode)?;
            let recorded = !matches!(layer, Layer::Relu(_) | Layer::Sigmoid(_) | Layer::Flatten(_));
            if recorded {
                let name = names.next().unwrap_or_default();
                let input_shape = if matches!(layer, Layer::Dense(_)) {
                    vec![input_shape.iter().product()]
                } else {
                    input_shape
                };
                trace.push((name, input_shape, y.shape()[1..].to_vec()));
            }
            std::mem::swap(&mut x, &mut y);
        }
        Ok(trace)
    }

    /// Texture vectors `[N, D]` (or a single `[D]`) to `[N, embedding]`.
    pub fn wide_forward(&mut self, features: &Tensor, mode: Mode) -> Result<Tensor> {
        let wide = self
            .wide
            .as_mut()
            .ok_or_else(|| Error::InvalidInput(format!("{} model has no wide channel", self.config.variant.as_str())))?;
        Self::expect_batch(features, &[self.config.wide_input], "wide channel")?;
        let mut x = Self::batched(features, 2)?;
        let scale = self.config.wide_input_scale;
        if scale != 1.0 {
            x.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        wide.forward(&x, mode)
    }

    /// Concatenates the embeddings and runs the head to the classification
    /// pre-activation `[N, 1]`.
    pub fn fuse_logits(&mut self, e_d: Option<&Tensor>, e_w: Option<&Tensor>, mode: Mode) -> Result<Tensor> {
        let e = self.config.embedding;
        let input = match (self.config.variant, e_d, e_w) {
            (Variant::Dual, Some(d), Some(w)) => {
                Self::expect_batch(d, &[e], "deep embedding")?;
                Self::expect_batch(w, &[e], "wide embedding")?;
                let (d, w) = (Self::batched(d, 2)?, Self::batched(w, 2)?);
                let n = d.shape()[0];
                if w.shape()[0] != n {
                    return Err(Error::InvalidShape(format!(
                        "embedding batches differ: {n} deep vs {} wide",
                        w.shape()[0]
                    )));
                }
                let mut data = Vec::with_capacity(n * 2 * e);
                for (dr, wr) in d.data().chunks_exact(e).zip(w.data().chunks_exact(e)) {
                    data.extend_from_slice(dr);
                    data.extend_from_slice(wr);
                }
                Tensor::from_vec(&[n, 2 * e], data)?
            }
            (Variant::DeepOnly, Some(x), _) | (Variant::WideOnly, _, Some(x)) => {
                Self::expect_batch(x, &[e], "embedding")?;
                Self::batched(x, 2)?
            }
            (v, _, _) => {
                return Err(Error::InvalidInput(format!(
                    "{} head is missing a required embedding",
                    v.as_str()
                )))
            }
        };
        self.head.forward(&input, mode)
    }

    /// Spoof probabilities `[N]` from the two embeddings.
    pub fn fuse_and_classify(&mut self, e_d: Option<&Tensor>, e_w: Option<&Tensor>, mode: Mode) -> Result<Vec<f32>> {
        Ok(self.fuse_logits(e_d, e_w, mode)?.data().iter().map(|&z| sigmoid(z)).collect())
    }

    /// Classification pre-activations `[N]` for a batch.
    pub fn forward_logits(&mut self, batch: &Batch, mode: Mode) -> Result<Vec<f32>> {
        let need = |t: Option<&Tensor>, what: &str| {
            t.cloned().ok_or_else(|| Error::InvalidInput(format!("batch is missing {what}")))
        };
        let e_d = match self.config.variant.uses_deep() {
            true => Some(self.deep_forward(&need(batch.pixels.as_ref(), "pixels")?, mode)?),
            false => None,
        };
        let e_w = match self.config.variant.uses_wide() {
            true => Some(self.wide_forward(&need(batch.features.as_ref(), "texture features")?, mode)?),
            false => None,
        };
        if let (Some(d), Some(w)) = (&e_d, &e_w) {
            if d.shape()[0] != w.shape()[0] {
                return Err(Error::InvalidShape(format!(
                    "batch has {} images but {} feature vectors",
                    d.shape()[0],
                    w.shape()[0]
                )));
            }
        }
        Ok(self.fuse_logits(e_d.as_ref(), e_w.as_ref(), mode)?.into_data())
    }

    /// Inference-mode spoof probabilities.
    pub fn predict(&mut self, batch: &Batch) -> Result<Vec<f32>> {
        Ok(self
            .forward_logits(batch, Mode::Infer)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// Backpropagates `dL/dlogit` (one entry per sample) from the most recent
    /// forward pass, accumulating into every parameter gradient. Returns the
    /// input gradients that were computed.
    pub fn backward(&mut self, grad_logits: &[f32]) -> Result<(Option<Tensor>, Option<Tensor>)> {
        let n = grad_logits.len();
        let g = self.head.backward(&Tensor::from_vec(&[n, 1], grad_logits.to_vec())?)?;
        let e = self.config.embedding;
        let (gd, gw) = match self.config.variant {
            Variant::Dual => {
                let mut gd = Vec::with_capacity(n * e);
                let mut gw = Vec::with_capacity(n * e);
                for row in g.data().chunks_exact(2 * e) {
                    gd.extend_from_slice(&row[..e]);
                    gw.extend_from_slice(&row[e..]);
                }
                (
                    Some(Tensor::from_vec(&[n, e], gd)?),
                    Some(Tensor::from_vec(&[n, e], gw)?),
                )
            }
            Variant::DeepOnly => (Some(g), None),
            Variant::WideOnly => (None, Some(g)),
        };
        let dx = match (gd, self.deep.as_mut()) {
            (Some(gd), Some(deep)) => Some(deep.backward(&gd)?),
            _ => None,
        };
        let df = match (gw, self.wide.as_mut()) {
            (Some(gw), Some(wide)) => {
                let mut df = wide.backward(&gw)?;
                let scale = self.config.wide_input_scale;
                if scale != 1.0 {
                    df.data_mut().iter_mut().for_each(|v| *v *= scale);
                }
                Some(df)
            }
            _ => None,
        };
        Ok((dx, df))
    }

    /// Mean binary cross-entropy of a training-mode forward pass, with
    /// gradients accumulated for every parameter.
    pub fn train_step_loss(&mut self, batch: &Batch, labels: &[f32], mode: Mode) -> Result<f32> {
        let logits = self.forward_logits(batch, mode)?;
        if labels.len() != logits.len() {
            return Err(Error::InvalidShape(format!(
                "{} labels for {} samples",
                labels.len(),
                logits.len()
            )));
        }
        let probs: Vec<f32> = logits.iter().map(|&z| sigmoid(z)).collect();
        let loss = mean_bce(&probs, labels)?;
        let n = labels.len() as f32;
        let grads = probs
            .iter()
            .zip(labels)
            .map(|(&p, &y)| bce_with_logits_grad(p, y).map(|g| g / n))
            .collect::<Result<Vec<f32>>>()?;
        self.backward(&grads)?;
        Ok(loss)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for block in [self.deep.as_ref(), self.wide.as_ref(), Some(&self.head)].into_iter().flatten() {
            out.extend(block.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for block in [self.deep.as_mut(), self.wide.as_mut(), Some(&mut self.head)].into_iter().flatten() {
            out.extend(block.params_mut());
        }
        out
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params().into_iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params_mut().into_iter().find(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Scalar count over all stored tensors, running statistics included.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.all_finite())
    }
}

impl PartialEq for Model {
    /// Same configuration and bitwise-identical parameter values.
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params().len() == other.params().len()
            && self.params().iter().zip(other.params()).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape() == b.value.shape()
                    && a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Batch-mean loss helper used by evaluation code paths.
pub fn batch_loss(model: &mut Model, batch: &Batch, labels: &[f32]) -> Result<f32> {
    let probs = model.predict(batch)?;
    mean_bce(&probs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::format_shape;
    use crate::tensor::Fill;

    fn tiny(variant: Variant) -> ModelConfig {
        // uniform test features, not histograms
        ModelConfig {
            wide_input: 30,
            wide_input_scale: 1.0,
            ..ModelConfig::tiny().with_variant(variant)
        }
    }

    fn batch(config: &ModelConfig, n: usize, seed: u64) -> Batch {
        let side = config.input_side;
        Batch {
            pixels: Some(Tensor::create(&[n, side, side, 3], Fill::Uniform { low: 0.0, high: 1.0, seed }).unwrap()),
            features: Some(
                Tensor::create(&[n, config.wide_input], Fill::Uniform { low: 0.0, high: 1.0, seed: seed + 1 }).unwrap(),
            ),
        }
    }

    #[test]
    fn default_shape_chain() {
        let mut model = Model::new(ModelConfig::default().with_variant(Variant::DeepOnly)).unwrap();
        let pixels = Tensor::zeros(&[160, 160, 3]).unwrap();
        let trace = model.deep_shape_trace(&pixels, Mode::Infer).unwrap();
        let arch = ModelConfig::default().architecture().unwrap().deep.unwrap();
        assert_eq!(trace.len(), arch.rows.len());
        for ((name, size_in, size_out), row) in trace.iter().zip(&arch.rows) {
            assert_eq!(name, &row.name);
            assert_eq!(size_in, &row.size_in, "{name}");
            assert_eq!(size_out, &row.size_out, "{name}");
        }
        assert_eq!(format_shape(&trace[14].2), "14×14×128");
        assert_eq!(trace[15].1, vec![25088]);
    }

    #[test]
    fn zero_everything_gives_zero_embeddings_and_half() {
        let mut model = Model::new(tiny(Variant::Dual)).unwrap();
        for p in model.params_mut() {
            if !p.name.ends_with("gamma") && !p.name.ends_with("running_var") {
                p.value.fill(0.0);
            }
        }
        let b = batch(model.config(), 2, 1);
        let zeros_px = Tensor::zeros(b.pixels.as_ref().unwrap().shape()).unwrap();
        let zeros_ft = Tensor::zeros(b.features.as_ref().unwrap().shape()).unwrap();
        let e_d = model.deep_forward(&zeros_px, Mode::Infer).unwrap();
        let e_w = model.wide_forward(&zeros_ft, Mode::Infer).unwrap();
        assert!(e_d.data().iter().all(|&v| v == 0.0));
        assert!(e_w.data().iter().all(|&v| v == 0.0));
        let p = model.fuse_and_classify(Some(&e_d), Some(&e_w), Mode::Infer).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn infer_is_deterministic() {
        let config = tiny(Variant::Dual);
        let b = batch(&config, 3, 4);
        let a = Model::new(config.clone()).unwrap().predict(&b).unwrap();
        let c = Model::new(config).unwrap().predict(&b).unwrap();
        assert_eq!(a, c);
        assert!(a.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn train_mode_is_seeded() {
        let config = tiny(Variant::Dual);
        let b = batch(&config, 3, 4);
        let mut m = Model::new(config).unwrap();
        let x = m.forward_logits(&b, Mode::Train { dropout_seed: 9 }).unwrap();
        let y = m.forward_logits(&b, Mode::Train { dropout_seed: 9 }).unwrap();
        let z = m.forward_logits(&b, Mode::Train { dropout_seed: 10 }).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn wide_length_mismatch() {
        let mut model = Model::new(tiny(Variant::Dual)).unwrap();
        let err = model.wide_forward(&Tensor::zeros(&[2, 29]).unwrap(), Mode::Infer).unwrap_err();
        assert_eq!(err.class(), "invalid-shape");
        let err = model.deep_forward(&Tensor::zeros(&[1, 50, 50, 3]).unwrap(), Mode::Infer).unwrap_err();
        assert_eq!(err.class(), "invalid-shape");
    }

    #[test]
    fn wide_only_ignores_pixels() {
        let config = tiny(Variant::WideOnly);
        let mut b = batch(&config, 2, 3);
        let mut model = Model::new(config).unwrap();
        let with = model.predict(&b).unwrap();
        b.pixels = None;
        assert_eq!(model.predict(&b).unwrap(), with);
        assert!(model.params().iter().all(|p| !p.name.starts_with("deep.")));
    }

    #[test]
    fn ablations_share_channel_weights() {
        let dual = Model::new(tiny(Variant::Dual)).unwrap();
        let deep = Model::new(tiny(Variant::DeepOnly)).unwrap();
        let wide = Model::new(tiny(Variant::WideOnly)).unwrap();
        for other in [&deep, &wide] {
            for p in other.params().into_iter().filter(|p| !p.name.starts_with("head.")) {
                assert_eq!(dual.param(&p.name).unwrap().value, p.value, "{}", p.name);
            }
        }
        assert_eq!(deep.param("head.classification.weight").unwrap().value.shape(), &[64, 1]);
    }

    #[test]
    fn probability_monotone_in_logit() {
        let config = tiny(Variant::Dual);
        let b = batch(&config, 2, 5);
        let mut model = Model::new(config).unwrap();
        let mut last = model.predict(&b).unwrap();
        for _ in 0..5 {
            model.param_mut("head.classification.bias").unwrap().value.data_mut()[0] += 0.5;
            let next = model.predict(&b).unwrap();
            for (a, b) in last.iter().zip(&next) {
                assert!(b > a);
            }
            last = next;
        }
    }

    #[test]
    fn end_to_end_gradients() {
        for variant in Variant::ALL {
            let entries = crate::model::model_gradcheck(&tiny(variant), 4, 1e-2, 12).unwrap();
            for e in &entries {
                assert!(e.checked > 0, "{variant:?} {} checked nothing", e.name);
                assert!(e.max_relative_error <= 1e-3, "{variant:?} {}: {}", e.name, e.max_relative_error);
            }
        }
    }
}
