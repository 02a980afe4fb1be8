//! Dataset assembly, the minibatch SGD loop and batch scoring.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_face, ManifestRecord, PreprocessSpec};
use crate::error::{Error, Result};
use crate::eval::{ScoreRecord, ScoreSet};
use crate::model::{Batch, Model};
use crate::nn::{mix_seed, Mode, OptimizerState};
use crate::tensor::Tensor;
use crate::texture::FeatureCache;

/// Group id used for per-video aggregation: one subject presenting one
/// attack type stands in for a capture session.
pub fn group_of(record: &ManifestRecord) -> String {
    format!("{}/{}", record.subject, record.attack_type.as_str())
}

/// In-memory model inputs for a list of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub groups: Vec<String>,
    pub labels: Vec<u8>,
    pub side: usize,
    /// `N x side x side x 3`, scaled to `[0, 1]`.
    pub pixels: Option<Vec<f32>>,
    pub feature_len: usize,
    /// `N x feature_len`.
    pub features: Option<Vec<f32>>,
}

impl Dataset {
    /// Loads pixels (if `with_pixels`) by preprocessing each image, and
    /// features (if `cache` is given) by record id.
    pub fn load(
        records: &[ManifestRecord],
        spec: &PreprocessSpec,
        with_pixels: bool,
        cache: Option<&FeatureCache>,
    ) -> Result<Dataset> {
        if records.is_empty() {
            return Err(Error::InsufficientData("no records to load".into()));
        }
        let pixels = if with_pixels {
            let faces: Vec<Vec<f32>> = records
                .par_iter()
                .map(|r| load_face(r, spec).map(|f| f.normalized()))
                .collect::<Result<_>>()?;
            Some(faces.concat())
        } else {
            None
        };
        let (features, feature_len) = match cache {
            Some(cache) => {
                let index: HashMap<&str, usize> =
                    cache.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
                let len = cache.config.vector_len();
                let mut out = Vec::with_capacity(records.len() * len);
                for r in records {
                    let i = index.get(r.id.as_str()).ok_or_else(|| {
                        Error::Validation(format!("{} is missing from the feature cache", r.id))
                    })?;
                    out.extend_from_slice(&cache.records[*i].vector.values);
                }
                (Some(out), len)
            }
            None => (None, 0),
        };
        Ok(Dataset {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            groups: records.iter().map(group_of).collect(),
            labels: records.iter().map(|r| r.label).collect(),
            side: spec.output_side,
            pixels,
            feature_len,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Model inputs and float labels for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Batch, Vec<f32>)> {
        let n = indices.len();
        let gather = |data: &[f32], width: usize| -> Vec<f32> {
            let mut out = Vec::with_capacity(n * width);
            for &i in indices {
                out.extend_from_slice(&data[i * width..(i + 1) * width]);
            }
            out
        };
        let pixel_len = self.side * self.side * 3;
        let pixels = match &self.pixels {
            Some(p) => Some(Tensor::from_vec(&[n, self.side, self.side, 3], gather(p, pixel_len))?),
            None => None,
        };
        let features = match &self.features {
            Some(f) => Some(Tensor::from_vec(&[n, self.feature_len], gather(f, self.feature_len))?),
            None => None,
        };
        let labels = indices.iter().map(|&i| f32::from(self.labels[i])).collect();
        Ok((Batch { pixels, features }, labels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Validation(format!(
                "batch size {} is below 2, which batch statistics need",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// One optimizer update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossLogEntry {
    /// 1-based.
    pub epoch: usize,
    /// Global update count after this update.
    pub step: u64,
    pub loss: f32,
    /// Learning rate this update used.
    pub lr: f32,
}

pub fn encode_loss_log(entries: &[LossLogEntry]) -> Vec<u8> {
    let mut out = String::from("epoch,step,loss,lr\n");
    for e in entries {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.step, e.loss, e.lr));
    }
    out.into_bytes()
}

/// Sample order of one epoch, a seeded shuffle.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &format!("shuffle/{epoch}")));
    order.shuffle(&mut rng);
    order
}

/// Runs epochs `first_epoch + 1 ..= first_epoch + config.epochs`.
///
/// A trailing batch of a single sample is skipped, since batch statistics
/// of one sample are degenerate. Dropout masks are seeded by the global
/// step, so the run is a pure function of its inputs.
pub fn train_epochs(
    model: &mut Model,
    optimizer: &mut OptimizerState,
    data: &Dataset,
    config: &TrainConfig,
    first_epoch: usize,
    mut on_step: impl FnMut(&LossLogEntry),
) -> Result<Vec<LossLogEntry>> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!("{} training samples", data.len())));
    }
    let mut log = Vec::new();
    for epoch in first_epoch + 1..=first_epoch + config.epochs {
        let order = epoch_order(data.len(), config.seed, epoch);
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let (batch, labels) = data.batch(chunk)?;
            model.zero_grad();
            let mode = Mode::Train {
                dropout_seed: mix_seed(config.seed, &format!("dropout/{}", optimizer.step)),
            };
            let loss = model.train_step_loss(&batch, &labels, mode)?;
            if !loss.is_finite() {
                return Err(Error::NumericFailure(format!("loss became {loss} at step {}", optimizer.step)));
            }
            let lr = optimizer.current_lr();
            optimizer.step(&mut model.params_mut())?;
            let entry = LossLogEntry {
                epoch,
                step: optimizer.step,
                loss,
                lr,
            };
            on_step(&entry);
            log.push(entry);
        }
    }
    Ok(log)
}

/// Spoof probabilities for every sample, in inference mode.
pub fn score_dataset(model: &mut Model, data: &Dataset, batch_size: usize) -> Result<ScoreSet> {
    let mut records = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (batch, _) = data.batch(chunk)?;
        for (&i, p) in chunk.iter().zip(model.predict(&batch)?) {
            records.push(ScoreRecord {
                id: data.ids[i].clone(),
                group: data.groups[i].clone(),
                label: data.labels[i],
                score: f64::from(p),
            });
        }
    }
    ScoreSet::new(records)
}
