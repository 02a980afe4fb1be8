//! Run configuration: a TOML file whose every key is optional.
//!
//! ```toml
//! seed = 7
//! epochs = 10
//! batch_size = 32
//! learning_rate = 0.001
//! decay = 0.001
//! momentum = 0.9
//! margin = 44
//!
//! [model]
//! variant = "dual"
//! input_side = 64
//!
//! [descriptor]
//! include_gray = false
//!
//! [paths]
//! manifest = "data/manifest.csv"
//! ```

use std::path::{Path, PathBuf};

use padkit::error::{Error, Result};
use padkit::fsutil::read_file;
use padkit::model::ModelConfig;
use padkit::nn::SgdConfig;
use padkit::texture::DescriptorConfig;
use padkit::train::TrainConfig;
use padkit::data::PreprocessSpec;
use serde::{Deserialize, Serialize};

/// Environment variable consulted when neither flag nor file sets a seed.
pub const SEED_ENV: &str = "PADKIT_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub loss_log: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Unset means: take `PADKIT_SEED`, else 0. Resolved configs always
    /// carry a value.
    pub seed: Option<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub decay: f32,
    pub momentum: f32,
    /// Total margin around the detected face box.
    pub margin: usize,
    /// `seed` and, when a cache is used, `wide_input` are overwritten
    /// during resolution.
    pub model: ModelConfig,
    pub descriptor: DescriptorConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let sgd = SgdConfig::default();
        RunConfig {
            seed: None,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: sgd.learning_rate,
            decay: sgd.decay,
            momentum: sgd.momentum,
            margin: PreprocessSpec::default().margin,
            model: ModelConfig::default(),
            descriptor: DescriptorConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = String::from_utf8(read_file(path)?).map_err(|e| Error::Parse {
            line: 0,
            message: format!("config is not UTF-8: {e}"),
        })?;
        RunConfig::parse(&text)
    }

    /// File config (or defaults), then the seed from `flag`, the file, the
    /// environment or 0, in that order of precedence.
    pub fn resolve(path: Option<&Path>, flag_seed: Option<u64>) -> Result<RunConfig> {
        let mut config = match path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let seed = match (flag_seed, config.seed) {
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
                Err(_) => 0,
            },
        };
        config.seed = Some(seed);
        config.model.seed = seed;
        config.model.wide_input = config.descriptor.vector_len();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.sgd().validate()?;
        self.train().validate()?;
        self.model.validate()?;
        self.preprocess().validate()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            decay: self.decay,
            momentum: self.momentum,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed(),
        }
    }

    /// Faces are cropped to the model's input side.
    pub fn preprocess(&self) -> PreprocessSpec {
        self.preprocess_for(&self.model)
    }

    pub fn preprocess_for(&self, model: &ModelConfig) -> PreprocessSpec {
        PreprocessSpec {
            margin: self.margin,
            output_side: model.input_side,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// `flag` if given, else the configured path, else a validation error
/// naming the flag.
pub fn require_path(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| Error::Validation(format!("missing --{name} (or paths.{} in the config)", name.replace('-', "_"))))
}
