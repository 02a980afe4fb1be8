use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{count_params, Activation, LayerKind, LayerRow, LayerSpec, ParamCount};
use crate::texture::DescriptorConfig;

/// Which channels feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Both embeddings through the interaction block.
    #[default]
    Dual,
    /// Pixel channel with a single sigmoid unit on its embedding.
    DeepOnly,
    /// Texture channel with a single sigmoid unit on its embedding.
    WideOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Dual, Variant::DeepOnly, Variant::WideOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dual => "dual",
            Variant::DeepOnly => "deep-only",
            Variant::WideOnly => "wide-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    pub fn uses_deep(self) -> bool {
        self != Variant::WideOnly
    }

    pub fn uses_wide(self) -> bool {
        self != Variant::DeepOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Side of the square RGB input.
    pub input_side: usize,
    /// Filters of conv1 through conv6.
    pub conv_filters: [usize; 6],
    /// Kernel sides of conv1 through conv6.
    pub conv_kernels: [usize; 6],
    /// Units of the first dense layer after the convolutions.
    pub dense_units: usize,
    /// Size of each channel's embedding.
    pub embedding: usize,
    pub dropout: f32,
    /// Length of the texture vector fed to the wide channel.
    pub wide_input: usize,
    /// Units of the first wide layer; the second has `embedding` units.
    pub wide_units: usize,
    /// Adds batch normalization after each wide layer.
    pub wide_batchnorm: bool,
    /// Multiplies texture features before the first wide layer. Histogram
    /// bins are L1-normalized and sum to 1 per plane.
    pub wide_input_scale: f32,
    /// Units of the two interaction layers.
    pub fusion_units: [usize; 2],
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Dual,
            input_side: 160,
            conv_filters: [32, 32, 64, 64, 128, 128],
            conv_kernels: [3, 3, 3, 3, 5, 5],
            dense_units: 512,
            embedding: 512,
            dropout: 0.1,
            wide_input: DescriptorConfig::default().vector_len(),
            wide_units: 512,
            wide_batchnorm: false,
            wide_input_scale: 64.0,
            fusion_units: [512, 256],
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Every width divided by 8 on a 52x52 input, the smallest side the
    /// convolution and pooling chain accepts.
    pub fn tiny() -> Self {
        ModelConfig {
            input_side: 52,
            conv_filters: [4, 4, 8, 8, 16, 16],
            dense_units: 64,
            embedding: 64,
            wide_units: 64,
            fusion_units: [64, 32],
            ..ModelConfig::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_side, self.input_side, 3]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_side", self.input_side),
            ("dense_units", self.dense_units),
            ("embedding", self.embedding),
            ("wide_input", self.wide_input),
            ("wide_units", self.wide_units),
            ("fusion_units[0]", self.fusion_units[0]),
            ("fusion_units[1]", self.fusion_units[1]),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("model {name} must be >= 1")));
            }
        }
        if !(self.wide_input_scale.is_finite() && self.wide_input_scale > 0.0) {
            return Err(Error::Validation(format!(
                "wide_input_scale must be positive, got {}",
                self.wide_input_scale
            )));
        }
        if self.variant.uses_deep() {
            count_params(&self.deep_specs(), &self.input_shape()).map_err(|e| {
                Error::Validation(format!("input side {} does not fit the network: {e}", self.input_side))
            })?;
        }
        for spec in self.wide_specs().iter().chain(&self.head_specs()) {
            spec.validate()?;
        }
        Ok(())
    }

    /// Convolutional channel: three conv-conv-bn-dropout-pool stages, a
    /// dense layer, batch normalization and the embedding layer.
    pub fn deep_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for stage in 0..3 {
            for j in 0..2 {
                let i = stage * 2 + j;
                specs.push(LayerSpec::conv(
                    &format!("conv{}", i + 1),
                    self.conv_kernels[i],
                    self.conv_filters[i],
                ));
            }
            specs.push(LayerSpec::new(format!("batch_norm{}", stage + 1), LayerKind::BatchNorm));
            specs.push(LayerSpec::new(
                format!("dropout{}", stage + 1),
                LayerKind::Dropout { rate: self.dropout },
            ));
            specs.push(LayerSpec::pool(&format!("max_pool{}", stage + 1)));
        }
        specs.push(LayerSpec::dense("dense1", self.dense_units, Some(Activation::Relu)));
        specs.push(LayerSpec::new("batch_norm4", LayerKind::BatchNorm));
        specs.push(LayerSpec::dense("embedding", self.embedding, Some(Activation::Relu)));
        specs
    }

    pub fn wide_specs(&self) -> Vec<LayerSpec> {
        let mut specs = vec![LayerSpec::dense("dense1", self.wide_units, Some(Activation::Relu))];
        if self.wide_batchnorm {
            specs.push(LayerSpec::new("batch_norm1", LayerKind::BatchNorm));
        }
        specs.push(LayerSpec::dense("dense2", self.embedding, Some(Activation::Relu)));
        if self.wide_batchnorm {
            specs.push(LayerSpec::new("batch_norm2", LayerKind::BatchNorm));
        }
        specs
    }

    /// Classifier on the (concatenated) embeddings. The final sigmoid is
    /// listed for accounting; training applies it fused with the loss.
    pub fn head_specs(&self) -> Vec<LayerSpec> {
        let classification = LayerSpec::dense("classification", 1, Some(Activation::Sigmoid));
        match self.variant {
            Variant::Dual => vec![
                LayerSpec::dense("dense3", self.fusion_units[0], Some(Activation::Relu)),
                LayerSpec::new("batch_norm4", LayerKind::BatchNorm),
                LayerSpec::dense("dense4", self.fusion_units[1], Some(Activation::Relu)),
                classification,
            ],
            Variant::DeepOnly | Variant::WideOnly => vec![classification],
        }
    }

    /// Width of the head's input.
    pub fn head_input(&self) -> usize {
        match self.variant {
            Variant::Dual => 2 * self.embedding,
            _ => self.embedding,
        }
    }

    /// Per-layer accounting of every block the variant uses.
    pub fn architecture(&self) -> Result<Architecture> {
        self.validate()?;
        let deep = if self.variant.uses_deep() {
            Some(count_params(&self.deep_specs(), &self.input_shape())?)
        } else {
            None
        };
        let wide = if self.variant.uses_wide() {
            Some(count_params(&self.wide_specs(), &[self.wide_input])?)
        } else {
            None
        };
        let mut head = count_params(&self.head_specs(), &[self.head_input()])?;
        if self.variant == Variant::Dual {
            head.rows.insert(
                0,
                LayerRow {
                    name: "concat".into(),
                    size_in: vec![2, self.embedding],
                    size_out: vec![2 * self.embedding],
                    details: String::new(),
                    params: 0,
                },
            );
        }
        let total = deep.as_ref().map_or(0, |d| d.total) + wide.as_ref().map_or(0, |w| w.total) + head.total;
        Ok(Architecture {
            deep,
            wide,
            head,
            total,
        })
    }
}

/// Parameter tables for each block of a configured model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub deep: Option<ParamCount>,
    pub wide: Option<ParamCount>,
    pub head: ParamCount,
    pub total: usize,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(deep) = &self.deep {
            writeln!(f, "Deep channel\n{deep}\n")?;
        }
        if let Some(wide) = &self.wide {
            writeln!(f, "Wide channel\n{wide}\n")?;
        }
        writeln!(f, "Classifier\n{}\n", self.head)?;
        write!(f, "Model total: {}", crate::nn::group_thousands(self.total))
    }
}
