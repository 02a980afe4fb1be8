//! Declarative layer descriptions, shape inference and parameter counting.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Only valid padding is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LayerKind {
    Conv {
        kernel: usize,
        stride: usize,
        padding: Padding,
        filters: usize,
        activation: Option<Activation>,
    },
    Dense {
        units: usize,
        activation: Option<Activation>,
    },
    BatchNorm,
    Dropout {
        rate: f32,
    },
    MaxPool {
        window: usize,
        stride: usize,
        padding: Padding,
    },
    Activation(Activation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
        }
    }

    pub fn conv(name: &str, kernel: usize, filters: usize) -> Self {
        Self::new(
            name,
            LayerKind::Conv {
                kernel,
                stride: 1,
                padding: Padding::Valid,
                filters,
                activation: Some(Activation::Relu),
            },
        )
    }

    pub fn dense(name: &str, units: usize, activation: Option<Activation>) -> Self {
        Self::new(name, LayerKind::Dense { units, activation })
    }

    pub fn pool(name: &str) -> Self {
        Self::new(
            name,
            LayerKind::MaxPool {
                window: 2,
                stride: 2,
                padding: Padding::Valid,
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("layer {}: {msg}", self.name)));
        match self.kind {
            LayerKind::Conv {
                kernel,
                stride,
                filters,
                ..
            } => {
                if kernel == 0 || stride == 0 || filters == 0 {
                    return bad(format!("kernel {kernel}, stride {stride}, filters {filters} must all be >= 1"));
                }
            }
            LayerKind::MaxPool { window, stride, .. } => {
                if window == 0 || stride == 0 {
                    return bad(format!("window {window} and stride {stride} must be >= 1"));
                }
            }
            LayerKind::Dense { units, .. } => {
                if units == 0 {
                    return bad("dense layer needs at least one unit".into());
                }
            }
            LayerKind::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("dropout rate {rate} outside [0, 1)"));
                }
            }
            LayerKind::BatchNorm | LayerKind::Activation(_) => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = |what: &str| -> Result<(usize, usize, usize)> {
            match *input {
                [h, w, c] => Ok((h, w, c)),
                _ => Err(Error::InvalidShape(format!(
                    "{}: {what} needs an HxWxC input, got {input:?}",
                    self.name
                ))),
            }
        };
        match self.kind {
            LayerKind::Conv {
                kernel,
                stride,
                filters,
                ..
            } => {
                let (h, w, _) = spatial("convolution")?;
                if h < kernel || w < kernel || (h - kernel) % stride != 0 || (w - kernel) % stride != 0 {
                    return Err(Error::InvalidShape(format!(
                        "{}: {h}x{w} input is not tiled by a {kernel}x{kernel} kernel at stride {stride}",
                        self.name
                    )));
                }
                Ok(vec![(h - kernel) / stride + 1, (w - kernel) / stride + 1, filters])
            }
            LayerKind::MaxPool { window, stride, .. } => {
                let (h, w, c) = spatial("pooling")?;
                if h < window || w < window {
                    return Err(Error::InvalidShape(format!(
                        "{}: {h}x{w} input is smaller than the {window}x{window} window",
                        self.name
                    )));
                }
                Ok(vec![(h - window) / stride + 1, (w - window) / stride + 1, c])
            }
            LayerKind::Dense { units, .. } => Ok(vec![units]),
            LayerKind::BatchNorm | LayerKind::Dropout { .. } | LayerKind::Activation(_) => {
                Ok(input.to_vec())
            }
        }
    }

    /// conv `(k*k*C + 1) * F`, dense `(n + 1) * m`, batchnorm `4 * C`
    /// (scale, shift and both running statistics), everything else 0.
    pub fn param_count(&self, input: &[usize]) -> Result<usize> {
        Ok(match self.kind {
            LayerKind::Conv { kernel, filters, .. } => {
                let c = *input.last().unwrap_or(&0);
                (kernel * kernel * c + 1) * filters
            }
            LayerKind::Dense { units, .. } => (input.iter().product::<usize>() + 1) * units,
            LayerKind::BatchNorm => 4 * input.last().copied().unwrap_or(0),
            _ => 0,
        })
    }

    pub fn details(&self) -> String {
        let act = |a: Option<Activation>| match a {
            Some(Activation::Relu) => " (relu)",
            Some(Activation::Sigmoid) => " (sigmoid)",
            None => "",
        };
        match self.kind {
            LayerKind::Conv {
                kernel,
                stride,
                activation,
                ..
            } => format!("({kernel},{kernel}), S={stride}, P=valid{}", act(activation)),
            LayerKind::MaxPool { window, stride, .. } => {
                format!("({window},{window}), S={stride}, P=valid")
            }
            LayerKind::Dense { units, activation } => format!("{units} neurons{}", act(activation)),
            LayerKind::Dropout { rate } => format!("Rate={rate}"),
            LayerKind::BatchNorm => String::new(),
            LayerKind::Activation(a) => act(Some(a)).trim().to_string(),
        }
    }
}

/// One row of a parameter table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRow {
    pub name: String,
    pub size_in: Vec<usize>,
    pub size_out: Vec<usize>,
    pub details: String,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub rows: Vec<LayerRow>,
    pub total: usize,
}

/// Per-layer and total parameter counts of `specs` applied to `input`.
pub fn count_params(specs: &[LayerSpec], input: &[usize]) -> Result<ParamCount> {
    let mut shape = input.to_vec();
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        let out = spec.output_shape(&shape)?;
        let size_in = match spec.kind {
            LayerKind::Dense { .. } => vec![shape.iter().product()],
            _ => shape.clone(),
        };
        rows.push(LayerRow {
            name: spec.name.clone(),
            size_in,
            size_out: out.clone(),
            details: spec.details(),
            params: spec.param_count(&shape)?,
        });
        shape = out;
    }
    let total = rows.iter().map(|r| r.params).sum();
    Ok(ParamCount { rows, total })
}

/// Formats a shape the way the architecture tables do: `160×160×3`, `512×1`.
pub fn format_shape(shape: &[usize]) -> String {
    match shape {
        [n] => format!("{n}×1"),
        dims => dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("×"),
    }
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>14} {:>14}  {:<28} {:>12}",
            "Layer", "Size-in", "Size-out", "Layer details", "Parameters"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:>14} {:>14}  {:<28} {:>12}",
                r.name,
                format_shape(&r.size_in),
                format_shape(&r.size_out),
                r.details,
                group_thousands(r.params)
            )?;
        }
        write!(f, "{:<16} {:>74}", "Total", group_thousands(self.total))
    }
}

pub fn group_thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
