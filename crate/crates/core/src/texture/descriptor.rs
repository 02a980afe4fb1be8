use serde::{Deserialize, Serialize};

use super::coalbp::{coalbp_histogram, COALBP_BINS};
use super::lbp::{lbp_histogram, LBP_BINS};
use super::lpq::{lpq_histogram, LpqParams, LPQ_BINS};
use super::{rgb_to_planes, ColorPlanes, FaceImage, PlaneName};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Lbp,
    Coalbp,
    Lpq,
}

impl DescriptorKind {
    pub const ALL: [DescriptorKind; 3] = [DescriptorKind::Lbp, DescriptorKind::Coalbp, DescriptorKind::Lpq];

    pub fn as_str(self) -> &'static str {
        match self {
            DescriptorKind::Lbp => "lbp",
            DescriptorKind::Coalbp => "coalbp",
            DescriptorKind::Lpq => "lpq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn bins(self) -> usize {
        match self {
            DescriptorKind::Lbp => LBP_BINS,
            DescriptorKind::Coalbp => COALBP_BINS,
            DescriptorKind::Lpq => LPQ_BINS,
        }
    }
}

/// Which planes to describe and how LPQ is configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorConfig {
    /// Appends a grayscale plane after Cr.
    pub include_gray: bool,
    pub lpq: LpqParams,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            include_gray: false,
            lpq: LpqParams::default(),
        }
    }
}

impl DescriptorConfig {
    pub fn planes(&self) -> Vec<PlaneName> {
        let mut planes = PlaneName::COLOR.to_vec();
        if self.include_gray {
            planes.push(PlaneName::Gray);
        }
        planes
    }

    /// Length of every vector this configuration produces.
    pub fn vector_len(&self) -> usize {
        let per_plane: usize = DescriptorKind::ALL.iter().map(|k| k.bins()).sum();
        per_plane * self.planes().len()
    }

    /// The layout every vector from this configuration carries.
    pub fn layout(&self) -> Vec<LayoutEntry> {
        let mut layout = Vec::new();
        let mut offset = 0;
        for kind in DescriptorKind::ALL {
            for plane in self.planes() {
                layout.push(LayoutEntry {
                    descriptor: kind,
                    plane,
                    offset,
                    length: kind.bins(),
                });
                offset += kind.bins();
            }
        }
        layout
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub descriptor: DescriptorKind,
    pub plane: PlaneName,
    pub offset: usize,
    pub length: usize,
}

/// Concatenated histograms with a map from slice to (descriptor, plane).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    pub values: Vec<f32>,
    pub layout: Vec<LayoutEntry>,
}

impl DescriptorVector {
    /// Checks the layout tiles `values` contiguously from offset 0.
    pub fn new(values: Vec<f32>, layout: Vec<LayoutEntry>) -> Result<Self> {
        let mut expected = 0;
        for e in &layout {
            if e.offset != expected {
                return Err(Error::InvalidInput(format!(
                    "layout entry {}/{} starts at {} instead of {expected}",
                    e.descriptor.as_str(),
                    e.plane.as_str(),
                    e.offset
                )));
            }
            expected += e.length;
        }
        if expected != values.len() {
            return Err(Error::InvalidInput(format!(
                "layout covers {expected} values but the vector has {}",
                values.len()
            )));
        }
        Ok(DescriptorVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, descriptor: DescriptorKind, plane: PlaneName) -> Option<&[f32]> {
        self.layout
            .iter()
            .find(|e| e.descriptor == descriptor && e.plane == plane)
            .map(|e| &self.values[e.offset..e.offset + e.length])
    }

    /// Total length of all slices of one descriptor.
    pub fn descriptor_len(&self, descriptor: DescriptorKind) -> usize {
        self.layout.iter().filter(|e| e.descriptor == descriptor).map(|e| e.length).sum()
    }
}

/// Describes every configured plane with LBP, CoALBP and LPQ, descriptor-major.
pub fn extract_descriptor_vector(planes: &ColorPlanes, config: &DescriptorConfig) -> Result<DescriptorVector> {
    config.lpq.validate()?;
    let names = config.planes();
    let mut size = None;
    for &name in &names {
        let plane = planes
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("missing {} plane", name.as_str())))?;
        match size {
            None => size = Some((plane.width, plane.height)),
            Some(s) if s != (plane.width, plane.height) => {
                return Err(Error::InvalidInput(format!(
                    "{} plane is {}x{} but earlier planes are {}x{}",
                    name.as_str(),
                    plane.width,
                    plane.height,
                    s.0,
                    s.1
                )))
            }
            Some(_) => {}
        }
    }
    let mut values = Vec::with_capacity(config.vector_len());
    for kind in DescriptorKind::ALL {
        for &name in &names {
            let plane = planes.get(name).expect("checked above");
            let hist = match kind {
                DescriptorKind::Lbp => lbp_histogram(plane),
                DescriptorKind::Coalbp => coalbp_histogram(plane),
                DescriptorKind::Lpq => lpq_histogram(plane, &config.lpq),
            }
            .map_err(|e| Error::InvalidInput(format!("{} on {}: {e}", kind.as_str(), name.as_str())))?;
            values.extend(hist);
        }
    }
    DescriptorVector::new(values, config.layout())
}

/// Color conversion followed by [`extract_descriptor_vector`].
pub fn describe_face(image: &FaceImage, config: &DescriptorConfig) -> Result<DescriptorVector> {
    extract_descriptor_vector(&rgb_to_planes(image), config)
}
