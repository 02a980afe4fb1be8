//! Color-texture descriptors for the wide channel.
//!
//! A face is split into six 8-bit planes (H, S, V, Y, Cb, Cr, with an
//! optional grayscale plane) and each plane is summarised by three
//! L1-normalized histograms: uniform LBP (59 bins), CoALBP (1024 bins) and
//! LPQ (256 bins). The histograms are concatenated descriptor-major into a
//! [`DescriptorVector`]:
//!
//! ```text
//! LBP(H) LBP(S) .. LBP(Cr) | CoALBP(H) .. CoALBP(Cr) | LPQ(H) .. LPQ(Cr)
//! ```
//!
//! giving 354 + 6144 + 1536 = 8034 values with the default plane set.

mod cache;
mod coalbp;
mod color;
mod descriptor;
mod lbp;
mod lpq;

pub use cache::{
    decode_feature_cache, encode_feature_cache, read_feature_cache, write_feature_cache,
    FeatureCache, FeatureCacheHeader, FeatureRecord, CACHE_MAGIC, CACHE_VERSION,
};
pub use coalbp::{
    coalbp_histogram, lbp_plus_codes, COALBP_BINS, COALBP_DIRECTIONS, COALBP_INTERVAL,
};
pub use color::{gray_of, hsv_of, rgb_to_planes, ycbcr_of};
pub use descriptor::{
    describe_face, extract_descriptor_vector, DescriptorConfig, DescriptorKind, DescriptorVector, LayoutEntry,
};
pub use lbp::{lbp_codes, lbp_histogram, uniform_bin_table, LBP_BINS};
pub use lpq::{
    lpq_codes, lpq_coefficients, lpq_histogram, whitening_matrix, LpqParams, LPQ_BINS, ZERO_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An 8-bit RGB face crop, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceImage {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
    pub source: String,
}

impl FaceImage {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>, source: impl Into<String>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!("degenerate {width}x{height} image")));
        }
        if rgb.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        Ok(FaceImage {
            width,
            height,
            rgb,
            source: source.into(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Pixels scaled to `[0, 1]` as an `H x W x 3` slice of `f32`.
    pub fn normalized(&self) -> Vec<f32> {
        self.rgb.iter().map(|&v| f32::from(v) / 255.0).collect()
    }
}

/// A single 8-bit image channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} plane needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaneName {
    H,
    S,
    V,
    Y,
    Cb,
    Cr,
    Gray,
}

impl PlaneName {
    /// The six planes always present, in concatenation order.
    pub const COLOR: [PlaneName; 6] = [
        PlaneName::H,
        PlaneName::S,
        PlaneName::V,
        PlaneName::Y,
        PlaneName::Cb,
        PlaneName::Cr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlaneName::H => "H",
            PlaneName::S => "S",
            PlaneName::V => "V",
            PlaneName::Y => "Y",
            PlaneName::Cb => "Cb",
            PlaneName::Cr => "Cr",
            PlaneName::Gray => "Gray",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [PlaneName::COLOR.as_slice(), &[PlaneName::Gray]]
            .concat()
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

/// The planes derived from one face, keyed by name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColorPlanes {
    planes: Vec<(PlaneName, Plane)>,
}

impl ColorPlanes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: PlaneName, plane: Plane) {
        match self.planes.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = plane,
            None => self.planes.push((name, plane)),
        }
    }

    pub fn get(&self, name: PlaneName) -> Option<&Plane> {
        self.planes.iter().find(|(n, _)| *n == name).map(|(_, p)| p)
    }

    pub fn remove(&mut self, name: PlaneName) -> Option<Plane> {
        let i = self.planes.iter().position(|(n, _)| *n == name)?;
        Some(self.planes.remove(i).1)
    }
}

/// Divides counts by their total; all zeros stay zeros.
pub(crate) fn l1_normalize(counts: &[u32]) -> Vec<f32> {
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    let total = total as f64;
    counts.iter().map(|&c| (f64::from(c) / total) as f32).collect()
}
