use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_file, write_atomic};
use crate::texture::FaceImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSpec {
    /// Total margin added around a detected face box, half on each side.
    pub margin: usize,
    pub output_side: usize,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        PreprocessSpec {
            margin: 44,
            output_side: 160,
        }
    }
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        if self.output_side < 16 {
            return Err(Error::Validation(format!(
                "output side {} is below the minimum of 16",
                self.output_side
            )));
        }
        Ok(())
    }
}

/// Axis-aligned face box in pixel coordinates, `x1`/`y1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl FaceBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

/// Locates the face in a raster.
pub trait FaceDetector {
    fn detect(&self, image: &FaceImage, margin: usize) -> Result<FaceBox>;
}

/// Fallback for rasters that are already face crops with the margin
/// included: the box is the central square shrunk by the margin, so that
/// growing it back by the margin yields exactly the central square.
#[derive(Debug, Clone, Copy, Default)]
pub struct CenterCrop;

impl FaceDetector for CenterCrop {
    fn detect(&self, image: &FaceImage, margin: usize) -> Result<FaceBox> {
        let (w, h) = (image.width(), image.height());
        let side = w.min(h);
        let x0 = (w - side) / 2;
        let y0 = (h - side) / 2;
        let inset = (margin / 2).min((side - 1) / 2);
        Ok(FaceBox {
            x0: x0 + inset,
            y0: y0 + inset,
            x1: x0 + side - inset,
            y1: y0 + side - inset,
        })
    }
}

/// Crops `image` to the square region `spec` selects and resizes it.
pub fn preprocess(image: &FaceImage, spec: &PreprocessSpec) -> Result<FaceImage> {
    preprocess_with(image, spec, &CenterCrop)
}

/// Grows the detected box by `margin / 2` on each side (clamped to the
/// raster), takes the centered square of that region and resizes it to
/// `output_side` with corner-aligned bilinear interpolation.
pub fn preprocess_with(image: &FaceImage, spec: &PreprocessSpec, detector: &dyn FaceDetector) -> Result<FaceImage> {
    spec.validate()?;
    let b = detector.detect(image, spec.margin)?;
    if b.x1 <= b.x0 || b.y1 <= b.y0 || b.x1 > image.width() || b.y1 > image.height() {
        return Err(Error::InvalidInput(format!(
            "{}: face box {b:?} is empty or outside the {}x{} raster",
            image.source,
            image.width(),
            image.height()
        )));
    }
    let half = spec.margin / 2;
    let x0 = b.x0.saturating_sub(half);
    let y0 = b.y0.saturating_sub(half);
    let x1 = (b.x1 + half).min(image.width());
    let y1 = (b.y1 + half).min(image.height());
    let side = (x1 - x0).min(y1 - y0);
    let cx = x0 + (x1 - x0 - side) / 2;
    let cy = y0 + (y1 - y0 - side) / 2;
    let cropped = crop(image, cx, cy, side, side)?;
    resize_bilinear(&cropped, spec.output_side, spec.output_side)
}

pub fn crop(image: &FaceImage, x0: usize, y0: usize, width: usize, height: usize) -> Result<FaceImage> {
    if width == 0 || height == 0 || x0 + width > image.width() || y0 + height > image.height() {
        return Err(Error::InvalidInput(format!(
            "crop {width}x{height} at ({x0}, {y0}) does not fit a {}x{} raster",
            image.width(),
            image.height()
        )));
    }
    let mut rgb = Vec::with_capacity(width * height * 3);
    for y in y0..y0 + height {
        let start = (y * image.width() + x0) * 3;
        rgb.extend_from_slice(&image.rgb()[start..start + width * 3]);
    }
    FaceImage::new(width, height, rgb, image.source.clone())
}

/// Corner-aligned bilinear resize: output corners sample input corners
/// exactly, and an unchanged size is a bitwise copy.
pub fn resize_bilinear(image: &FaceImage, width: usize, height: usize) -> Result<FaceImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!("cannot resize to {width}x{height}")));
    }
    if width == image.width() && height == image.height() {
        return Ok(image.clone());
    }
    let coords = |out: usize, src: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|i| {
                let pos = if out == 1 {
                    0.0
                } else {
                    i as f64 * (src - 1) as f64 / (out - 1) as f64
                };
                let lo = (pos.floor() as usize).min(src - 1);
                let hi = (lo + 1).min(src - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let xs = coords(width, image.width());
    let ys = coords(height, image.height());
    let src = image.rgb();
    let sw = image.width();
    let mut rgb = Vec::with_capacity(width * height * 3);
    for &(y_lo, y_hi, fy) in &ys {
        for &(x_lo, x_hi, fx) in &xs {
            for c in 0..3 {
                let at = |x: usize, y: usize| f64::from(src[(y * sw + x) * 3 + c]);
                let top = at(x_lo, y_lo) * (1.0 - fx) + at(x_hi, y_lo) * fx;
                let bottom = at(x_lo, y_hi) * (1.0 - fx) + at(x_hi, y_hi) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                rgb.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    FaceImage::new(width, height, rgb, image.source.clone())
}

/// Decodes any supported raster format to 8-bit RGB.
pub fn decode_image(bytes: &[u8], source: &str) -> Result<FaceImage> {
    let decoded = image::load_from_memory(bytes).map_err(|e| Error::Image {
        path: source.into(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    FaceImage::new(w, h, rgb.into_raw(), source)
}

pub fn read_image(path: &Path) -> Result<FaceImage> {
    decode_image(&read_file(path)?, &path.display().to_string())
}

/// Lossless PNG bytes of an image.
pub fn encode_png(image: &FaceImage) -> Result<Vec<u8>> {
    let raster = RgbImage::from_raw(image.width() as u32, image.height() as u32, image.rgb().to_vec())
        .ok_or_else(|| Error::InvalidInput(format!("{}: raster size mismatch", image.source)))?;
    let mut out = Cursor::new(Vec::new());
    raster.write_to(&mut out, ImageFormat::Png).map_err(|e| Error::Image {
        path: image.source.clone().into(),
        message: e.to_string(),
    })?;
    Ok(out.into_inner())
}

pub fn write_png(path: &Path, image: &FaceImage) -> Result<()> {
    write_atomic(path, &encode_png(image)?)
}
