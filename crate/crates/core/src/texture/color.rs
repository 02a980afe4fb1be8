//! RGB to HSV / YCbCr / grayscale, all scaled to 8 bits.

use super::{ColorPlanes, FaceImage, Plane, PlaneName};

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Hexcone HSV with hue mapped from `[0, 360)` degrees onto `[0, 255]`.
pub fn hsv_of(rgb: [u8; 3]) -> [u8; 3] {
    let [r, g, b] = rgb.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max * 255.0 };
    [to_u8(hue / 360.0 * 255.0), to_u8(sat), to_u8(max)]
}

/// Full-range ITU-R BT.601 (JFIF) YCbCr.
pub fn ycbcr_of(rgb: [u8; 3]) -> [u8; 3] {
    let [r, g, b] = rgb.map(f64::from);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    [to_u8(y), to_u8(cb), to_u8(cr)]
}

/// BT.601 luma.
pub fn gray_of(rgb: [u8; 3]) -> u8 {
    ycbcr_of(rgb)[0]
}

/// Splits a face into H, S, V, Y, Cb, Cr and grayscale planes.
pub fn rgb_to_planes(image: &FaceImage) -> ColorPlanes {
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let mut bufs: [Vec<u8>; 7] = std::array::from_fn(|_| Vec::with_capacity(n));
    for px in image.rgb().chunks_exact(3) {
        let rgb = [px[0], px[1], px[2]];
        let hsv = hsv_of(rgb);
        let ycc = ycbcr_of(rgb);
        for (buf, v) in bufs.iter_mut().zip(hsv.into_iter().chain(ycc)) {
            buf.push(v);
        }
        bufs[6].push(ycc[0]);
    }
    let names = [
        PlaneName::H,
        PlaneName::S,
        PlaneName::V,
        PlaneName::Y,
        PlaneName::Cb,
        PlaneName::Cr,
        PlaneName::Gray,
    ];
    let mut planes = ColorPlanes::new();
    for (name, data) in names.into_iter().zip(bufs) {
        planes.insert(name, Plane { width: w, height: h, data });
    }
    planes
}
