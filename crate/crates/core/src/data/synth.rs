use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{AttackType, ManifestRecord, Split};
use super::preprocess::write_png;
use crate::error::{Error, Result};
use crate::nn::mix_seed;
use crate::texture::FaceImage;

/// Rendering and artifact parameters of a synthetic fixture. The two
/// profiles differ in skin palette, lighting, background and artifact
/// strength, so training on one and testing on the other is a
/// cross-dataset shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthProfile {
    A,
    B,
}

impl SynthProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthProfile::A => "a",
            SynthProfile::B => "b",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Some(SynthProfile::A),
            "b" => Some(SynthProfile::B),
            _ => None,
        }
    }

    fn params(self) -> ProfileParams {
        match self {
            SynthProfile::A => ProfileParams {
                skin: [[224.0, 172.0, 138.0], [198.0, 140.0, 106.0], [150.0, 102.0, 72.0]],
                background: [[70.0, 90.0, 120.0], [180.0, 185.0, 190.0]],
                light: [-0.6, -0.5],
                sensor_noise: 2.5,
                moire_freq: (0.18, 0.32),
                moire_amp: (10.0, 16.0),
                blur_sigma: (1.0, 1.4),
                recapture_noise: 1.5,
                levels: (6, 10),
            },
            SynthProfile::B => ProfileParams {
                skin: [[236.0, 196.0, 170.0], [170.0, 120.0, 90.0], [110.0, 76.0, 56.0]],
                background: [[40.0, 40.0, 45.0], [120.0, 150.0, 110.0]],
                light: [0.5, -0.7],
                sensor_noise: 3.5,
                moire_freq: (0.10, 0.22),
                moire_amp: (7.0, 12.0),
                blur_sigma: (0.8, 1.1),
                recapture_noise: 2.0,
                levels: (4, 8),
            },
        }
    }
}

struct ProfileParams {
    skin: [[f64; 3]; 3],
    background: [[f64; 3]; 2],
    light: [f64; 2],
    sensor_noise: f64,
    moire_freq: (f64, f64),
    moire_amp: (f64, f64),
    blur_sigma: (f64, f64),
    recapture_noise: f64,
    levels: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_genuine: usize,
    pub n_spoof: usize,
    pub seed: u64,
    pub side: usize,
    pub profile: SynthProfile,
    pub split: Split,
}

impl SynthConfig {
    pub fn new(n_genuine: usize, n_spoof: usize, seed: u64) -> Self {
        SynthConfig {
            n_genuine,
            n_spoof,
            seed,
            side: 160,
            profile: SynthProfile::A,
            split: Split::Train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_genuine == 0 || self.n_spoof == 0 {
            return Err(Error::Validation("synthetic counts must be at least 1 per class".into()));
        }
        if self.side < 16 {
            return Err(Error::Validation(format!("synthetic side {} is below 16", self.side)));
        }
        Ok(())
    }
}

/// The artifact applied to a spoof sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Artifact {
    Moire,
    Recapture,
    Posterize,
}

impl Artifact {
    pub const ALL: [Artifact; 3] = [Artifact::Moire, Artifact::Recapture, Artifact::Posterize];

    /// Posterization stands in for the reduced gamut of printed photos.
    pub fn attack_type(self) -> AttackType {
        match self {
            Artifact::Moire => AttackType::SyntheticMoire,
            Artifact::Recapture => AttackType::SyntheticRecapture,
            Artifact::Posterize => AttackType::Print,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub record: ManifestRecord,
    pub image: FaceImage,
    pub artifact: Option<Artifact>,
}

/// Per-subject appearance shared by all of that subject's images.
struct Subject {
    skin: [f64; 3],
    center: [f64; 2],
    radii: [f64; 2],
    eye_dy: f64,
    eye_dx: f64,
    mouth_w: f64,
}

fn subject_count(config: &SynthConfig) -> usize {
    (config.n_genuine / 4).max(1)
}

fn subject_id(config: &SynthConfig, s: usize) -> String {
    format!("{}-{}-{s:04}", config.profile.as_str(), config.split.as_str())
}

fn stream(config: &SynthConfig, tag: &str) -> ChaCha8Rng {
    let name = format!("synth/{}/{}/{tag}", config.profile.as_str(), config.split.as_str());
    ChaCha8Rng::seed_from_u64(mix_seed(config.seed, &name))
}

fn draw_subject(config: &SynthConfig, s: usize) -> Subject {
    let p = config.profile.params();
    let mut rng = stream(config, &format!("subject/{s}"));
    let t: f64 = rng.random();
    let (a, b, w) = if t < 0.5 { (p.skin[0], p.skin[1], t * 2.0) } else { (p.skin[1], p.skin[2], t * 2.0 - 1.0) };
    let mut skin = [0.0; 3];
    for c in 0..3 {
        skin[c] = a[c] * (1.0 - w) + b[c] * w + rng.random_range(-8.0..8.0);
    }
    Subject {
        skin,
        center: [rng.random_range(0.46..0.54), rng.random_range(0.47..0.55)],
        radii: [rng.random_range(0.30..0.36), rng.random_range(0.40..0.46)],
        eye_dy: rng.random_range(0.10..0.16),
        eye_dx: rng.random_range(0.12..0.16),
        mouth_w: rng.random_range(0.10..0.15),
    }
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Float RGB raster, row-major with interleaved channels.
type Canvas = Vec<f64>;

/// A smooth-shaded face: gradient background, lit ellipsoid, eyes, mouth
/// and low-frequency skin variation. Sensor noise is added by the caller.
fn render_face(subject: &Subject, side: usize, params: &ProfileParams, rng: &mut ChaCha8Rng) -> Canvas {
    let n = side as f64;
    let bg_top = params.background[0].map(|v| v + rng.random_range(-15.0..15.0));
    let bg_bottom = params.background[1].map(|v| v + rng.random_range(-15.0..15.0));
    let light = [
        params.light[0] + rng.random_range(-0.2..0.2),
        params.light[1] + rng.random_range(-0.2..0.2),
    ];
    let lz = (1.0 - light[0] * light[0] - light[1] * light[1]).max(0.1).sqrt();
    let dx = rng.random_range(-0.02..0.02);
    let dy = rng.random_range(-0.02..0.02);
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(2.0..5.0),
            ]
        })
        .collect();
    let (cx, cy) = (subject.center[0] + dx, subject.center[1] + dy);
    let (rx, ry) = (subject.radii[0], subject.radii[1]);
    let mut canvas = vec![0.0; side * side * 3];
    for y in 0..side {
        for x in 0..side {
            let (u, v) = ((x as f64 + 0.5) / n, (y as f64 + 0.5) / n);
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = bg_top[c] * (1.0 - v) + bg_bottom[c] * v;
            }
            let (ex, ey) = ((u - cx) / rx, (v - cy) / ry);
            let r2 = ex * ex + ey * ey;
            let inside = 1.0 - smoothstep(0.92, 1.0, r2.sqrt());
            if inside > 0.0 {
                let nz = (1.0 - r2.min(1.0)).sqrt();
                let shade = 0.55 + 0.45 * (-(ex * light[0] + ey * light[1]) * 0.8 + nz * lz).max(0.0);
                let texture: f64 = waves.iter().map(|w| w[3] * (2.0 * PI * (w[0] * u + w[1] * v) + w[2]).sin()).sum();
                let mut skin = [0.0; 3];
                for c in 0..3 {
                    skin[c] = subject.skin[c] * shade + texture;
                }
                let feature = |fx: f64, fy: f64, sx: f64, sy: f64| {
                    let d = (((u - fx) / sx).powi(2) + ((v - fy) / sy).powi(2)).sqrt();
                    1.0 - smoothstep(0.7, 1.0, d)
                };
                let eye_y = cy - subject.eye_dy;
                let eyes = feature(cx - subject.eye_dx, eye_y, 0.055, 0.03)
                    .max(feature(cx + subject.eye_dx, eye_y, 0.055, 0.03));
                let mouth = feature(cx, cy + 0.2, subject.mouth_w, 0.035);
                for c in 0..3 {
                    let eye_color = [45.0, 35.0, 30.0][c];
                    let mouth_color = [subject.skin[0] * 0.75, subject.skin[1] * 0.45, subject.skin[2] * 0.45][c];
                    skin[c] = skin[c] * (1.0 - eyes) + eye_color * eyes;
                    skin[c] = skin[c] * (1.0 - mouth) + mouth_color * shade * mouth;
                    px[c] = px[c] * (1.0 - inside) + skin[c] * inside;
                }
            }
            canvas[(y * side + x) * 3..(y * side + x) * 3 + 3].copy_from_slice(&px);
        }
    }
    canvas
}

fn add_noise(canvas: &mut Canvas, sigma: f64, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    canvas.iter_mut().for_each(|v| *v += normal.sample(rng));
}

/// Two nearly parallel gratings whose interference produces beat bands,
/// with a small per-channel phase offset for color fringing.
fn apply_moire(canvas: &mut Canvas, side: usize, params: &ProfileParams, rng: &mut ChaCha8Rng) {
    let f = rng.random_range(params.moire_freq.0..params.moire_freq.1);
    let theta = rng.random_range(0.0..PI);
    let dtheta = rng.random_range(0.03..0.08);
    let amp = rng.random_range(params.moire_amp.0..params.moire_amp.1);
    let phase = rng.random_range(0.0..2.0 * PI);
    let fringe = rng.random_range(0.3..0.9);
    for y in 0..side {
        for x in 0..side {
            let (xf, yf) = (x as f64, y as f64);
            let g1 = 2.0 * PI * f * (xf * theta.cos() + yf * theta.sin());
            let g2 = 2.0 * PI * f * 1.04 * (xf * (theta + dtheta).cos() + yf * (theta + dtheta).sin());
            for c in 0..3 {
                let shift = phase + c as f64 * fringe;
                let v = 0.5 * ((g1 + shift).sin() + (g2 + shift).sin());
                canvas[(y * side + x) * 3 + c] += amp * v;
            }
        }
    }
}

fn gaussian_blur(canvas: &Canvas, side: usize, sigma: f64) -> Canvas {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let clamp = |i: isize| i.clamp(0, side as isize - 1) as usize;
    let pass = |src: &Canvas, horizontal: bool| -> Canvas {
        let mut out = vec![0.0; src.len()];
        for y in 0..side {
            for x in 0..side {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        let o = k as isize - radius;
                        let (sx, sy) = if horizontal {
                            (clamp(x as isize + o), y)
                        } else {
                            (x, clamp(y as isize + o))
                        };
                        acc += w * src[(sy * side + sx) * 3 + c];
                    }
                    out[(y * side + x) * 3 + c] = acc;
                }
            }
        }
        out
    };
    pass(&pass(canvas, true), false)
}

/// Display-then-camera simulation: optical blur, a per-channel affine
/// color shift and fresh sensor noise.
fn apply_recapture(canvas: &mut Canvas, side: usize, params: &ProfileParams, rng: &mut ChaCha8Rng) {
    let sigma = rng.random_range(params.blur_sigma.0..params.blur_sigma.1);
    *canvas = gaussian_blur(canvas, side, sigma);
    let gains: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.85..1.1));
    let offsets: [f64; 3] = std::array::from_fn(|_| rng.random_range(-12.0..12.0));
    for (i, v) in canvas.iter_mut().enumerate() {
        *v = *v * gains[i % 3] + offsets[i % 3];
    }
    add_noise(canvas, params.recapture_noise, rng);
}

fn apply_posterize(canvas: &mut Canvas, params: &ProfileParams, rng: &mut ChaCha8Rng) {
    let levels = f64::from(rng.random_range(params.levels.0..=params.levels.1));
    for v in canvas.iter_mut() {
        let q = (v.clamp(0.0, 255.0) / 255.0 * (levels - 1.0)).round();
        *v = q * 255.0 / (levels - 1.0);
    }
    add_noise(canvas, 1.0, rng);
}

fn quantize(canvas: &Canvas, side: usize, source: String) -> Result<FaceImage> {
    let rgb = canvas.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    FaceImage::new(side, side, rgb, source)
}

fn render_sample(config: &SynthConfig, spoof: bool, index: usize) -> Result<SynthSample> {
    let params = config.profile.params();
    let subjects = subject_count(config);
    let s = if spoof { index % subjects } else { index / 4 % subjects };
    let subject = draw_subject(config, s);
    let class = if spoof { "spoof" } else { "genuine" };
    let mut rng = stream(config, &format!("{class}/{index}"));
    let mut canvas = render_face(&subject, config.side, &params, &mut rng);
    add_noise(&mut canvas, params.sensor_noise, &mut rng);
    let artifact = spoof.then(|| Artifact::ALL[index % 3]);
    match artifact {
        Some(Artifact::Moire) => apply_moire(&mut canvas, config.side, &params, &mut rng),
        Some(Artifact::Recapture) => apply_recapture(&mut canvas, config.side, &params, &mut rng),
        Some(Artifact::Posterize) => apply_posterize(&mut canvas, &params, &mut rng),
        None => {}
    }
    let id = format!("{}/{class}-{index:05}.png", config.split.as_str());
    let attack_type = artifact.map_or(AttackType::None, Artifact::attack_type);
    let record = ManifestRecord::new(id.clone(), u8::from(spoof), subject_id(config, s), attack_type, config.split)?;
    Ok(SynthSample {
        record,
        image: quantize(&canvas, config.side, id)?,
        artifact,
    })
}

/// Generates `n_genuine` genuine faces followed by `n_spoof` spoofs. Spoof
/// artifacts cycle moiré, recapture, posterization. Every sample draws from
/// its own seeded stream, so output is independent of thread count.
pub fn synth_dataset(config: &SynthConfig) -> Result<Vec<SynthSample>> {
    config.validate()?;
    let jobs: Vec<(bool, usize)> = (0..config.n_genuine)
        .map(|i| (false, i))
        .chain((0..config.n_spoof).map(|i| (true, i)))
        .collect();
    jobs.par_iter().map(|&(spoof, i)| render_sample(config, spoof, i)).collect()
}

/// Writes each sample as PNG under `root` and returns records whose paths
/// point at the written files.
pub fn write_samples(root: &Path, samples: &[SynthSample]) -> Result<Vec<ManifestRecord>> {
    samples
        .par_iter()
        .map(|s| {
            let path = root.join(&s.record.id);
            write_png(&path, &s.image)?;
            Ok(ManifestRecord { path, ..s.record.clone() })
        })
        .collect()
}
