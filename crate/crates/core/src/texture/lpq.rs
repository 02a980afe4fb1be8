//! Local phase quantization.
//!
//! For every pixel whose `M x M` window fits inside the plane, the
//! short-term Fourier transform
//!
//! ```text
//! F_u(x) = sum_y f(x - y) exp(-j 2 pi u . y),   y in [-r, r]^2, r = (M - 1) / 2
//! ```
//!
//! is taken at `u0 = (a, 0)`, `u1 = (a, a)`, `u2 = (0, a)`, `u3 = (a, -a)`.
//! The vector `[Re F_u0 .. Re F_u3, Im F_u0 .. Im F_u3]`, optionally
//! decorrelated, is binarized with `q = [v >= 0]` and bit `i` of the code is
//! component `i`.
//!
//! Frequencies are integer multiples of `a` along each axis, so pixels
//! sharing the same `u . y` are summed exactly in integers before the single
//! trigonometric weighting. Components closer to zero than
//! [`ZERO_TOLERANCE`] count as zero, which keeps ties stable under rounding.

use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

use super::lbp::require_size;
use super::{l1_normalize, Plane};
use crate::error::{Error, Result};

pub const LPQ_BINS: usize = 256;

/// Components this close below zero still binarize to 1.
pub const ZERO_TOLERANCE: f64 = 1e-9;

/// `(ux, uy)` in units of alpha.
pub(crate) const FREQUENCIES: [(i64, i64); 4] = [(1, 0), (1, 1), (0, 1), (1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpqParams {
    /// Odd window side `M`.
    pub window: usize,
    pub alpha: f64,
    pub whitening: bool,
    /// Correlation of neighboring pixels in the whitening model.
    pub rho: f64,
}

impl Default for LpqParams {
    fn default() -> Self {
        LpqParams {
            window: 3,
            alpha: 1.0 / 7.0,
            whitening: true,
            rho: 0.9,
        }
    }
}

impl LpqParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Validation(format!(
                "LPQ window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::Validation(format!("LPQ alpha must be in (0, 0.5], got {}", self.alpha)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Validation(format!("LPQ rho must be in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }

    fn radius(&self) -> i64 {
        (self.window as i64 - 1) / 2
    }
}

/// `u . o / alpha` for frequency `f` and window offset `o`.
fn phase_index(f: usize, ox: i64, oy: i64) -> i64 {
    let (ux, uy) = FREQUENCIES[f];
    ux * ox + uy * oy
}

/// Weights of each component on the pixel at offset `o` from the center,
/// rows ordered as the coefficient vector, columns over offsets row-major.
fn basis(params: &LpqParams) -> DMatrix<f64> {
    let r = params.radius();
    let m = params.window;
    let two_pi_a = 2.0 * std::f64::consts::PI * params.alpha;
    // F_u(x) = sum_y f(x - y) e^{-j 2pi u.y}; the pixel at x + o has y = -o.
    DMatrix::from_fn(8, m * m, |row, col| {
        let (ox, oy) = ((col % m) as i64 - r, (col / m) as i64 - r);
        let theta = two_pi_a * phase_index(row % 4, ox, oy) as f64;
        if row < 4 {
            theta.cos()
        } else {
            theta.sin()
        }
    })
}

/// Rows of the decorrelating transform: eigenvectors of the coefficient
/// covariance when pixel correlation decays as `rho^|p - q|` (Euclidean),
/// ordered by descending eigenvalue with the largest-magnitude entry
/// made positive.
pub fn whitening_matrix(params: &LpqParams) -> Result<[[f64; 8]; 8]> {
    params.validate()?;
    let m = params.window;
    let r = params.radius();
    let positions: Vec<(f64, f64)> = (0..m * m)
        .map(|i| (((i % m) as i64 - r) as f64, ((i / m) as i64 - r) as f64))
        .collect();
    let cov = DMatrix::from_fn(m * m, m * m, |i, j| {
        let (dx, dy) = (positions[i].0 - positions[j].0, positions[i].1 - positions[j].1);
        params.rho.powf((dx * dx + dy * dy).sqrt())
    });
    let b = basis(params);
    let d = &b * cov * b.transpose();
    // Slightly unequal scaling splits the degenerate eigenvalue pairs so the
    // eigenvectors are well defined.
    let scale = SMatrix::<f64, 8, 8>::from_diagonal(&nalgebra::SVector::<f64, 8>::from_fn(|i, _| {
        1.0 + (7 - i) as f64 * 1e-6
    }));
    let d = SMatrix::<f64, 8, 8>::from_fn(|i, j| d[(i, j)]);
    let d = scale * d * scale;
    let eig = nalgebra::SymmetricEigen::new(d);
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut rows = [[0.0; 8]; 8];
    for (row, &k) in rows.iter_mut().zip(&order) {
        let v = eig.eigenvectors.column(k);
        let pivot = (0..8).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (dst, src) in row.iter_mut().zip(v.iter()) {
            *dst = sign * src;
        }
    }
    Ok(rows)
}

/// Raw (unwhitened) coefficient vectors for every valid pixel, row-major over
/// the `(width - M + 1) x (height - M + 1)` region.
pub fn lpq_coefficients(plane: &Plane, params: &LpqParams) -> Result<Vec<[f64; 8]>> {
    params.validate()?;
    require_size(plane, params.window, "LPQ")?;
    let r = params.radius();
    let span = (4 * r + 1) as usize;
    let two_pi_a = 2.0 * std::f64::consts::PI * params.alpha;
    let trig: Vec<(f64, f64)> = (0..span)
        .map(|i| {
            let theta = two_pi_a * (i as i64 - 2 * r) as f64;
            (theta.cos(), theta.sin())
        })
        .collect();
    let (w, h) = (plane.width as i64, plane.height as i64);
    let mut out = Vec::with_capacity(((w - 2 * r) * (h - 2 * r)) as usize);
    let mut sums = vec![[0i64; 4]; span];
    for cy in r..h - r {
        for cx in r..w - r {
            sums.iter_mut().for_each(|s| *s = [0; 4]);
            for oy in -r..=r {
                for ox in -r..=r {
                    let v = i64::from(plane.at((cx + ox) as usize, (cy + oy) as usize));
                    for (f, s) in (0..4).map(|f| (f, phase_index(f, ox, oy))) {
                        sums[(s + 2 * r) as usize][f] += v;
                    }
                }
            }
            let mut coeffs = [0.0f64; 8];
            for f in 0..4 {
                let (mut re, mut im) = (0.0, 0.0);
                for (s, &(c, sn)) in sums.iter().zip(&trig) {
                    let total = s[f] as f64;
                    re += total * c;
                    im += total * sn;
                }
                coeffs[f] = re;
                coeffs[4 + f] = im;
            }
            out.push(coeffs);
        }
    }
    Ok(out)
}

fn binarize(v: &[f64; 8]) -> u8 {
    v.iter()
        .enumerate()
        .fold(0u8, |code, (bit, &x)| code | (u8::from(x >= -ZERO_TOLERANCE) << bit))
}

/// 8-bit codes per valid pixel.
pub fn lpq_codes(plane: &Plane, params: &LpqParams) -> Result<Vec<u8>> {
    let coeffs = lpq_coefficients(plane, params)?;
    if !params.whitening {
        return Ok(coeffs.iter().map(binarize).collect());
    }
    let w = whitening_matrix(params)?;
    Ok(coeffs
        .iter()
        .map(|c| {
            let mut t = [0.0; 8];
            for (ti, row) in t.iter_mut().zip(&w) {
                *ti = row.iter().zip(c).map(|(a, b)| a * b).sum();
            }
            binarize(&t)
        })
        .collect())
}

/// 256-bin L1-normalized histogram of LPQ codes.
pub fn lpq_histogram(plane: &Plane, params: &LpqParams) -> Result<Vec<f32>> {
    let mut counts = [0u32; LPQ_BINS];
    for code in lpq_codes(plane, params)? {
        counts[code as usize] += 1;
    }
    Ok(l1_normalize(&counts))
}
