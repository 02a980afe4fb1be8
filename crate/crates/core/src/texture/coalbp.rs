//! Co-occurrence of adjacent LBP+ patterns.
//!
//! LBP+ compares the center with its four axis neighbors at distance 1
//! (E, N, W, S on bits 0..3), giving 16 patterns. For each displacement
//! `d` in [`COALBP_DIRECTIONS`] the pairs (pattern at p, pattern at p + d)
//! fill a 16x16 table, and the four tables are concatenated into 1024 bins.

use super::lbp::require_size;
use super::{l1_normalize, Plane};
use crate::error::Result;

pub const COALBP_BINS: usize = 1024;
pub const COALBP_INTERVAL: usize = 2;

/// `(dx, dy)` displacements in units of the interval.
pub const COALBP_DIRECTIONS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (-1, 1)];

const PLUS: [(isize, isize); 4] = [(1, 0), (0, -1), (-1, 0), (0, 1)];

/// LBP+ codes over the `(width - 2) x (height - 2)` interior, row-major,
/// along with the code grid's width and height.
pub fn lbp_plus_codes(plane: &Plane) -> Result<(Vec<u8>, usize, usize)> {
    require_size(plane, 3, "LBP+")?;
    let (w, h) = (plane.width - 2, plane.height - 2);
    let mut codes = Vec::with_capacity(w * h);
    for y in 1..=h {
        for x in 1..=w {
            let center = plane.at(x, y);
            let mut code = 0u8;
            for (bit, &(dx, dy)) in PLUS.iter().enumerate() {
                let n = plane.at((x as isize + dx) as usize, (y as isize + dy) as usize);
                code |= u8::from(n >= center) << bit;
            }
            codes.push(code);
        }
    }
    Ok((codes, w, h))
}

/// 1024-bin histogram, direction-major: bin `dir * 256 + a * 16 + b`
/// counts pattern `a` at p co-occurring with `b` at `p + interval * d`.
/// Normalized over all four directions together.
pub fn coalbp_histogram(plane: &Plane) -> Result<Vec<f32>> {
    let step = COALBP_INTERVAL as isize;
    require_size(plane, COALBP_INTERVAL + 3, "CoALBP")?;
    let (codes, w, h) = lbp_plus_codes(plane)?;
    let mut counts = vec![0u32; COALBP_BINS];
    for (dir, &(dx, dy)) in COALBP_DIRECTIONS.iter().enumerate() {
        let (dx, dy) = (dx * step, dy * step);
        let table = &mut counts[dir * 256..(dir + 1) * 256];
        for y in 0..h as isize {
            let qy = y + dy;
            if qy < 0 || qy >= h as isize {
                continue;
            }
            for x in 0..w as isize {
                let qx = x + dx;
                if qx < 0 || qx >= w as isize {
                    continue;
                }
                let a = codes[(y as usize) * w + x as usize] as usize;
                let b = codes[(qy as usize) * w + qx as usize] as usize;
                table[a * 16 + b] += 1;
            }
        }
    }
    Ok(l1_normalize(&counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Naive oracle working directly in plane coordinates.
    fn oracle(p: &Plane) -> Vec<f32> {
        let code = |x: i64, y: i64| -> Option<usize> {
            if x < 1 || y < 1 || x > p.width as i64 - 2 || y > p.height as i64 - 2 {
                return None;
            }
            let v = |xx: i64, yy: i64| i32::from(p.at(xx as usize, yy as usize));
            let c = v(x, y);
            let bits = [v(x + 1, y), v(x, y - 1), v(x - 1, y), v(x, y + 1)];
            Some(bits.iter().enumerate().map(|(i, &n)| usize::from(n - c >= 0) << i).sum())
        };
        let dirs = [(0i64, 2i64), (2, 0), (2, 2), (-2, 2)];
        let mut counts = vec![0u32; 1024];
        for (d, (dx, dy)) in dirs.into_iter().enumerate() {
            for y in 0..p.height as i64 {
                for x in 0..p.width as i64 {
                    if let (Some(a), Some(b)) = (code(x, y), code(x + dx, y + dy)) {
                        counts[d * 256 + a * 16 + b] += 1;
                    }
                }
            }
        }
        let total: u32 = counts.iter().sum();
        counts.iter().map(|&c| (f64::from(c) / f64::from(total)) as f32).collect()
    }

    #[test]
    fn constant_plane() {
        let h = coalbp_histogram(&Plane::filled(16, 16, 3)).unwrap();
        assert_eq!(h.len(), COALBP_BINS);
        // 14x14 codes: 168 pairs along each axis, 144 along each diagonal
        let total = 2.0 * 168.0 + 2.0 * 144.0;
        for (dir, pairs) in [168.0, 168.0, 144.0, 144.0].into_iter().enumerate() {
            let cell = dir * 256 + 15 * 16 + 15;
            assert_eq!(h[cell], (pairs / total) as f32);
        }
        assert_eq!(h.iter().filter(|&&v| v != 0.0).count(), 4);
    }

    #[test]
    fn plus_bit_order() {
        #[rustfmt::skip]
        let p = Plane::new(3, 3, vec![
            0, 9, 0,
            0, 5, 0,
            0, 0, 0,
        ]).unwrap();
        // only north is not darker
        assert_eq!(lbp_plus_codes(&p).unwrap().0, vec![0b0010]);
    }

    #[test]
    fn too_small() {
        assert!(coalbp_histogram(&Plane::filled(4, 10, 0)).is_err());
        assert!(coalbp_histogram(&Plane::filled(5, 5, 0)).is_ok());
    }

    proptest! {
        #[test]
        fn matches_oracle(w in 5usize..14, h in 5usize..14, data in proptest::collection::vec(0u8..6, 196)) {
            let p = Plane::new(w, h, data[..w * h].iter().map(|v| v * 40).collect()).unwrap();
            prop_assert_eq!(coalbp_histogram(&p).unwrap(), oracle(&p));
        }
    }
}
