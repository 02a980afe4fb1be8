//! Uniform local binary patterns, P = 8 and R = 1.
//!
//! Neighbors are taken on the 3x3 square, counter-clockwise from east:
//! E, NE, N, NW, W, SW, S, SE carry bits 0 through 7. Each neighbor sets its
//! bit when it is not darker than the center.

use super::{l1_normalize, Plane};
use crate::error::{Error, Result};

pub const LBP_BINS: usize = 59;

/// `(dx, dy)` per bit, image y pointing down.
pub(crate) const NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Maps all 256 codes onto 59 bins: the 58 uniform codes (at most two
/// circular 0/1 transitions) in increasing order, then one shared bin for
/// the rest.
pub fn uniform_bin_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut next = 0u8;
    for code in 0..=255u8 {
        let transitions = (code ^ code.rotate_left(1)).count_ones();
        table[code as usize] = if transitions <= 2 {
            next += 1;
            next - 1
        } else {
            (LBP_BINS - 1) as u8
        };
    }
    table
}

pub(crate) fn require_size(plane: &Plane, min: usize, what: &str) -> Result<()> {
    if plane.width < min || plane.height < min {
        return Err(Error::InvalidInput(format!(
            "{what} needs at least a {min}x{min} plane, got {}x{}",
            plane.width, plane.height
        )));
    }
    Ok(())
}

/// Raw 8-bit codes for every pixel with a full neighborhood, row-major over
/// the `(width - 2) x (height - 2)` interior.
pub fn lbp_codes(plane: &Plane) -> Result<Vec<u8>> {
    require_size(plane, 3, "LBP")?;
    let (w, h) = (plane.width, plane.height);
    let mut codes = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let center = plane.at(x, y);
            let mut code = 0u8;
            for (bit, &(dx, dy)) in NEIGHBORS.iter().enumerate() {
                let n = plane.at((x as isize + dx) as usize, (y as isize + dy) as usize);
                code |= u8::from(n >= center) << bit;
            }
            codes.push(code);
        }
    }
    Ok(codes)
}

/// 59-bin L1-normalized histogram of uniform LBP codes.
pub fn lbp_histogram(plane: &Plane) -> Result<Vec<f32>> {
    let table = uniform_bin_table();
    let mut counts = [0u32; LBP_BINS];
    for code in lbp_codes(plane)? {
        counts[table[code as usize] as usize] += 1;
    }
    Ok(l1_normalize(&counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane(w: usize, h: usize, data: &[u8]) -> Plane {
        Plane::new(w, h, data.to_vec()).unwrap()
    }

    /// Independent oracle: bit pattern by explicit sign comparisons and
    /// uniformity by walking the circular bit string.
    fn oracle_histogram(p: &Plane) -> Vec<f32> {
        let mut uniform_codes: Vec<u32> = Vec::new();
        for code in 0u32..256 {
            let bits: Vec<u32> = (0..8).map(|i| (code >> i) & 1).collect();
            let changes = (0..8).filter(|&i| bits[i] != bits[(i + 1) % 8]).count();
            if changes <= 2 {
                uniform_codes.push(code);
            }
        }
        assert_eq!(uniform_codes.len(), 58);
        let mut counts = vec![0u32; 59];
        for y in 1..p.height - 1 {
            for x in 1..p.width - 1 {
                let c = i32::from(p.at(x, y));
                let ring = [
                    p.at(x + 1, y),
                    p.at(x + 1, y - 1),
                    p.at(x, y - 1),
                    p.at(x - 1, y - 1),
                    p.at(x - 1, y),
                    p.at(x - 1, y + 1),
                    p.at(x, y + 1),
                    p.at(x + 1, y + 1),
                ];
                let mut code = 0u32;
                for (i, &v) in ring.iter().enumerate() {
                    if i32::from(v) - c >= 0 {
                        code += 1 << i;
                    }
                }
                let bin = uniform_codes.iter().position(|&u| u == code).unwrap_or(58);
                counts[bin] += 1;
            }
        }
        let total: u32 = counts.iter().sum();
        counts.iter().map(|&c| (f64::from(c) / f64::from(total)) as f32).collect()
    }

    #[test]
    fn table_layout() {
        let t = uniform_bin_table();
        assert_eq!(t[0], 0);
        assert_eq!(t[1], 1);
        assert_eq!(t[255], 57);
        assert_eq!(t[0b0000_0101], 58);
        let uniform = t.iter().filter(|&&b| b < 58).count();
        assert_eq!(uniform, 58);
    }

    #[test]
    fn flat_plane_is_all_ones() {
        let h = lbp_histogram(&Plane::filled(10, 10, 77)).unwrap();
        assert_eq!(h.len(), LBP_BINS);
        assert_eq!(h[57], 1.0);
        assert_eq!(h.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn single_bright_center() {
        #[rustfmt::skip]
        let p = plane(3, 3, &[
            0, 0, 0,
            0, 9, 0,
            0, 0, 0,
        ]);
        assert_eq!(lbp_codes(&p).unwrap(), vec![0]);
        let h = lbp_histogram(&p).unwrap();
        assert_eq!(h[0], 1.0);
    }

    #[test]
    fn bit_order_is_counter_clockwise_from_east() {
        // only east is brighter than the center
        #[rustfmt::skip]
        let east = plane(3, 3, &[
            0, 0, 0,
            0, 5, 6,
            0, 0, 0,
        ]);
        assert_eq!(lbp_codes(&east).unwrap(), vec![0b0000_0001]);
        // only north
        #[rustfmt::skip]
        let north = plane(3, 3, &[
            0, 6, 0,
            0, 5, 0,
            0, 0, 0,
        ]);
        assert_eq!(lbp_codes(&north).unwrap(), vec![0b0000_0100]);
        // only south-east
        #[rustfmt::skip]
        let se = plane(3, 3, &[
            0, 0, 0,
            0, 5, 0,
            0, 0, 6,
        ]);
        assert_eq!(lbp_codes(&se).unwrap(), vec![0b1000_0000]);
    }

    #[test]
    fn too_small() {
        assert!(lbp_histogram(&Plane::filled(2, 5, 0)).is_err());
    }

    proptest! {
        #[test]
        fn matches_oracle(w in 3usize..12, h in 3usize..12, seed: u64) {
            let mut state = seed;
            let data: Vec<u8> = (0..w * h)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    // coarse levels so ties are common
                    ((state >> 61) as u8) * 32
                })
                .collect();
            let p = plane(w, h, &data);
            prop_assert_eq!(lbp_histogram(&p).unwrap(), oracle_histogram(&p));
        }

        #[test]
        fn sums_to_one(w in 3usize..12, h in 3usize..12, data in proptest::collection::vec(any::<u8>(), 144)) {
            let p = plane(w, h, &data[..w * h]);
            let sum: f64 = lbp_histogram(&p).unwrap().iter().map(|&v| f64::from(v)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-5);
        }
    }
}
