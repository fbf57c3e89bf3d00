//! Deterministic 2D gradient noise and fractal sums.
//!
//! Uses Ken Perlin's reference permutation so results are reproducible
//! everywhere; all arithmetic is plain `f32` with no fused operations.

use serde::{Deserialize, Serialize};

const PERM: [u8; 256] = [
    151, 160, 137, 91, 90, 15, 131, 13, 201, 95, 96, 53, 194, 233, 7, 225,
    140, 36, 103, 30, 69, 142, 8, 99, 37, 240, 21, 10, 23, 190, 6, 148,
    247, 120, 234, 75, 0, 26, 197, 62, 94, 252, 219, 203, 117, 35, 11, 32,
    57, 177, 33, 88, 237, 149, 56, 87, 174, 20, 125, 136, 171, 168, 68, 175,
    74, 165, 71, 134, 139, 48, 27, 166, 77, 146, 158, 231, 83, 111, 229, 122,
    60, 211, 133, 230, 220, 105, 92, 41, 55, 46, 245, 40, 244, 102, 143, 54,
    65, 25, 63, 161, 1, 216, 80, 73, 209, 76, 132, 187, 208, 89, 18, 169,
    200, 196, 135, 130, 116, 188, 159, 86, 164, 100, 109, 198, 173, 186, 3, 64,
    52, 217, 226, 250, 124, 123, 5, 202, 38, 147, 118, 126, 255, 82, 85, 212,
    207, 206, 59, 227, 47, 16, 58, 17, 182, 189, 28, 42, 223, 183, 170, 213,
    119, 248, 152, 2, 44, 154, 163, 70, 221, 153, 101, 155, 167, 43, 172, 9,
    129, 22, 39, 253, 19, 98, 108, 110, 79, 113, 224, 232, 178, 185, 112, 104,
    218, 246, 97, 228, 251, 34, 242, 193, 238, 210, 144, 12, 191, 179, 162, 241,
    81, 51, 145, 235, 249, 14, 239, 107, 49, 192, 214, 31, 181, 199, 106, 157,
    184, 84, 204, 176, 115, 121, 50, 45, 127, 4, 150, 254, 138, 236, 205, 93,
    222, 114, 67, 29, 24, 72, 243, 141, 128, 195, 78, 66, 215, 61, 156, 180,
];

#[inline]
fn perm(i: i32) -> i32 {
    PERM[(i & 255) as usize] as i32
}

#[inline]
fn fade(t: f32) -> f32 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(t: f32, a: f32, b: f32) -> f32 {
    a + t * (b - a)
}

#[inline]
fn grad(hash: i32, x: f32, y: f32) -> f32 {
    match hash & 7 {
        0 => x + y,
        1 => -x + y,
        2 => x - y,
        3 => -x - y,
        4 => x,
        5 => -x,
        6 => y,
        _ => -y,
    }
}

/// Improved Perlin noise in 2D. Output roughly in [-1, 1].
pub fn perlin2(x: f32, y: f32) -> f32 {
    let xf = x.floor();
    let yf = y.floor();
    let xi = (xf as i64 & 255) as i32;
    let yi = (yf as i64 & 255) as i32;
    let x = x - xf;
    let y = y - yf;
    let u = fade(x);
    let v = fade(y);
    let a = perm(xi) + yi;
    let b = perm(xi + 1) + yi;
    let aa = perm(a);
    let ab = perm(a + 1);
    let ba = perm(b);
    let bb = perm(b + 1);
    lerp(
        v,
        lerp(u, grad(aa, x, y), grad(ba, x - 1.0, y)),
        lerp(u, grad(ab, x, y - 1.0), grad(bb, x - 1.0, y - 1.0)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbmParams {
    pub octaves: u32,
    pub frequency: f32,
    pub lacunarity: f32,
    pub gain: f32,
}

impl Default for FbmParams {
    fn default() -> Self {
        FbmParams {
            octaves: 4,
            frequency: 4.0,
            lacunarity: 2.0,
            gain: 0.5,
        }
    }
}

/// Fractal sum of `octaves` noise layers remapped to [0, 1].
pub fn fbm(p: &FbmParams, u: f32, v: f32) -> f32 {
    let mut sum = 0.0f32;
    let mut norm = 0.0f32;
    let mut amp = 1.0f32;
    let mut freq = p.frequency;
    for octave in 0..p.octaves {
        // per-octave offset decorrelates the lattice origin
        let off = octave as f32 * 17.31;
        sum += amp * perlin2(u * freq + off, v * freq - off);
        norm += amp;
        amp *= p.gain;
        freq *= p.lacunarity;
    }
    let n = if norm > 0.0 { sum / norm } else { 0.0 };
    (0.5 + 0.5 * n).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_is_a_permutation() {
        let mut seen = [false; 256];
        for &p in PERM.iter() {
            assert!(!seen[p as usize]);
            seen[p as usize] = true;
        }
    }

    #[test]
    fn zero_at_lattice_points() {
        for i in -3..4 {
            for j in -3..4 {
                assert_eq!(perlin2(i as f32, j as f32), 0.0);
            }
        }
    }

    #[test]
    fn huge_and_odd_coordinates_are_finite() {
        for x in [3e9f32, -3e9, f32::MAX, f32::MIN, f32::INFINITY, f32::NAN] {
            assert!(perlin2(x, 0.5).is_finite() || x.is_nan() || x.is_infinite());
        }
        assert_eq!(perlin2(256.25, 0.75), perlin2(0.25, 0.75));
    }

    #[test]
    fn fbm_bounded_and_deterministic() {
        let p = FbmParams { octaves: 7, ..Default::default() };
        for i in 0..500 {
            let (u, v) = (i as f32 * 0.0131, i as f32 * 0.0377 - 3.0);
            let a = fbm(&p, u, v);
            assert!((0.0..=1.0).contains(&a));
            assert_eq!(a.to_bits(), fbm(&p, u, v).to_bits());
        }
    }

    #[test]
    fn noise_is_continuous() {
        let mut prev = perlin2(0.0, 0.3);
        for i in 1..1000 {
            let x = i as f32 * 1e-3;
            let n = perlin2(x, 0.3);
            assert!((n - prev).abs() < 0.01);
            prev = n;
        }
    }
}
