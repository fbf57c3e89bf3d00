//! Ray cones, footprint gradients and virtual-mipmap addressing.
//!
//! A cone's width at a hit approximates the pixel footprint. Intersected
//! with the surface it gives an ellipse whose axes, mapped through the
//! surface's UV parameterization, are the texture-coordinate gradients
//! `g1`, `g2`. The virtual texture level is `floor(-log2(min(|g1|, |g2|)))`;
//! its resolution is `2^level` texels per axis, so higher levels are finer.

use crate::math::{norm2, Vec2, Vec3};
use crate::matgraph::Value;

/// Highest virtual mip level; keeps texel indices inside `u32`.
pub const MAX_MIP_LEVEL: u8 = 24;

/// Spread added per diffuse bounce, in radians.
pub const DIFFUSE_SPREAD_GROWTH: f64 = 0.2;

/// Smallest `|cos(theta)|` used when stretching the footprint ellipse.
pub const MIN_COS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayCone {
    /// World-space width at the current point.
    pub width: f64,
    /// Growth rate of the width per unit distance (radians).
    pub spread: f64,
}

impl RayCone {
    /// Cone for a primary ray: zero width at the eye, one pixel's angle.
    pub fn primary(vfov_radians: f64, image_height: u32) -> RayCone {
        let spread = (2.0 * (vfov_radians * 0.5).tan() / image_height as f64).atan();
        RayCone { width: 0.0, spread }
    }

    /// Width after travelling `distance` (small-angle linearization).
    #[inline]
    pub fn propagate(self, distance: f64) -> RayCone {
        RayCone {
            width: self.width + distance * self.spread,
            spread: self.spread,
        }
    }

    #[inline]
    pub fn diffuse_bounce(self, growth: f64) -> RayCone {
        RayCone {
            width: self.width,
            spread: self.spread + growth,
        }
    }
}

/// Local linear UV parameterization of a surface: two tangent vectors
/// and their images in UV space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UvFrame {
    pub t1: Vec3,
    pub t2: Vec3,
    pub duv1: Vec2,
    pub duv2: Vec2,
}

impl UvFrame {
    /// Frame of a triangle from its edges and UV deltas.
    pub fn triangle(p: [Vec3; 3], uv: [Vec2; 3]) -> UvFrame {
        UvFrame {
            t1: p[1] - p[0],
            t2: p[2] - p[0],
            duv1: [uv[1][0] - uv[0][0], uv[1][1] - uv[0][1]],
            duv2: [uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]],
        }
    }

    /// Frame from partial derivatives `dp/du`, `dp/dv`.
    pub fn from_derivatives(dpdu: Vec3, dpdv: Vec3) -> UvFrame {
        UvFrame {
            t1: dpdu,
            t2: dpdv,
            duv1: [1.0, 0.0],
            duv2: [0.0, 1.0],
        }
    }

    /// UV-space image of a world-space vector lying in the tangent plane.
    ///
    /// Solves `w = a t1 + b t2` in the least-squares sense; a rank-deficient
    /// frame falls back to the longer tangent alone.
    pub fn map(&self, w: Vec3) -> Vec2 {
        let g11 = self.t1.dot(self.t1);
        let g12 = self.t1.dot(self.t2);
        let g22 = self.t2.dot(self.t2);
        let r1 = self.t1.dot(w);
        let r2 = self.t2.dot(w);
        let det = g11 * g22 - g12 * g12;
        let (a, b) = if det > 1e-12 * g11 * g22 && det > 0.0 {
            ((g22 * r1 - g12 * r2) / det, (g11 * r2 - g12 * r1) / det)
        } else if g11 >= g22 && g11 > 0.0 {
            (r1 / g11, 0.0)
        } else if g22 > 0.0 {
            (0.0, r2 / g22)
        } else {
            (0.0, 0.0)
        };
        [
            a * self.duv1[0] + b * self.duv2[0],
            a * self.duv1[1] + b * self.duv2[1],
        ]
    }
}

/// World-space semi-axes of the elliptic footprint of a cone of `width`
/// arriving along unit `dir` at a surface with unit `normal`.
pub fn footprint_axes(width: f64, dir: Vec3, normal: Vec3, fallback_tangent: Vec3) -> (Vec3, Vec3) {
    let cos = dir.dot(normal).abs().max(MIN_COS);
    let projected = dir - normal * dir.dot(normal);
    let major_dir = if projected.length_squared() > 1e-24 {
        projected.normalize()
    } else {
        let t = fallback_tangent - normal * fallback_tangent.dot(normal);
        if t.length_squared() > 1e-24 {
            t.normalize()
        } else {
            normal.any_perpendicular()
        }
    };
    let minor_dir = normal.cross(major_dir);
    (
        major_dir * (width / (2.0 * cos)),
        minor_dir * (width / 2.0),
    )
}

/// Texture-coordinate gradients `(g1, g2)` for a cone hitting a surface.
pub fn footprint_gradients(width: f64, dir: Vec3, normal: Vec3, frame: &UvFrame) -> (Vec2, Vec2) {
    let (a1, a2) = footprint_axes(width, dir, normal, frame.t1);
    (frame.map(a1), frame.map(a2))
}

/// Real-valued level `-log2(min(|g1|, |g2|))`.
pub fn lambda(g1: Vec2, g2: Vec2) -> f64 {
    -norm2(g1).min(norm2(g2)).log2()
}

/// `floor(-log2(m))` for finite positive `m`, computed from the bit
/// pattern so powers of two land exactly on their level.
fn floor_neg_log2(m: f64) -> i64 {
    debug_assert!(m > 0.0 && m.is_finite());
    let (m, bias) = if m < f64::MIN_POSITIVE {
        (m * 2f64.powi(64), 64)
    } else {
        (m, 0)
    };
    let bits = m.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64 - 1023 - bias;
    let frac = bits & ((1u64 << 52) - 1);
    if frac == 0 {
        -exp
    } else {
        -exp - 1
    }
}

/// Integer virtual-mip level for a footprint, shifted by `mip_offset`
/// and clamped to `[0, MAX_MIP_LEVEL]`.
pub fn mip_level(g1: Vec2, g2: Vec2, mip_offset: i32) -> u8 {
    let m = norm2(g1).min(norm2(g2));
    if m == 0.0 {
        return MAX_MIP_LEVEL;
    }
    if !m.is_finite() {
        // huge footprint (or garbage): coarsest level
        return (mip_offset as i64).clamp(0, MAX_MIP_LEVEL as i64) as u8;
    }
    let level = floor_neg_log2(m) + mip_offset as i64;
    level.clamp(0, MAX_MIP_LEVEL as i64) as u8
}

/// Texels per axis of the virtual texture at `level`.
#[inline]
pub fn resolution(level: u8) -> u32 {
    1u32 << level.min(MAX_MIP_LEVEL)
}

/// Texel containing `uv` (wrapped to `[0, 1)`) at `level`.
pub fn texel_indices(uv: Vec2, level: u8) -> (u32, u32) {
    let res = resolution(level);
    let index = |x: f64| -> u32 {
        let w = x - x.floor();
        let t = (w * res as f64).floor();
        if t.is_finite() && t >= 0.0 {
            (t as u32).min(res - 1)
        } else {
            0
        }
    };
    (index(uv[0]), index(uv[1]))
}

/// Everything a material sees about the surface point being shaded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadingPoint {
    pub position: Vec3,
    pub normal: Vec3,
    /// Unit vector pointing from the surface toward the viewer.
    pub incoming: Vec3,
    pub uv: Vec2,
    pub g1: Vec2,
    pub g2: Vec2,
}

impl ShadingPoint {
    /// A shading point with an upward normal and a unit footprint.
    pub fn at_uv(u: f64, v: f64) -> ShadingPoint {
        ShadingPoint {
            position: Vec3::new(u, 0.0, v),
            normal: Vec3::new(0.0, 1.0, 0.0),
            incoming: Vec3::new(0.0, 1.0, 0.0),
            uv: [u, v],
            g1: [1.0, 0.0],
            g2: [0.0, 1.0],
        }
    }

    #[inline]
    pub fn uv_value(&self) -> (f32, f32) {
        (self.uv[0] as f32, self.uv[1] as f32)
    }

    #[inline]
    pub fn position_value(&self) -> Value {
        Value::color(self.position.to_f32())
    }

    #[inline]
    pub fn normal_value(&self) -> Value {
        Value::color(self.normal.to_f32())
    }

    #[inline]
    pub fn incoming_value(&self) -> Value {
        Value::color(self.incoming.to_f32())
    }
}
