//! Progressive multithreaded path tracer driving material evaluation.
//!
//! One pass adds one sample to every pixel. Each pass splits the image
//! into 16x16 tiles handed out through an atomic counter to scoped worker
//! threads. All randomness comes from a counter-based hash of
//! `(seed, pixel, sample, bounce, dimension)`, so with the cache disabled
//! the image does not depend on the thread count.

mod geometry;
mod scene;

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::Serialize;

pub use geometry::{Aabb, Bvh, Hit, Primitive, Ray};
pub use scene::{load_scene, Camera, Light, MaterialRuntime, Mesh, Scene, SceneDoc, SceneError, Sphere};

use crate::imageio::RgbImage;
use crate::matcache::{fmix64, CacheCounters, MaterialCache};
use crate::math::Vec3;
use crate::raycone::{footprint_gradients, RayCone, ShadingPoint, DIFFUSE_SPREAD_GROWTH};
use crate::stackvm::{execute, CacheBinding, EvalStats};

pub const TILE: u32 = 16;
const EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig {
    pub spp: u32,
    pub max_bounces: u32,
    pub threads: usize,
    pub cache_enabled: bool,
    pub n_cells: u64,
    pub n_entries: u64,
    pub mip_offset: i32,
    pub rng_seed: u64,
    pub spread_growth: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            spp: 16,
            max_bounces: 4,
            threads: 1,
            cache_enabled: true,
            n_cells: 100_000,
            n_entries: 4,
            mip_offset: 0,
            rng_seed: 0,
            spread_growth: DIFFUSE_SPREAD_GROWTH,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("invalid render configuration: {0}")]
    Config(String),
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::Config(m.into()));
        if self.spp == 0 {
            return bad("spp must be at least 1");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        if self.cache_enabled && (self.n_cells == 0 || self.n_entries == 0) {
            return bad("cells and entries must be at least 1");
        }
        if !self.spread_growth.is_finite() || self.spread_growth < 0.0 {
            return bad("spread growth must be finite and non-negative");
        }
        Ok(())
    }
}

/// Per-pixel accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBuffers {
    pub width: usize,
    pub height: usize,
    pub radiance: Vec<[f64; 3]>,
    pub nodes_found: Vec<u64>,
    pub sample_count: Vec<u32>,
}

impl FrameBuffers {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        FrameBuffers {
            width,
            height,
            radiance: vec![[0.0; 3]; n],
            nodes_found: vec![0; n],
            sample_count: vec![0; n],
        }
    }

    /// Mean radiance per pixel.
    pub fn image(&self) -> RgbImage {
        let pixels = self
            .radiance
            .iter()
            .zip(&self.sample_count)
            .map(|(r, &n)| {
                let k = if n == 0 { 0.0 } else { 1.0 / n as f64 };
                [(r[0] * k) as f32, (r[1] * k) as f32, (r[2] * k) as f32]
            })
            .collect();
        RgbImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Average cache hits per sample for every pixel.
    pub fn nodes_found_per_sample(&self) -> Vec<f64> {
        self.nodes_found
            .iter()
            .zip(&self.sample_count)
            .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
            .collect()
    }

    pub fn mean_radiance(&self) -> [f64; 3] {
        let img = self.image();
        let mut m = [0.0f64; 3];
        for p in &img.pixels {
            for c in 0..3 {
                m[c] += p[c] as f64;
            }
        }
        m.map(|x| x / img.pixels.len().max(1) as f64)
    }
}

/// Cache behaviour of one progressive pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PassStats {
    pub lookups: u64,
    pub hits: u64,
    pub hit_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RenderStats {
    pub wall_time_s: f64,
    pub samples: u64,
    pub lookups: u64,
    pub hits: u64,
    pub hit_rate: f64,
    pub stores_attempted: u64,
    pub instructions_executed: u64,
    pub inserts_won: u64,
    pub inserts_present: u64,
    pub inserts_lost_race: u64,
    pub inserts_lost_full: u64,
    pub memory_bytes: u64,
    pub passes: Vec<PassStats>,
}

fn hit_rate(hits: u64, lookups: u64) -> f64 {
    if lookups == 0 {
        0.0
    } else {
        hits as f64 / lookups as f64
    }
}

/// Uniform `[0, 1)` from a hash of the sample coordinates.
#[inline]
pub fn sample_1d(seed: u64, pixel: u64, sample: u32, bounce: u32, dim: u32) -> f64 {
    let mut h = fmix64(seed ^ 0x9E37_79B9_7F4A_7C15);
    h = fmix64(h ^ pixel);
    h = fmix64(h ^ ((sample as u64) << 32 | (bounce as u64) << 8 | dim as u64));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct CameraFrame {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half: f64,
    aspect: f64,
    width: u32,
    height: u32,
    cone: RayCone,
}

impl CameraFrame {
    fn new(c: &Camera) -> Self {
        let forward = (c.look_at - c.position).normalize();
        let mut right = forward.cross(c.up);
        if right.length_squared() < 1e-18 {
            right = forward.any_perpendicular();
        }
        let right = right.normalize();
        let up = right.cross(forward);
        let vfov = c.vfov.to_radians();
        CameraFrame {
            origin: c.position,
            forward,
            right,
            up,
            tan_half: (vfov * 0.5).tan(),
            aspect: c.width as f64 / c.height as f64,
            width: c.width,
            height: c.height,
            cone: RayCone::primary(vfov, c.height),
        }
    }

    fn ray(&self, x: u32, y: u32, jx: f64, jy: f64) -> Ray {
        let sx = (2.0 * (x as f64 + jx) / self.width as f64 - 1.0) * self.tan_half * self.aspect;
        let sy = (1.0 - 2.0 * (y as f64 + jy) / self.height as f64) * self.tan_half;
        Ray {
            origin: self.origin,
            dir: (self.forward + self.right * sx + self.up * sy).normalize(),
        }
    }
}

fn tangent_basis(n: Vec3) -> (Vec3, Vec3) {
    let t = n.any_perpendicular().normalize();
    (t, n.cross(t))
}

struct Ctx<'a> {
    scene: &'a Scene,
    bvh: &'a Bvh,
    cam: CameraFrame,
    cfg: &'a RenderConfig,
    cache: Option<CacheBinding<'a>>,
}

struct SampleOut {
    radiance: Vec3,
    stats: EvalStats,
}

impl Ctx<'_> {
    fn direct(&self, hit_p: Vec3, n: Vec3, albedo: Vec3, seed: (u64, u32, u32)) -> Vec3 {
        let (pixel, sample, bounce) = seed;
        let brdf = albedo / PI;
        let mut sum = Vec3::ZERO;
        for (li, light) in self.scene.doc.lights.iter().enumerate() {
            let (to, dist, emitted) = match light {
                Light::Point { position, intensity } => {
                    let d = *position - hit_p;
                    let dist2 = d.length_squared();
                    if dist2 == 0.0 {
                        continue;
                    }
                    let dist = dist2.sqrt();
                    (d / dist, dist, *intensity / dist2)
                }
                Light::Area {
                    corner,
                    edge_u,
                    edge_v,
                    radiance,
                } => {
                    let dim = 2 + 2 * li as u32;
                    let a = sample_1d(self.cfg.rng_seed, pixel, sample, bounce, 16 + dim);
                    let b = sample_1d(self.cfg.rng_seed, pixel, sample, bounce, 17 + dim);
                    let lp = *corner + *edge_u * a + *edge_v * b;
                    let cross = edge_u.cross(*edge_v);
                    let area = cross.length();
                    if area == 0.0 {
                        continue;
                    }
                    let ln = cross / area;
                    let d = lp - hit_p;
                    let dist2 = d.length_squared();
                    if dist2 == 0.0 {
                        continue;
                    }
                    let dist = dist2.sqrt();
                    let to = d / dist;
                    let cos_l = -to.dot(ln);
                    if cos_l <= 0.0 {
                        continue;
                    }
                    (to, dist, *radiance * (cos_l * area / dist2))
                }
            };
            let cos = n.dot(to);
            if cos <= 0.0 {
                continue;
            }
            let shadow = Ray {
                origin: hit_p + n * EPS,
                dir: to,
            };
            if self.bvh.occluded(&shadow, EPS, dist * (1.0 - 1e-7) - EPS) {
                continue;
            }
            sum += brdf.mul_elem(emitted) * cos;
        }
        sum
    }

    fn sample(&self, x: u32, y: u32, s: u32) -> SampleOut {
        let seed = self.cfg.rng_seed;
        let pixel = y as u64 * self.cam.width as u64 + x as u64;
        let mut stats = EvalStats::default();
        let mut ray = self.cam.ray(
            x,
            y,
            sample_1d(seed, pixel, s, 0, 0),
            sample_1d(seed, pixel, s, 0, 1),
        );
        let mut cone = self.cam.cone;
        let mut throughput = Vec3::splat(1.0);
        let mut radiance = Vec3::ZERO;
        for bounce in 0..=self.cfg.max_bounces {
            let Some(hit) = self.bvh.intersect(&ray, EPS, f64::INFINITY) else {
                radiance += throughput.mul_elem(self.scene.doc.env);
                break;
            };
            cone = cone.propagate(hit.t);
            let n = if hit.normal.dot(ray.dir) > 0.0 {
                -hit.normal
            } else {
                hit.normal
            };
            let (g1, g2) = footprint_gradients(cone.width, ray.dir, n, &hit.frame);
            let sp = ShadingPoint {
                position: hit.position,
                normal: n,
                incoming: -ray.dir,
                uv: hit.uv,
                g1,
                g2,
            };
            let material = &self.scene.materials[&hit.material];
            let cache = match material.program.n_slots {
                0 => None,
                _ => self.cache.as_ref(),
            };
            let base = execute(&material.program, &sp, cache, &mut stats).rgb();
            let albedo = Vec3::new(
                base[0].clamp(0.0, 1.0) as f64,
                base[1].clamp(0.0, 1.0) as f64,
                base[2].clamp(0.0, 1.0) as f64,
            );
            radiance += throughput.mul_elem(self.direct(hit.position, n, albedo, (pixel, s, bounce)));
            if bounce == self.cfg.max_bounces {
                break;
            }
            // cosine-weighted continuation; cos/pdf cancels against 1/pi
            let u1 = sample_1d(seed, pixel, s, bounce, 2);
            let u2 = sample_1d(seed, pixel, s, bounce, 3);
            let r = u1.sqrt();
            let phi = 2.0 * PI * u2;
            let (t, b) = tangent_basis(n);
            let dir = (t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u1).max(0.0).sqrt()).normalize();
            throughput = throughput.mul_elem(albedo);
            if throughput.max_component() == 0.0 {
                break;
            }
            ray = Ray {
                origin: hit.position + n * EPS,
                dir,
            };
            cone = cone.diffuse_bounce(self.cfg.spread_growth);
        }
        SampleOut { radiance, stats }
    }
}

/// Render with a fresh cache sized from the config (when enabled).
pub fn render(scene: &Scene, cfg: &RenderConfig) -> Result<(FrameBuffers, RenderStats), RenderError> {
    cfg.validate()?;
    let cache = if cfg.cache_enabled {
        Some(MaterialCache::new(cfg.n_cells, cfg.n_entries).map_err(|e| RenderError::Config(e.to_string()))?)
    } else {
        None
    };
    render_with_cache(scene, cfg, cache.as_ref())
}

/// Render using `cache` (or no cache). The cache's size wins over the config's.
pub fn render_with_cache(
    scene: &Scene,
    cfg: &RenderConfig,
    cache: Option<&MaterialCache>,
) -> Result<(FrameBuffers, RenderStats), RenderError> {
    cfg.validate()?;
    let start = Instant::now();
    let bvh = Bvh::from_scene(&scene.doc);
    let ctx = Ctx {
        scene,
        bvh: &bvh,
        cam: CameraFrame::new(&scene.doc.camera),
        cfg,
        cache: cache.map(|cache| CacheBinding {
            cache,
            mip_offset: cfg.mip_offset,
        }),
    };
    let (w, h) = (scene.width(), scene.height());
    let mut fb = FrameBuffers::new(w as usize, h as usize);
    let tiles_x = w.div_ceil(TILE);
    let tiles_y = h.div_ceil(TILE);
    let n_tiles = (tiles_x * tiles_y) as usize;
    let mut total = EvalStats::default();
    let mut passes = Vec::with_capacity(cfg.spp as usize);

    for s in 0..cfg.spp {
        let next = AtomicUsize::new(0);
        let run = || {
            let mut done: Vec<(u32, Vec<SampleOut>)> = Vec::new();
            loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                if t >= n_tiles {
                    break;
                }
                let (tx, ty) = (t as u32 % tiles_x, t as u32 / tiles_x);
                let mut px = Vec::with_capacity((TILE * TILE) as usize);
                for y in ty * TILE..((ty + 1) * TILE).min(h) {
                    for x in tx * TILE..((tx + 1) * TILE).min(w) {
                        px.push(ctx.sample(x, y, s));
                    }
                }
                done.push((t as u32, px));
            }
            done
        };
        let results: Vec<(u32, Vec<SampleOut>)> = if cfg.threads == 1 {
            run()
        } else {
            std::thread::scope(|scope| {
                let workers: Vec<_> = (0..cfg.threads).map(|_| scope.spawn(&run)).collect();
                workers
                    .into_iter()
                    .flat_map(|w| w.join().expect("render worker panicked"))
                    .collect()
            })
        };
        let mut pass = EvalStats::default();
        for (t, px) in results {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let mut it = px.into_iter();
            for y in ty * TILE..((ty + 1) * TILE).min(h) {
                for x in tx * TILE..((tx + 1) * TILE).min(w) {
                    let out = it.next().expect("tile result size");
                    let i = (y * w + x) as usize;
                    let r = &mut fb.radiance[i];
                    r[0] += out.radiance.x;
                    r[1] += out.radiance.y;
                    r[2] += out.radiance.z;
                    fb.nodes_found[i] += out.stats.nodes_found;
                    fb.sample_count[i] += 1;
                    pass.merge(&out.stats);
                }
            }
        }
        passes.push(PassStats {
            lookups: pass.lookups,
            hits: pass.nodes_found,
            hit_rate: hit_rate(pass.nodes_found, pass.lookups),
        });
        total.merge(&pass);
    }

    let counters = cache.map(|c| c.counters()).unwrap_or(CacheCounters::default());
    let stats = RenderStats {
        wall_time_s: start.elapsed().as_secs_f64(),
        samples: w as u64 * h as u64 * cfg.spp as u64,
        lookups: total.lookups,
        hits: total.nodes_found,
        hit_rate: hit_rate(total.nodes_found, total.lookups),
        stores_attempted: total.stores_attempted,
        instructions_executed: total.instructions_executed,
        inserts_won: counters.inserts_won,
        inserts_present: counters.inserts_present,
        inserts_lost_race: counters.inserts_lost_race,
        inserts_lost_full: counters.inserts_lost_full,
        memory_bytes: cache.map(|c| c.memory_bytes()).unwrap_or(0),
        passes,
    };
    Ok((fb, stats))
}

/// Per-pixel comparison of two images.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageError {
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Fraction of pixels whose largest channel difference is below 0.05.
    pub frac_below_005: f64,
    /// `clamp(scale * |a - b|, 0, 1)`.
    pub diff: RgbImage,
}

pub fn image_error(a: &RgbImage, b: &RgbImage, scale: f32) -> Result<ImageError, RenderError> {
    if a.width != b.width || a.height != b.height {
        return Err(RenderError::SizeMismatch(a.width, a.height, b.width, b.height));
    }
    let mut sum = 0.0f64;
    let mut max = 0.0f64;
    let mut below = 0usize;
    let mut diff = RgbImage::new(a.width, a.height);
    for (i, (pa, pb)) in a.pixels.iter().zip(&b.pixels).enumerate() {
        let mut px_max = 0.0f64;
        for c in 0..3 {
            let d = (pa[c] - pb[c]).abs();
            sum += d as f64;
            px_max = px_max.max(d as f64);
            diff.pixels[i][c] = (scale * d).clamp(0.0, 1.0);
        }
        max = max.max(px_max);
        if px_max < 0.05 {
            below += 1;
        }
    }
    let n = a.pixels.len().max(1) as f64;
    Ok(ImageError {
        mean_abs: sum / (3.0 * n),
        max_abs: max,
        frac_below_005: below as f64 / n,
        diff,
    })
}

pub fn frame_error(a: &FrameBuffers, b: &FrameBuffers, scale: f32) -> Result<ImageError, RenderError> {
    image_error(&a.image(), &b.image(), scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rng_is_uniform_and_keyed() {
        let n = 20_000;
        let mean: f64 = (0..n).map(|i| sample_1d(1, i, 0, 0, 0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert_ne!(sample_1d(1, 5, 0, 0, 0), sample_1d(1, 5, 0, 0, 1));
        assert_ne!(sample_1d(1, 5, 0, 0, 0), sample_1d(2, 5, 0, 0, 0));
        assert_ne!(sample_1d(1, 5, 0, 0, 0), sample_1d(1, 5, 1, 0, 0));
        assert_ne!(sample_1d(1, 5, 0, 0, 0), sample_1d(1, 5, 0, 1, 0));
        assert_eq!(sample_1d(1, 5, 3, 2, 1), sample_1d(1, 5, 3, 2, 1));
    }

    #[test]
    fn diff_image_scales_by_five() {
        let mut a = RgbImage::new(4, 3);
        for p in &mut a.pixels {
            *p = [0.2, 0.3, 0.4];
        }
        let mut b = a.clone();
        for p in &mut b.pixels {
            for c in p.iter_mut() {
                *c += 0.1;
            }
        }
        let e = image_error(&a, &a, 5.0).unwrap();
        assert_eq!((e.mean_abs, e.max_abs), (0.0, 0.0));
        assert!(e.diff.pixels.iter().all(|p| *p == [0.0; 3]));
        let e = image_error(&a, &b, 5.0).unwrap();
        assert!(e.diff.pixels.iter().flatten().all(|&x| (x - 0.5).abs() < 1e-5));
        assert!(image_error(&a, &RgbImage::new(3, 4), 5.0).is_err());
    }
}
