//! Primitives, ray intersection and a median-split BVH.

use std::f64::consts::PI;

use super::scene::SceneDoc;
use crate::math::{Vec2, Vec3};
use crate::raycone::UvFrame;

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

#[derive(Clone, Copy, Debug)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn union(self, o: Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Slab test; true if the ray enters the box before `t_max`.
    #[inline]
    fn hit(&self, origin: Vec3, inv: Vec3, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let ta = (self.min[a] - origin[a]) * inv[a];
            let tb = (self.max[a] - origin[a]) * inv[a];
            let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            // NaN from 0 * inf leaves the bound unchanged
            if lo > t0 {
                t0 = lo;
            }
            if hi < t1 {
                t1 = hi;
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Debug)]
pub enum Primitive {
    Triangle {
        p: [Vec3; 3],
        uv: [Vec2; 3],
        frame: UvFrame,
        normal: Vec3,
        material: u32,
    },
    Sphere {
        center: Vec3,
        radius: f64,
        uv_scale: [f64; 2],
        material: u32,
    },
}

impl Primitive {
    pub fn bounds(&self) -> Aabb {
        match self {
            Primitive::Triangle { p, .. } => Aabb {
                min: p[0].min(p[1]).min(p[2]),
                max: p[0].max(p[1]).max(p[2]),
            },
            Primitive::Sphere { center, radius, .. } => Aabb {
                min: *center - Vec3::splat(*radius),
                max: *center + Vec3::splat(*radius),
            },
        }
    }

    /// Nearest hit distance in `(t_min, t_max)`.
    #[inline]
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        match self {
            Primitive::Triangle { p, .. } => {
                let e1 = p[1] - p[0];
                let e2 = p[2] - p[0];
                let pv = ray.dir.cross(e2);
                let det = e1.dot(pv);
                if det.abs() < 1e-14 {
                    return None;
                }
                let inv = 1.0 / det;
                let tv = ray.origin - p[0];
                let u = tv.dot(pv) * inv;
                if !(0.0..=1.0).contains(&u) {
                    return None;
                }
                let qv = tv.cross(e1);
                let v = ray.dir.dot(qv) * inv;
                if v < 0.0 || u + v > 1.0 {
                    return None;
                }
                let t = e2.dot(qv) * inv;
                (t > t_min && t < t_max).then_some(t)
            }
            Primitive::Sphere { center, radius, .. } => {
                let oc = ray.origin - *center;
                let b = oc.dot(ray.dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > t_min && t < t_max)
            }
        }
    }
}

/// Surface data at a ray hit.
#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub t: f64,
    pub position: Vec3,
    /// Geometric normal, not yet facing the ray.
    pub normal: Vec3,
    pub uv: Vec2,
    pub frame: UvFrame,
    pub material: u32,
}

fn surface(prim: &Primitive, ray: &Ray, t: f64) -> Hit {
    let position = ray.origin + ray.dir * t;
    match prim {
        Primitive::Triangle {
            p,
            uv,
            frame,
            normal,
            material,
        } => {
            // barycentrics from sub-triangle areas
            let n = (p[1] - p[0]).cross(p[2] - p[0]);
            let nn = n.dot(n);
            let b1 = (position - p[0]).cross(p[2] - p[0]).dot(n) / nn;
            let b2 = (p[1] - p[0]).cross(position - p[0]).dot(n) / nn;
            let b0 = 1.0 - b1 - b2;
            Hit {
                t,
                position,
                normal: *normal,
                uv: [
                    b0 * uv[0][0] + b1 * uv[1][0] + b2 * uv[2][0],
                    b0 * uv[0][1] + b1 * uv[1][1] + b2 * uv[2][1],
                ],
                frame: *frame,
                material: *material,
            }
        }
        Primitive::Sphere {
            center,
            radius,
            uv_scale,
            material,
        } => {
            let n = ((position - *center) / *radius).normalize();
            let theta = n.y.clamp(-1.0, 1.0).acos();
            let mut phi = n.z.atan2(n.x);
            if phi < 0.0 {
                phi += 2.0 * PI;
            }
            let (st, ct) = theta.sin_cos();
            let (sp, cp) = phi.sin_cos();
            let dpdu = Vec3::new(-st * sp, 0.0, st * cp) * (2.0 * PI * radius / uv_scale[0]);
            let dpdv = Vec3::new(ct * cp, -st, ct * sp) * (PI * radius / uv_scale[1]);
            Hit {
                t,
                position,
                normal: n,
                uv: [phi / (2.0 * PI) * uv_scale[0], theta / PI * uv_scale[1]],
                frame: UvFrame::from_derivatives(dpdu, dpdv),
                material: *material,
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct BvhNode {
    bounds: Aabb,
    /// Leaf: first primitive; interior: index of the right child (left is next).
    offset: u32,
    /// Leaf primitive count; 0 for interior nodes.
    count: u32,
}

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
pub struct Bvh {
    prims: Vec<Primitive>,
    nodes: Vec<BvhNode>,
}

impl Bvh {
    pub fn build(mut prims: Vec<Primitive>) -> Bvh {
        let mut nodes = Vec::new();
        if !prims.is_empty() {
            let n = prims.len();
            build_node(&mut prims, 0, n, &mut nodes);
        }
        Bvh { prims, nodes }
    }

    pub fn from_scene(doc: &SceneDoc) -> Bvh {
        let mut prims = Vec::new();
        for m in &doc.meshes {
            let pos = |i: u32| {
                let i = i as usize * 3;
                Vec3::new(m.positions[i], m.positions[i + 1], m.positions[i + 2])
            };
            let uv = |i: u32| [m.uvs[i as usize * 2], m.uvs[i as usize * 2 + 1]];
            for tri in m.indices.chunks_exact(3) {
                let p = [pos(tri[0]), pos(tri[1]), pos(tri[2])];
                let n = (p[1] - p[0]).cross(p[2] - p[0]);
                if n.length_squared() == 0.0 {
                    continue;
                }
                let uvs = [uv(tri[0]), uv(tri[1]), uv(tri[2])];
                prims.push(Primitive::Triangle {
                    p,
                    uv: uvs,
                    frame: UvFrame::triangle(p, uvs),
                    normal: n.normalize(),
                    material: m.material,
                });
            }
        }
        for s in &doc.spheres {
            prims.push(Primitive::Sphere {
                center: s.center,
                radius: s.radius,
                uv_scale: s.uv_scale,
                material: s.material,
            });
        }
        Bvh::build(prims)
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    fn traverse(&self, ray: &Ray, t_min: f64, mut t_max: f64, any: bool) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best = None;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !node.bounds.hit(ray.origin, inv, t_max) {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for i in start..start + node.count as usize {
                    if let Some(t) = self.prims[i].intersect(ray, t_min, t_max) {
                        t_max = t;
                        best = Some((i, t));
                        if any {
                            return best;
                        }
                    }
                }
            } else {
                let me = stack[sp] + 1;
                stack[sp] = node.offset;
                stack[sp + 1] = me;
                sp += 2;
            }
        }
        best
    }

    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        self.traverse(ray, t_min, t_max, false)
            .map(|(i, t)| surface(&self.prims[i], ray, t))
    }

    /// True if anything blocks the segment `(t_min, t_max)`.
    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        self.traverse(ray, t_min, t_max, true).is_some()
    }
}

fn build_node(prims: &mut [Primitive], start: usize, end: usize, nodes: &mut Vec<BvhNode>) -> u32 {
    let bounds = prims[start..end]
        .iter()
        .fold(Aabb::EMPTY, |b, p| b.union(p.bounds()));
    let index = nodes.len() as u32;
    nodes.push(BvhNode {
        bounds,
        offset: start as u32,
        count: (end - start) as u32,
    });
    if end - start <= LEAF_SIZE {
        return index;
    }
    let cb = prims[start..end].iter().fold(Aabb::EMPTY, |b, p| {
        let c = p.bounds().center();
        b.union(Aabb { min: c, max: c })
    });
    let extent = cb.max - cb.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    prims[start..end].select_nth_unstable_by(mid - start, |a, b| {
        a.bounds().center()[axis].total_cmp(&b.bounds().center()[axis])
    });
    build_node(prims, start, mid, nodes);
    let right = build_node(prims, mid, end, nodes);
    nodes[index as usize].offset = right;
    nodes[index as usize].count = 0;
    index
}
