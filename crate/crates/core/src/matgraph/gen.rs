//! Seed-reproducible random material graphs for property testing.
//!
//! Leaves are weighted so every dependence class shows up: constants,
//! UV sources and position/normal/incoming sources. Interior nodes draw
//! from the whole operator vocabulary, and roughly one input in seven
//! reuses an existing node so diamonds are common.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::noise::FbmParams;
use super::{
    MaterialGraph, MemoryTextures, Node, NodeId, NodeKind, RampStop, Texture, TextureRef,
    UvChannel, WrapMode,
};
use crate::math::Vec3;
use crate::raycone::ShadingPoint;

/// Depth range the generator stratifies over.
pub const MIN_DEPTH: u32 = 3;
pub const MAX_DEPTH: u32 = 12;

const NODE_BUDGET: usize = 160;

/// Small procedural textures referenced by generated graphs.
pub fn textures() -> MemoryTextures {
    let mut m = MemoryTextures::default();
    m.insert("gen_stripes", stripes());
    m.insert("gen_blobs", blobs());
    m
}

fn stripes() -> Texture {
    let texels = (0..64)
        .map(|i| {
            let (x, y) = (i % 8, i / 8);
            let s = if (x + y) % 3 == 0 { 0.9 } else { 0.2 };
            [s, 0.5 * s, (x as f32) / 8.0]
        })
        .collect();
    Texture::new(8, 8, texels)
}

fn blobs() -> Texture {
    let texels = (0..16 * 4)
        .map(|i| {
            let (x, y) = ((i % 16) as f32, (i / 16) as f32);
            let r = ((x - 8.0).powi(2) + (y - 2.0).powi(2)).sqrt() / 9.0;
            [1.0 - r, r, 0.3]
        })
        .collect();
    Texture::new(16, 4, texels)
}

struct Builder {
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    tex: [TextureRef; 2],
}

impl Builder {
    fn push(&mut self, kind: NodeKind, inputs: Vec<NodeId>) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node { id, kind, inputs });
        id
    }

    fn small_float(&mut self) -> f32 {
        // a few exact zeros exercise the division rule
        if self.rng.gen_bool(0.05) {
            0.0
        } else {
            self.rng.gen_range(-2.0f32..3.0)
        }
    }

    fn leaf(&mut self) -> NodeId {
        if !self.nodes.is_empty() && self.rng.gen_bool(0.15) {
            return self.rng.gen_range(0..self.nodes.len()) as NodeId;
        }
        let roll = self.rng.gen_range(0..100);
        let kind = match roll {
            0..=24 => NodeKind::ConstFloat(self.small_float()),
            25..=39 => NodeKind::ConstColor([
                self.rng.gen_range(0.0..1.5),
                self.rng.gen_range(0.0..1.5),
                self.rng.gen_range(0.0..1.5),
            ]),
            40..=51 => NodeKind::Uv(UvChannel::Uv),
            52..=61 => NodeKind::Uv(UvChannel::U),
            62..=71 => NodeKind::Uv(UvChannel::V),
            72..=81 => NodeKind::Position,
            82..=91 => NodeKind::Normal,
            _ => NodeKind::IncomingDir,
        };
        self.push(kind, vec![])
    }

    fn expr(&mut self, depth: u32) -> NodeId {
        if depth == 0 || self.nodes.len() >= NODE_BUDGET {
            return self.leaf();
        }
        let arity_kind = self.rng.gen_range(0..100);
        let kind = match arity_kind {
            0..=5 => {
                let image = self.tex[self.rng.gen_range(0..2)].clone();
                let wrap = if self.rng.gen_bool(0.5) {
                    WrapMode::Repeat
                } else {
                    WrapMode::Clamp
                };
                NodeKind::TexImage { image, wrap }
            }
            6..=10 => NodeKind::Checker {
                scale: self.rng.gen_range(1.0..9.0),
            },
            11..=15 => NodeKind::NoiseFbm(FbmParams {
                octaves: self.rng.gen_range(1..=3),
                frequency: self.rng.gen_range(1.0..6.0),
                lacunarity: 2.0,
                gain: 0.5,
            }),
            16..=22 => NodeKind::Clamp,
            23..=28 => NodeKind::SinWave,
            29..=33 => {
                let n = self.rng.gen_range(1..4);
                let mut stops: Vec<RampStop> = (0..n)
                    .map(|_| RampStop {
                        pos: self.rng.gen_range(0.0..1.0),
                        rgb: [
                            self.rng.gen_range(0.0..1.0),
                            self.rng.gen_range(0.0..1.0),
                            self.rng.gen_range(0.0..1.0),
                        ],
                    })
                    .collect();
                stops.sort_by(|a, b| a.pos.total_cmp(&b.pos));
                NodeKind::ColorRamp(stops)
            }
            34..=45 => NodeKind::Add,
            46..=54 => NodeKind::Sub,
            55..=68 => NodeKind::Mul,
            69..=74 => NodeKind::Div,
            75..=80 => NodeKind::Dot,
            81..=85 => NodeKind::Power,
            _ => NodeKind::Mix,
        };
        let arity = kind.arity();
        let mut inputs = Vec::with_capacity(arity);
        for slot in 0..arity {
            // the first input carries the full depth so the target is reached
            let d = if slot == 0 {
                depth - 1
            } else {
                self.rng.gen_range(0..depth)
            };
            inputs.push(self.expr(d));
        }
        self.push(kind, inputs)
    }
}

/// Random valid graph whose longest input chain below the BSDF has
/// `depth` operator levels (unless the node budget cuts it short).
pub fn random_graph(seed: u64, depth: u32, textures: &MemoryTextures) -> MaterialGraph {
    let tex_ref = |name: &str| TextureRef {
        name: name.to_string(),
        texture: textures.0[name].clone(),
    };
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
        tex: [tex_ref("gen_stripes"), tex_ref("gen_blobs")],
    };
    let root = b.expr(depth);
    let diffuse = b.push(NodeKind::BsdfDiffuse, vec![root]);
    let out = b.push(NodeKind::BsdfOutput, vec![diffuse]);
    MaterialGraph::new(seed as u32, b.nodes, out).expect("generator emits valid graphs")
}

/// The `i`-th graph of a depth-stratified family.
pub fn stratified_graph(seed: u64, i: usize, textures: &MemoryTextures) -> MaterialGraph {
    let span = (MAX_DEPTH - MIN_DEPTH + 1) as usize;
    let depth = MIN_DEPTH + (i % span) as u32;
    random_graph(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64), depth, textures)
}

/// Random finite shading point with unit normal/incoming and small gradients.
pub fn random_shading_point(rng: &mut impl Rng) -> ShadingPoint {
    let unit = |rng: &mut dyn rand::RngCore| loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let l = v.length();
        if l > 0.1 && l <= 1.0 {
            return v / l;
        }
    };
    let g = 2f64.powf(rng.gen_range(-12.0..0.0));
    ShadingPoint {
        position: Vec3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        ),
        normal: unit(rng),
        incoming: unit(rng),
        uv: [rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5)],
        g1: [g, 0.0],
        g2: [0.0, g * rng.gen_range(1.0..3.0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        let t = textures();
        for i in 0..20 {
            assert_eq!(stratified_graph(7, i, &t), stratified_graph(7, i, &t));
        }
        assert_ne!(stratified_graph(7, 0, &t), stratified_graph(8, 0, &t));
    }

    #[test]
    fn reaches_requested_depth() {
        let t = textures();
        fn height(g: &MaterialGraph, id: NodeId) -> u32 {
            let n = g.node(id);
            n.inputs.iter().map(|&i| height(g, i) + 1).max().unwrap_or(0)
        }
        for depth in MIN_DEPTH..=MAX_DEPTH {
            let g = random_graph(depth as u64, depth, &t);
            let below_bsdf = g.node(g.output_node()).inputs[0];
            let h = height(&g, g.node(below_bsdf).inputs[0]);
            assert!(h >= depth.min(4), "depth {depth} gave height {h}");
        }
    }
}
