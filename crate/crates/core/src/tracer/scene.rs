//! Scene description and loading.
//!
//! ```json
//! { "camera": { "position": [0,1,4], "look_at": [0,1,0], "vfov": 40, "width": 256, "height": 256 },
//!   "materials": ["../materials/wall.json"],
//!   "meshes": [ { "positions": [x,y,z, ...], "uvs": [u,v, ...], "indices": [i,j,k, ...], "material": 0 } ],
//!   "spheres": [ { "center": [0,1,0], "radius": 1, "material": 0 } ],
//!   "lights": [ { "type": "point", "position": [0,3,0], "intensity": [5,5,5] },
//!               { "type": "area", "corner": [..], "edge_u": [..], "edge_v": [..], "radiance": [..] } ],
//!   "env": [0.1, 0.1, 0.1] }
//! ```
//!
//! Material paths are relative to the scene file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, AnalyzedGraph, DEFAULT_MIN_SUBTREE};
use crate::math::Vec3;
use crate::matgraph::{load_graph_file, GraphError, MaterialGraph};
use crate::stackvm::{compile, CompileError, CompileOptions, CompiledProgram};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    #[serde(default = "default_up")]
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub vfov: f64,
    pub width: u32,
    pub height: u32,
}

fn default_up() -> Vec3 {
    Vec3::new(0.0, 1.0, 0.0)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Mesh {
    /// Flat `x, y, z` triples.
    pub positions: Vec<f64>,
    /// Flat `u, v` pairs, one per vertex.
    pub uvs: Vec<f64>,
    /// Flat vertex-index triples.
    pub indices: Vec<u32>,
    pub material: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub material: u32,
    /// Multiplies the (longitude, latitude) parameterization.
    #[serde(default = "unit_scale")]
    pub uv_scale: [f64; 2],
}

fn unit_scale() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Light {
    Point { position: Vec3, intensity: Vec3 },
    /// One-sided parallelogram emitting along `edge_u x edge_v`.
    Area {
        corner: Vec3,
        edge_u: Vec3,
        edge_v: Vec3,
        radiance: Vec3,
    },
}

impl Light {
    pub fn scaled(&self, k: f64) -> Light {
        match self.clone() {
            Light::Point { position, intensity } => Light::Point {
                position,
                intensity: intensity * k,
            },
            Light::Area {
                corner,
                edge_u,
                edge_v,
                radiance,
            } => Light::Area {
                corner,
                edge_u,
                edge_v,
                radiance: radiance * k,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub camera: Camera,
    #[serde(default)]
    pub materials: Vec<String>,
    #[serde(default)]
    pub meshes: Vec<Mesh>,
    #[serde(default)]
    pub spheres: Vec<Sphere>,
    #[serde(default)]
    pub lights: Vec<Light>,
    #[serde(default)]
    pub env: Vec3,
}

/// A material ready for rendering.
#[derive(Debug)]
pub struct MaterialRuntime {
    pub source: MaterialGraph,
    pub analyzed: AnalyzedGraph,
    pub program: CompiledProgram,
}

impl MaterialRuntime {
    pub fn build(graph: MaterialGraph, min_subtree: usize) -> Result<Self, CompileError> {
        let (_, analyzed) = analyze(&graph, min_subtree);
        let program = compile(&analyzed, &CompileOptions::default())?;
        Ok(MaterialRuntime {
            source: graph,
            analyzed,
            program,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub doc: SceneDoc,
    pub materials: BTreeMap<u32, Arc<MaterialRuntime>>,
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("material {path}: {source}")]
    Material {
        path: PathBuf,
        #[source]
        source: GraphError,
    },
    #[error("material {id}: {source}")]
    Compile {
        id: u32,
        #[source]
        source: CompileError,
    },
    #[error("material id {0} is defined twice")]
    DuplicateMaterial(u32),
    #[error("{0}")]
    Invalid(String),
}

impl Scene {
    /// Load a scene and every material it lists.
    pub fn load(path: impl AsRef<Path>, min_subtree: usize) -> Result<Scene, SceneError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| SceneError::Io {
            path: path.into(),
            source,
        })?;
        let doc: SceneDoc = serde_json::from_slice(&bytes).map_err(|source| SceneError::Parse {
            path: path.into(),
            source,
        })?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let mut graphs = Vec::new();
        for m in &doc.materials {
            let mpath = dir.join(m);
            let g = load_graph_file(&mpath).map_err(|source| SceneError::Material { path: mpath, source })?;
            graphs.push(g);
        }
        Scene::from_parts(doc, graphs, min_subtree)
    }

    pub fn from_parts(doc: SceneDoc, graphs: Vec<MaterialGraph>, min_subtree: usize) -> Result<Scene, SceneError> {
        let mut materials = BTreeMap::new();
        for g in graphs {
            let id = g.material_id();
            let rt = MaterialRuntime::build(g, min_subtree).map_err(|source| SceneError::Compile { id, source })?;
            if materials.insert(id, Arc::new(rt)).is_some() {
                return Err(SceneError::DuplicateMaterial(id));
            }
        }
        let scene = Scene { doc, materials };
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Invalid(msg));
        let c = &self.doc.camera;
        if c.width == 0 || c.height == 0 {
            return bad(format!("camera resolution {}x{} is empty", c.width, c.height));
        }
        if !(c.vfov > 0.0 && c.vfov < 180.0) {
            return bad(format!("camera vfov {} must be in (0, 180)", c.vfov));
        }
        if (c.look_at - c.position).length_squared() == 0.0 {
            return bad("camera looks at its own position".into());
        }
        for (i, m) in self.doc.meshes.iter().enumerate() {
            if m.positions.len() % 3 != 0 || m.uvs.len() % 2 != 0 || m.indices.len() % 3 != 0 {
                return bad(format!("mesh {i}: array lengths must be multiples of 3/2/3"));
            }
            let nv = m.positions.len() / 3;
            if m.uvs.len() / 2 != nv {
                return bad(format!("mesh {i}: {} uvs for {nv} vertices", m.uvs.len() / 2));
            }
            if let Some(&ix) = m.indices.iter().find(|&&ix| ix as usize >= nv) {
                return bad(format!("mesh {i}: index {ix} out of range ({nv} vertices)"));
            }
            if !self.materials.contains_key(&m.material) {
                return bad(format!("mesh {i}: unknown material {}", m.material));
            }
        }
        for (i, s) in self.doc.spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return bad(format!("sphere {i}: radius must be positive"));
            }
            if !self.materials.contains_key(&s.material) {
                return bad(format!("sphere {i}: unknown material {}", s.material));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.doc.camera.width
    }

    pub fn height(&self) -> u32 {
        self.doc.camera.height
    }

    /// Same scene rendered at another resolution.
    pub fn with_resolution(mut self, width: u32, height: u32) -> Scene {
        self.doc.camera.width = width;
        self.doc.camera.height = height;
        self
    }

    /// Total cache points over all materials.
    pub fn cache_point_count(&self) -> usize {
        self.materials.values().map(|m| m.analyzed.cache_points.len()).sum()
    }
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            position: Vec3::new(0.0, 0.0, 3.0),
            look_at: Vec3::ZERO,
            up: default_up(),
            vfov: 45.0,
            width: 64,
            height: 64,
        }
    }
}

/// Scene with the default min-subtree policy.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    Scene::load(path, DEFAULT_MIN_SUBTREE)
}
