//! JSON interchange for material graphs.
//!
//! ```json
//! { "material_id": 3,
//!   "nodes": [ { "id": 0, "kind": "ConstColor", "params": { "rgb": [0.5, 0.5, 0.5] } },
//!              { "id": 1, "kind": "BsdfDiffuse", "inputs": [0] },
//!              { "id": 2, "kind": "BsdfOutput", "inputs": [1] } ],
//!   "output": 2 }
//! ```
//!
//! Division by zero anywhere in a graph evaluates to 0.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use super::noise::FbmParams;
use super::{
    DirTextures, GraphError, MaterialGraph, Node, NodeId, NodeKind, RampStop, TextureRef,
    TextureSource, UvChannel, WrapMode,
};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    material_id: u32,
    nodes: Vec<NodeDoc>,
    output: NodeId,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: NodeId,
    kind: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    params: Map<String, Json>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    inputs: Vec<NodeId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstFloatP {
    value: f32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstColorP {
    rgb: [f32; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UvP {
    #[serde(default)]
    channel: UvChannel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TexP {
    image: String,
    #[serde(default)]
    wrap: WrapMode,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckerP {
    scale: f32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RampP {
    stops: Vec<RampStop>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

fn params<T: DeserializeOwned>(node: NodeId, p: &Map<String, Json>) -> Result<T, GraphError> {
    serde_json::from_value(Json::Object(p.clone())).map_err(|e| GraphError::BadParams {
        node,
        reason: e.to_string(),
    })
}

fn parse_kind(doc: &NodeDoc, textures: &dyn TextureSource) -> Result<NodeKind, GraphError> {
    let id = doc.id;
    let p = &doc.params;
    let kind = match doc.kind.as_str() {
        "ConstFloat" => NodeKind::ConstFloat(params::<ConstFloatP>(id, p)?.value),
        "ConstColor" => NodeKind::ConstColor(params::<ConstColorP>(id, p)?.rgb),
        "UV" => NodeKind::Uv(params::<UvP>(id, p)?.channel),
        "TexImage" => {
            let t: TexP = params(id, p)?;
            let texture = textures.load(&t.image).map_err(|source| GraphError::Texture {
                node: id,
                name: t.image.clone(),
                source,
            })?;
            NodeKind::TexImage {
                image: TextureRef {
                    name: t.image,
                    texture,
                },
                wrap: t.wrap,
            }
        }
        "Checker" => NodeKind::Checker {
            scale: params::<CheckerP>(id, p)?.scale,
        },
        "NoiseFBM" => NodeKind::NoiseFbm(params::<FbmParams>(id, p)?),
        "ColorRamp" => NodeKind::ColorRamp(params::<RampP>(id, p)?.stops),
        other => {
            let kind = match other {
                "Position" => NodeKind::Position,
                "Normal" => NodeKind::Normal,
                "IncomingDir" => NodeKind::IncomingDir,
                "Add" => NodeKind::Add,
                "Sub" => NodeKind::Sub,
                "Mul" => NodeKind::Mul,
                "Div" => NodeKind::Div,
                "Mix" => NodeKind::Mix,
                "Clamp" => NodeKind::Clamp,
                "Dot" => NodeKind::Dot,
                "SinWave" => NodeKind::SinWave,
                "Power" => NodeKind::Power,
                "BsdfDiffuse" => NodeKind::BsdfDiffuse,
                "BsdfOutput" => NodeKind::BsdfOutput,
                _ => {
                    return Err(GraphError::UnknownKind {
                        node: id,
                        kind: other.to_string(),
                    })
                }
            };
            params::<NoParams>(id, p)?;
            kind
        }
    };
    Ok(kind)
}

/// Parse and validate a material document.
pub fn load_graph(bytes: &[u8], textures: &dyn TextureSource) -> Result<MaterialGraph, GraphError> {
    let mut doc: GraphDoc = serde_json::from_slice(bytes)?;
    doc.nodes.sort_by_key(|n| n.id);
    let count = doc.nodes.len();
    for (position, n) in doc.nodes.iter().enumerate() {
        if n.id as usize != position {
            return Err(GraphError::NonDenseIds {
                count,
                position,
                found: n.id,
            });
        }
        // report dangling references before anything that might need them
        if let Some(&missing) = n.inputs.iter().find(|&&i| i as usize >= count) {
            return Err(GraphError::DanglingInput { node: n.id, missing });
        }
    }
    let nodes = doc
        .nodes
        .iter()
        .map(|n| {
            Ok(Node {
                id: n.id,
                kind: parse_kind(n, textures)?,
                inputs: n.inputs.clone(),
            })
        })
        .collect::<Result<Vec<_>, GraphError>>()?;
    MaterialGraph::new(doc.material_id, nodes, doc.output)
}

/// Load a material file; texture names resolve relative to its directory.
pub fn load_graph_file(path: impl AsRef<Path>) -> Result<MaterialGraph, GraphError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    load_graph(&bytes, &DirTextures::new(root))
}

fn to_map<T: Serialize>(t: &T) -> Map<String, Json> {
    match serde_json::to_value(t).expect("parameter structs serialize") {
        Json::Object(m) => m,
        _ => unreachable!("parameter structs are objects"),
    }
}

fn node_params(kind: &NodeKind) -> Map<String, Json> {
    match kind {
        NodeKind::ConstFloat(value) => to_map(&ConstFloatP { value: *value }),
        NodeKind::ConstColor(rgb) => to_map(&ConstColorP { rgb: *rgb }),
        NodeKind::Uv(UvChannel::Uv) => Map::new(),
        NodeKind::Uv(channel) => to_map(&UvP { channel: *channel }),
        NodeKind::TexImage { image, wrap } => to_map(&TexP {
            image: image.name.clone(),
            wrap: *wrap,
        }),
        NodeKind::Checker { scale } => to_map(&CheckerP { scale: *scale }),
        NodeKind::NoiseFbm(p) => to_map(p),
        NodeKind::ColorRamp(stops) => to_map(&RampP {
            stops: stops.clone(),
        }),
        _ => Map::new(),
    }
}

fn to_doc(g: &MaterialGraph) -> GraphDoc {
    GraphDoc {
        material_id: g.material_id(),
        output: g.output_node(),
        nodes: g
            .nodes()
            .iter()
            .map(|n| NodeDoc {
                id: n.id,
                kind: n.kind.name().to_string(),
                params: node_params(&n.kind),
                inputs: n.inputs.clone(),
            })
            .collect(),
    }
}

pub fn to_json(g: &MaterialGraph) -> String {
    serde_json::to_string(&to_doc(g)).expect("graph serializes")
}

pub fn to_json_pretty(g: &MaterialGraph) -> String {
    serde_json::to_string_pretty(&to_doc(g)).expect("graph serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgraph::{MemoryTextures, Texture};

    const MINIMAL: &str = r#"{ "material_id": 0, "output": 2, "nodes": [
        { "id": 2, "kind": "BsdfOutput", "inputs": [1] },
        { "id": 0, "kind": "ConstColor", "params": { "rgb": [0.5, 0.5, 0.5] } },
        { "id": 1, "kind": "BsdfDiffuse", "inputs": [0] } ] }"#;

    fn no_tex() -> MemoryTextures {
        MemoryTextures::default()
    }

    #[test]
    fn minimal_document_any_order() {
        let g = load_graph(MINIMAL.as_bytes(), &no_tex()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.output_node(), 2);
        assert_eq!(g.node(0).kind, NodeKind::ConstColor([0.5; 3]));
    }

    #[test]
    fn dangling_input_names_missing_node() {
        let doc = r#"{ "material_id": 0, "output": 4, "nodes": [
            { "id": 0, "kind": "ConstFloat", "params": { "value": 1 } },
            { "id": 1, "kind": "ConstFloat", "params": { "value": 2 } },
            { "id": 2, "kind": "Add", "inputs": [0, 7] },
            { "id": 3, "kind": "BsdfDiffuse", "inputs": [2] },
            { "id": 4, "kind": "BsdfOutput", "inputs": [3] } ] }"#;
        let err = load_graph(doc.as_bytes(), &no_tex()).unwrap_err();
        assert!(matches!(err, GraphError::DanglingInput { node: 2, missing: 7 }));
        assert!(err.to_string().contains("missing node 7"));
    }

    #[test]
    fn unknown_kind_and_bad_params() {
        let doc = MINIMAL.replace("BsdfDiffuse", "Glossy");
        let err = load_graph(doc.as_bytes(), &no_tex()).unwrap_err();
        assert!(matches!(err, GraphError::UnknownKind { node: 1, .. }));

        let doc = MINIMAL.replace(r#""rgb": [0.5, 0.5, 0.5]"#, r#""rgb": [0.5, 0.5]"#);
        let err = load_graph(doc.as_bytes(), &no_tex()).unwrap_err();
        assert!(matches!(err, GraphError::BadParams { node: 0, .. }));
    }

    #[test]
    fn parse_error() {
        assert!(matches!(
            load_graph(b"{ nope", &no_tex()),
            Err(GraphError::Parse(_))
        ));
    }

    #[test]
    fn texture_resolution() {
        let doc = r#"{ "material_id": 9, "output": 3, "nodes": [
            { "id": 0, "kind": "UV" },
            { "id": 1, "kind": "TexImage", "params": { "image": "t.ppm", "wrap": "clamp" }, "inputs": [0] },
            { "id": 2, "kind": "BsdfDiffuse", "inputs": [1] },
            { "id": 3, "kind": "BsdfOutput", "inputs": [2] } ] }"#;
        assert!(matches!(
            load_graph(doc.as_bytes(), &no_tex()),
            Err(GraphError::Texture { node: 1, .. })
        ));
        let mut texs = MemoryTextures::default();
        texs.insert("t.ppm", Texture::new(1, 1, vec![[0.25; 3]]));
        let g = load_graph(doc.as_bytes(), &texs).unwrap();
        let back = load_graph(to_json(&g).as_bytes(), &texs).unwrap();
        assert_eq!(g, back);
    }
}
