//! Material graphs: node vocabulary, validation, JSON interchange and the
//! recursive reference evaluator.
//!
//! A [`MaterialGraph`] is an immutable DAG of typed nodes with dense ids
//! `0..N` and a single `BsdfOutput` root. Values flowing along edges are
//! [`Value`]s: scalars or RGB triples with a fixed coercion rule (scalars
//! broadcast, colors feeding scalar inputs take their luminance).

mod eval;
pub mod gen;
mod json;
pub mod noise;
mod texture;
mod value;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use eval::{apply_node, eval_node_unmemoized, eval_reference, eval_reference_all};
pub use json::{load_graph, load_graph_file, to_json, to_json_pretty};
pub use noise::FbmParams;
pub use texture::{DirTextures, MemoryTextures, Texture, TextureRef, TextureSource, WrapMode};
pub use value::{luminance, Value, ValueType, LUMA};

pub(crate) use eval::{checker, color_ramp, noise, tex_image, uv_node};
pub(crate) use value::{add, clamp01, div, dot, mix, mul, power, sin_wave, sub};

use crate::imageio::ImageError;

pub type NodeId = u32;

/// Which part of the shading point's UV a `UV` node emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UvChannel {
    /// `(u, v, 0)` as a color.
    #[default]
    Uv,
    U,
    V,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampStop {
    pub pos: f32,
    pub rgb: [f32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    ConstFloat(f32),
    ConstColor([f32; 3]),
    Uv(UvChannel),
    Position,
    Normal,
    IncomingDir,
    /// Bilinear image lookup at the coordinate input.
    TexImage { image: TextureRef, wrap: WrapMode },
    /// 0/1 checkerboard of the coordinate input.
    Checker { scale: f32 },
    NoiseFbm(FbmParams),
    Add,
    Sub,
    Mul,
    Div,
    /// `mix(a, b, t)`
    Mix,
    /// Clamp to [0, 1].
    Clamp,
    Dot,
    SinWave,
    ColorRamp(Vec<RampStop>),
    /// `base ^ exponent`
    Power,
    BsdfDiffuse,
    BsdfOutput,
}

impl NodeKind {
    pub fn arity(&self) -> usize {
        use NodeKind::*;
        match self {
            ConstFloat(_) | ConstColor(_) | Uv(_) | Position | Normal | IncomingDir => 0,
            TexImage { .. } | Checker { .. } | NoiseFbm(_) => 1,
            Clamp | SinWave | ColorRamp(_) | BsdfDiffuse | BsdfOutput => 1,
            Add | Sub | Mul | Div | Dot | Power => 2,
            Mix => 3,
        }
    }

    /// Name used in the JSON interchange format.
    pub fn name(&self) -> &'static str {
        use NodeKind::*;
        match self {
            ConstFloat(_) => "ConstFloat",
            ConstColor(_) => "ConstColor",
            Uv(_) => "UV",
            Position => "Position",
            Normal => "Normal",
            IncomingDir => "IncomingDir",
            TexImage { .. } => "TexImage",
            Checker { .. } => "Checker",
            NoiseFbm(_) => "NoiseFBM",
            Add => "Add",
            Sub => "Sub",
            Mul => "Mul",
            Div => "Div",
            Mix => "Mix",
            Clamp => "Clamp",
            Dot => "Dot",
            SinWave => "SinWave",
            ColorRamp(_) => "ColorRamp",
            Power => "Power",
            BsdfDiffuse => "BsdfDiffuse",
            BsdfOutput => "BsdfOutput",
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, NodeKind::ConstFloat(_) | NodeKind::ConstColor(_))
    }

    pub fn is_bsdf(&self) -> bool {
        matches!(self, NodeKind::BsdfDiffuse | NodeKind::BsdfOutput)
    }

    /// Output type given the types of the inputs (in order).
    pub fn output_type(&self, inputs: &[ValueType]) -> ValueType {
        use NodeKind::*;
        use ValueType::*;
        match self {
            ConstFloat(_) | Checker { .. } | NoiseFbm(_) | Dot => Scalar,
            Uv(UvChannel::U) | Uv(UvChannel::V) => Scalar,
            ConstColor(_) | Uv(UvChannel::Uv) | Position | Normal | IncomingDir => Color,
            TexImage { .. } | ColorRamp(_) | BsdfDiffuse | BsdfOutput => Color,
            Add | Sub | Mul | Div | Power => inputs[0].join(inputs[1]),
            Mix => inputs[0].join(inputs[1]),
            Clamp | SinWave => inputs[0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub inputs: Vec<NodeId>,
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("JSON parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("node {node}: unknown node kind {kind:?}")]
    UnknownKind { node: NodeId, kind: String },
    #[error("node {node}: invalid parameters: {reason}")]
    BadParams { node: NodeId, reason: String },
    #[error("node {node}: {kind} takes {expected} inputs, got {got}")]
    Arity {
        node: NodeId,
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node {node}: input refers to missing node {missing}")]
    DanglingInput { node: NodeId, missing: NodeId },
    #[error("node {node}: cycle detected")]
    Cycle { node: NodeId },
    #[error("node ids must be dense 0..{count}: found id {found} at position {position}")]
    NonDenseIds {
        count: usize,
        position: usize,
        found: NodeId,
    },
    #[error("output {output} must be the single BsdfOutput node: {reason}")]
    Output { output: NodeId, reason: String },
    #[error("node {node}: texture {name:?}: {source}")]
    Texture {
        node: NodeId,
        name: String,
        #[source]
        source: ImageError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A validated material network.
#[derive(Clone, Debug)]
pub struct MaterialGraph {
    material_id: u32,
    nodes: Vec<Node>,
    output: NodeId,
    /// Every node, inputs before consumers.
    topo: Vec<NodeId>,
    types: Vec<ValueType>,
}

impl PartialEq for MaterialGraph {
    fn eq(&self, other: &Self) -> bool {
        self.material_id == other.material_id
            && self.output == other.output
            && self.nodes == other.nodes
    }
}

fn check_finite(node: NodeId, what: &str, xs: &[f32]) -> Result<(), GraphError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GraphError::BadParams {
            node,
            reason: format!("{what} must be finite"),
        })
    }
}

fn check_params(node: NodeId, kind: &NodeKind) -> Result<(), GraphError> {
    match kind {
        NodeKind::ConstFloat(v) => check_finite(node, "value", &[*v]),
        NodeKind::ConstColor(c) => check_finite(node, "rgb", c),
        NodeKind::Checker { scale } => check_finite(node, "scale", &[*scale]),
        NodeKind::NoiseFbm(p) => {
            if !(1..=10).contains(&p.octaves) {
                return Err(GraphError::BadParams {
                    node,
                    reason: format!("octaves must be in [1, 10], got {}", p.octaves),
                });
            }
            check_finite(node, "noise parameters", &[p.frequency, p.lacunarity, p.gain])
        }
        NodeKind::ColorRamp(stops) => {
            if stops.is_empty() {
                return Err(GraphError::BadParams {
                    node,
                    reason: "color ramp needs at least one stop".into(),
                });
            }
            for s in stops {
                check_finite(node, "ramp stop", &[s.pos, s.rgb[0], s.rgb[1], s.rgb[2]])?;
            }
            if stops.windows(2).any(|w| w[0].pos > w[1].pos) {
                return Err(GraphError::BadParams {
                    node,
                    reason: "ramp stops must be sorted by position".into(),
                });
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

impl MaterialGraph {
    /// Validate and build a graph. `nodes[i].id` must equal `i`.
    pub fn new(material_id: u32, nodes: Vec<Node>, output: NodeId) -> Result<Self, GraphError> {
        let n = nodes.len();
        for (position, node) in nodes.iter().enumerate() {
            if node.id as usize != position {
                return Err(GraphError::NonDenseIds {
                    count: n,
                    position,
                    found: node.id,
                });
            }
        }
        for node in &nodes {
            check_params(node.id, &node.kind)?;
            let expected = node.kind.arity();
            if node.inputs.len() != expected {
                return Err(GraphError::Arity {
                    node: node.id,
                    kind: node.kind.name(),
                    expected,
                    got: node.inputs.len(),
                });
            }
            if let Some(&missing) = node.inputs.iter().find(|&&i| i as usize >= n) {
                return Err(GraphError::DanglingInput {
                    node: node.id,
                    missing,
                });
            }
        }
        if output as usize >= n {
            return Err(GraphError::Output {
                output,
                reason: "no such node".into(),
            });
        }
        let outputs: Vec<NodeId> = nodes
            .iter()
            .filter(|n| n.kind == NodeKind::BsdfOutput)
            .map(|n| n.id)
            .collect();
        if outputs != [output] {
            return Err(GraphError::Output {
                output,
                reason: format!("BsdfOutput nodes are {outputs:?}"),
            });
        }

        let topo = topo_order(&nodes)?;
        let mut types = vec![ValueType::Scalar; n];
        for &id in &topo {
            let node = &nodes[id as usize];
            let ins: Vec<ValueType> = node.inputs.iter().map(|&i| types[i as usize]).collect();
            types[id as usize] = node.kind.output_type(&ins);
        }
        Ok(MaterialGraph {
            material_id,
            nodes,
            output,
            topo,
            types,
        })
    }

    pub fn material_id(&self) -> u32 {
        self.material_id
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn output_node(&self) -> NodeId {
        self.output
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// All node ids ordered so that inputs precede their consumers.
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// Static output type of a node.
    pub fn value_type(&self, id: NodeId) -> ValueType {
        self.types[id as usize]
    }

    /// Transitive input closure of `id`, including `id`.
    pub fn subtree_nodes(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.nodes[n as usize].inputs.iter().copied());
            }
        }
        seen
    }

    /// For every node, the ids of the nodes that consume it.
    pub fn consumers(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for node in &self.nodes {
            for &i in &node.inputs {
                if !out[i as usize].contains(&node.id) {
                    out[i as usize].push(node.id);
                }
            }
        }
        out
    }
}

/// Iterative three-color DFS; reports the first node found on a cycle.
fn topo_order(nodes: &[Node]) -> Result<Vec<NodeId>, GraphError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    for root in 0..nodes.len() {
        if mark[root] != Mark::New {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Open;
        while let Some(top) = stack.last_mut() {
            let (n, next) = *top;
            if let Some(&child) = nodes[n].inputs.get(next) {
                top.1 += 1;
                let c = child as usize;
                match mark[c] {
                    Mark::New => {
                        mark[c] = Mark::Open;
                        stack.push((c, 0));
                    }
                    Mark::Open => return Err(GraphError::Cycle { node: child }),
                    Mark::Done => {}
                }
            } else {
                mark[n] = Mark::Done;
                order.push(n as NodeId);
                stack.pop();
            }
        }
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: NodeId, kind: NodeKind, inputs: &[NodeId]) -> Node {
        Node {
            id,
            kind,
            inputs: inputs.to_vec(),
        }
    }

    fn minimal() -> MaterialGraph {
        MaterialGraph::new(
            0,
            vec![
                node(0, NodeKind::ConstColor([0.5; 3]), &[]),
                node(1, NodeKind::BsdfDiffuse, &[0]),
                node(2, NodeKind::BsdfOutput, &[1]),
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn minimal_graph_is_valid() {
        let g = minimal();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.output_node(), 2);
        assert_eq!(g.topo_order(), &[0, 1, 2]);
    }

    #[test]
    fn subtree_of_leaf_and_add() {
        let g = MaterialGraph::new(
            0,
            vec![
                node(0, NodeKind::ConstFloat(1.0), &[]),
                node(1, NodeKind::ConstFloat(2.0), &[]),
                node(2, NodeKind::Add, &[0, 1]),
                node(3, NodeKind::BsdfDiffuse, &[2]),
                node(4, NodeKind::BsdfOutput, &[3]),
            ],
            4,
        )
        .unwrap();
        assert_eq!(g.subtree_nodes(0), BTreeSet::from([0]));
        assert_eq!(g.subtree_nodes(2), BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn cycle_is_reported() {
        let err = MaterialGraph::new(
            0,
            vec![
                node(0, NodeKind::Add, &[1, 1]),
                node(1, NodeKind::Clamp, &[0]),
                node(2, NodeKind::BsdfDiffuse, &[1]),
                node(3, NodeKind::BsdfOutput, &[2]),
            ],
            3,
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Cycle { .. }), "{err}");
    }

    #[test]
    fn arity_and_output_rules() {
        let err = MaterialGraph::new(
            0,
            vec![
                node(0, NodeKind::ConstFloat(1.0), &[]),
                node(1, NodeKind::Add, &[0]),
                node(2, NodeKind::BsdfOutput, &[1]),
            ],
            2,
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Arity { node: 1, expected: 2, got: 1, .. }));

        let err = MaterialGraph::new(
            0,
            vec![
                node(0, NodeKind::ConstFloat(1.0), &[]),
                node(1, NodeKind::BsdfOutput, &[0]),
                node(2, NodeKind::BsdfOutput, &[0]),
            ],
            2,
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Output { .. }));
    }

    #[test]
    fn noise_octave_bounds() {
        let p = FbmParams {
            octaves: 11,
            ..Default::default()
        };
        let err = check_params(4, &NodeKind::NoiseFbm(p)).unwrap_err();
        assert!(err.to_string().contains("node 4"));
        assert!(check_params(4, &NodeKind::ConstColor([0.0, f32::NAN, 0.0])).is_err());
    }

    #[test]
    fn static_types() {
        let g = minimal();
        assert_eq!(g.value_type(0), ValueType::Color);
        assert_eq!(
            NodeKind::Mul.output_type(&[ValueType::Scalar, ValueType::Scalar]),
            ValueType::Scalar
        );
        assert_eq!(
            NodeKind::Mix.output_type(&[ValueType::Scalar, ValueType::Color, ValueType::Color]),
            ValueType::Color
        );
    }
}
