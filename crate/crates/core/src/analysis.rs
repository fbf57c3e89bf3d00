//! Pre-render passes over material graphs.
//!
//! * [`fold_constants`] replaces nodes whose inputs are all constants.
//! * [`classify_deps`] computes, per node, what part of the shading point
//!   its value depends on: nothing, only UV, or something else.
//! * [`select_cache_points`] picks the highest nodes whose sub-graphs
//!   depend on nothing but UV; their outputs can be cached per virtual
//!   texel.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::matgraph::{apply_node, MaterialGraph, Node, NodeId, NodeKind, Value};
use crate::raycone::ShadingPoint;

/// Sub-graphs smaller than this are not worth a cache round trip.
pub const DEFAULT_MIN_SUBTREE: usize = 3;

/// Shading-point dependence, ordered `Const < Uv < Other`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DepClass {
    Const,
    Uv,
    Other,
}

impl DepClass {
    #[inline]
    pub fn join(self, other: DepClass) -> DepClass {
        self.max(other)
    }

    pub fn is_cacheable(self) -> bool {
        self != DepClass::Other
    }

    /// Class a node contributes on its own, before joining its inputs.
    pub fn intrinsic(kind: &NodeKind) -> DepClass {
        use NodeKind::*;
        match kind {
            ConstFloat(_) | ConstColor(_) => DepClass::Const,
            Uv(_) | TexImage { .. } | Checker { .. } | NoiseFbm(_) => DepClass::Uv,
            Position | Normal | IncomingDir | BsdfDiffuse | BsdfOutput => DepClass::Other,
            Add | Sub | Mul | Div | Mix | Clamp | Dot | SinWave | ColorRamp(_) | Power => {
                DepClass::Const
            }
        }
    }
}

/// Result of constant folding.
#[derive(Clone, Debug)]
pub struct Folded {
    pub graph: MaterialGraph,
    /// `remap[old_id]` is the node's id in the folded graph, if it survived.
    pub remap: Vec<Option<NodeId>>,
}

/// Replace every non-BSDF operator whose inputs are all constants by a
/// constant holding its value, then drop unreachable nodes and renumber.
/// Surviving nodes keep their relative order.
pub fn fold_constants(graph: &MaterialGraph) -> Folded {
    let sp = ShadingPoint::at_uv(0.0, 0.0);
    let mut kinds: Vec<NodeKind> = graph.nodes().iter().map(|n| n.kind.clone()).collect();
    let mut inputs: Vec<Vec<NodeId>> = graph.nodes().iter().map(|n| n.inputs.clone()).collect();
    for &id in graph.topo_order() {
        let i = id as usize;
        let foldable = !kinds[i].is_bsdf()
            && !inputs[i].is_empty()
            && inputs[i].iter().all(|&c| kinds[c as usize].is_const());
        if !foldable {
            continue;
        }
        let args: Vec<Value> = inputs[i]
            .iter()
            .map(|&c| apply_node(&kinds[c as usize], &[], &sp))
            .collect();
        kinds[i] = match apply_node(&kinds[i], &args, &sp) {
            Value::Scalar(s) => NodeKind::ConstFloat(s),
            Value::Color(c) => NodeKind::ConstColor(c),
        };
        inputs[i].clear();
    }

    // keep what the output still reaches
    let mut live = vec![false; kinds.len()];
    let mut stack = vec![graph.output_node()];
    while let Some(n) = stack.pop() {
        if !std::mem::replace(&mut live[n as usize], true) {
            stack.extend(inputs[n as usize].iter().copied());
        }
    }
    let mut remap = vec![None; kinds.len()];
    let mut next = 0;
    for (old, &alive) in live.iter().enumerate() {
        if alive {
            remap[old] = Some(next);
            next += 1;
        }
    }
    let nodes: Vec<Node> = kinds
        .into_iter()
        .zip(inputs)
        .enumerate()
        .filter(|(old, _)| live[*old])
        .map(|(old, (kind, ins))| Node {
            id: remap[old].unwrap(),
            kind,
            inputs: ins.iter().map(|&c| remap[c as usize].unwrap()).collect(),
        })
        .collect();
    let output = remap[graph.output_node() as usize].unwrap();
    let graph = MaterialGraph::new(graph.material_id(), nodes, output)
        .expect("folding preserves validity");
    Folded { graph, remap }
}

/// Dependence class of every node: its intrinsic class joined with its inputs'.
pub fn classify_deps(graph: &MaterialGraph) -> Vec<DepClass> {
    let mut dep = vec![DepClass::Const; graph.node_count()];
    for &id in graph.topo_order() {
        let node = graph.node(id);
        dep[id as usize] = node
            .inputs
            .iter()
            .fold(DepClass::intrinsic(&node.kind), |acc, &i| acc.join(dep[i as usize]));
    }
    dep
}

/// A graph annotated with dependence classes and its cache points.
#[derive(Clone, Debug)]
pub struct AnalyzedGraph {
    pub graph: MaterialGraph,
    pub dep: Vec<DepClass>,
    /// Cache points in increasing id order.
    pub cache_points: Vec<NodeId>,
    /// For each cache point: whether its sub-graph contains a UV-intrinsic node.
    pub uses_uv: BTreeMap<NodeId, bool>,
    pub min_subtree: usize,
}

impl AnalyzedGraph {
    pub fn is_cache_point(&self, id: NodeId) -> bool {
        self.uses_uv.contains_key(&id)
    }
}

/// Choose maximal cacheable nodes: class `Const` or `Uv`, sub-graph of at
/// least `min_subtree` nodes, and no cacheable ancestor.
pub fn select_cache_points(graph: &MaterialGraph, dep: &[DepClass], min_subtree: usize) -> AnalyzedGraph {
    let n = graph.node_count();
    let reachable = graph.subtree_nodes(graph.output_node());
    let consumers = graph.consumers();

    // has_cacheable_ancestor, filled consumers-first
    let mut covered = vec![false; n];
    for &id in graph.topo_order().iter().rev() {
        covered[id as usize] = consumers[id as usize]
            .iter()
            .filter(|c| reachable.contains(c))
            .any(|&c| dep[c as usize].is_cacheable() || covered[c as usize]);
    }

    let mut cache_points = Vec::new();
    let mut uses_uv = BTreeMap::new();
    for id in 0..n as NodeId {
        let i = id as usize;
        if !reachable.contains(&id) || !dep[i].is_cacheable() || covered[i] {
            continue;
        }
        let sub = graph.subtree_nodes(id);
        if sub.len() < min_subtree {
            continue;
        }
        let uv = sub
            .iter()
            .any(|&s| DepClass::intrinsic(&graph.node(s).kind) == DepClass::Uv);
        cache_points.push(id);
        uses_uv.insert(id, uv);
    }
    AnalyzedGraph {
        graph: graph.clone(),
        dep: dep.to_vec(),
        cache_points,
        uses_uv,
        min_subtree,
    }
}

/// Fold, classify and select in one go.
pub fn analyze(graph: &MaterialGraph, min_subtree: usize) -> (Folded, AnalyzedGraph) {
    let folded = fold_constants(graph);
    let dep = classify_deps(&folded.graph);
    let ag = select_cache_points(&folded.graph, &dep, min_subtree);
    (folded, ag)
}

/// Graphviz rendering: cache-point sub-graphs are outlined clusters,
/// cache points are filled yellow, UV-intrinsic nodes red.
pub fn to_dot(ag: &AnalyzedGraph) -> String {
    let g = &ag.graph;
    let mut out = String::new();
    let _ = writeln!(out, "digraph material_{} {{", g.material_id());
    let _ = writeln!(out, "  rankdir=BT;\n  node [shape=box, fontname=\"Helvetica\"];");
    let mut placed = BTreeSet::new();
    let label = |id: NodeId| {
        let n = g.node(id);
        format!("{} {}\\n{:?}", id, n.kind.name(), ag.dep[id as usize])
    };
    let style = |id: NodeId| {
        if ag.is_cache_point(id) {
            ", style=filled, fillcolor=yellow"
        } else if DepClass::intrinsic(&g.node(id).kind) == DepClass::Uv {
            ", style=filled, fillcolor=salmon"
        } else {
            ""
        }
    };
    for &p in &ag.cache_points {
        let _ = writeln!(out, "  subgraph cluster_{p} {{\n    color=blue;\n    label=\"cache {p}\";");
        for s in g.subtree_nodes(p) {
            // shared nodes can only live in one cluster
            if placed.insert(s) {
                let _ = writeln!(out, "    n{s} [label=\"{}\"{}];", label(s), style(s));
            }
        }
        let _ = writeln!(out, "  }}");
    }
    for node in g.nodes() {
        if placed.insert(node.id) {
            let _ = writeln!(out, "  n{} [label=\"{}\"{}];", node.id, label(node.id), style(node.id));
        }
    }
    for node in g.nodes() {
        for &i in &node.inputs {
            let _ = writeln!(out, "  n{i} -> n{};", node.id);
        }
    }
    out.push_str("}\n");
    out
}
