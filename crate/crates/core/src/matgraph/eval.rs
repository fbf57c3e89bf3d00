//! Recursive reference evaluation.
//!
//! The per-node primitives here are shared with the stack VM; the graph
//! traversal is not, so the two evaluators check each other's traversal
//! and bookkeeping.

use super::noise::{fbm, FbmParams};
use super::value::{self, Value};
use super::{MaterialGraph, NodeId, NodeKind, RampStop, Texture, UvChannel, WrapMode};
use crate::raycone::ShadingPoint;

/// Coordinate pair read from a value: `(r, g)` of a color, `(s, 0)` of a scalar.
#[inline]
pub(crate) fn coord(v: Value) -> (f32, f32) {
    match v {
        Value::Scalar(s) => (s, 0.0),
        Value::Color(c) => (c[0], c[1]),
    }
}

#[inline]
pub(crate) fn uv_node(channel: UvChannel, sp: &ShadingPoint) -> Value {
    let (u, v) = sp.uv_value();
    match channel {
        UvChannel::Uv => Value::color([u, v, 0.0]),
        UvChannel::U => Value::scalar(u),
        UvChannel::V => Value::scalar(v),
    }
}

#[inline]
pub(crate) fn checker(scale: f32, at: Value) -> Value {
    let (u, v) = coord(at);
    // parity of the cell-index sum, without overflowing on huge inputs
    let i = ((u * scale).floor() as i64 ^ (v * scale).floor() as i64) & 1;
    Value::Scalar(i as f32)
}

#[inline]
pub(crate) fn noise(p: &FbmParams, at: Value) -> Value {
    let (u, v) = coord(at);
    Value::scalar(fbm(p, u, v))
}

#[inline]
pub(crate) fn tex_image(tex: &Texture, wrap: WrapMode, at: Value) -> Value {
    let (u, v) = coord(at);
    Value::color(tex.sample(u, v, wrap))
}

/// Piecewise-linear ramp over the scalar (luminance) of `at`.
pub(crate) fn color_ramp(stops: &[RampStop], at: Value) -> Value {
    let x = at.as_scalar();
    let first = &stops[0];
    let last = &stops[stops.len() - 1];
    if x <= first.pos {
        return Value::color(first.rgb);
    }
    if x >= last.pos {
        return Value::color(last.rgb);
    }
    for w in stops.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if x < b.pos {
            let span = b.pos - a.pos;
            if span <= 0.0 {
                return Value::color(b.rgb);
            }
            let t = (x - a.pos) / span;
            return Value::color([
                a.rgb[0] + (b.rgb[0] - a.rgb[0]) * t,
                a.rgb[1] + (b.rgb[1] - a.rgb[1]) * t,
                a.rgb[2] + (b.rgb[2] - a.rgb[2]) * t,
            ]);
        }
    }
    Value::color(last.rgb)
}

/// Evaluate one node given its input values.
pub fn apply_node(kind: &NodeKind, inputs: &[Value], sp: &ShadingPoint) -> Value {
    use NodeKind::*;
    match kind {
        ConstFloat(x) => Value::scalar(*x),
        ConstColor(c) => Value::color(*c),
        Uv(ch) => uv_node(*ch, sp),
        Position => sp.position_value(),
        Normal => sp.normal_value(),
        IncomingDir => sp.incoming_value(),
        TexImage { image, wrap } => tex_image(&image.texture, *wrap, inputs[0]),
        Checker { scale } => checker(*scale, inputs[0]),
        NoiseFbm(p) => noise(p, inputs[0]),
        Add => value::add(inputs[0], inputs[1]),
        Sub => value::sub(inputs[0], inputs[1]),
        Mul => value::mul(inputs[0], inputs[1]),
        Div => value::div(inputs[0], inputs[1]),
        Mix => value::mix(inputs[0], inputs[1], inputs[2]),
        Clamp => value::clamp01(inputs[0]),
        Dot => value::dot(inputs[0], inputs[1]),
        SinWave => value::sin_wave(inputs[0]),
        ColorRamp(stops) => color_ramp(stops, inputs[0]),
        Power => value::power(inputs[0], inputs[1]),
        BsdfDiffuse | BsdfOutput => Value::color(inputs[0].rgb()),
    }
}

fn eval_memo(g: &MaterialGraph, id: NodeId, sp: &ShadingPoint, memo: &mut [Option<Value>]) -> Value {
    if let Some(v) = memo[id as usize] {
        return v;
    }
    let node = g.node(id);
    let mut inputs = [Value::default(); 3];
    for (slot, &i) in node.inputs.iter().enumerate() {
        inputs[slot] = eval_memo(g, i, sp, memo);
    }
    let v = apply_node(&node.kind, &inputs[..node.inputs.len()], sp);
    memo[id as usize] = Some(v);
    v
}

/// Post-order evaluation of the whole graph; returns the BSDF base color
/// (the value arriving at the output node).
pub fn eval_reference(g: &MaterialGraph, sp: &ShadingPoint) -> Value {
    let mut memo = vec![None; g.node_count()];
    eval_memo(g, g.output_node(), sp, &mut memo)
}

/// Values of every node reachable from the output, memoized; unreachable
/// nodes are `None`.
pub fn eval_reference_all(g: &MaterialGraph, sp: &ShadingPoint) -> Vec<Option<Value>> {
    let mut memo = vec![None; g.node_count()];
    eval_memo(g, g.output_node(), sp, &mut memo);
    memo
}

/// Plain recursive evaluation of a single node with no sharing of results.
pub fn eval_node_unmemoized(g: &MaterialGraph, id: NodeId, sp: &ShadingPoint) -> Value {
    let node = g.node(id);
    let inputs: Vec<Value> = node
        .inputs
        .iter()
        .map(|&i| eval_node_unmemoized(g, i, sp))
        .collect();
    apply_node(&node.kind, &inputs, sp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgraph::Node;

    fn n(id: NodeId, kind: NodeKind, inputs: &[NodeId]) -> Node {
        Node {
            id,
            kind,
            inputs: inputs.to_vec(),
        }
    }

    #[test]
    fn constant_graph() {
        let g = MaterialGraph::new(
            1,
            vec![
                n(0, NodeKind::ConstColor([0.2, 0.4, 0.6]), &[]),
                n(1, NodeKind::BsdfDiffuse, &[0]),
                n(2, NodeKind::BsdfOutput, &[1]),
            ],
            2,
        )
        .unwrap();
        let v = eval_reference(&g, &ShadingPoint::at_uv(0.7, 0.1));
        assert_eq!(v, Value::Color([0.2, 0.4, 0.6]));
    }

    #[test]
    fn uv_times_two() {
        let g = MaterialGraph::new(
            1,
            vec![
                n(0, NodeKind::Uv(UvChannel::U), &[]),
                n(1, NodeKind::ConstFloat(2.0), &[]),
                n(2, NodeKind::Mul, &[0, 1]),
                n(3, NodeKind::BsdfDiffuse, &[2]),
                n(4, NodeKind::BsdfOutput, &[3]),
            ],
            4,
        )
        .unwrap();
        let v = eval_reference(&g, &ShadingPoint::at_uv(0.25, 0.9));
        assert_eq!(v, Value::gray(0.5));
    }

    #[test]
    fn ramp_interpolates_and_clamps() {
        let stops = vec![
            RampStop {
                pos: 0.0,
                rgb: [0.0, 0.0, 0.0],
            },
            RampStop {
                pos: 0.5,
                rgb: [1.0, 0.0, 0.0],
            },
            RampStop {
                pos: 1.0,
                rgb: [1.0, 1.0, 1.0],
            },
        ];
        assert_eq!(color_ramp(&stops, Value::Scalar(-1.0)), Value::Color([0.0; 3]));
        assert_eq!(color_ramp(&stops, Value::Scalar(0.25)), Value::Color([0.5, 0.0, 0.0]));
        assert_eq!(color_ramp(&stops, Value::Scalar(0.75)), Value::Color([1.0, 0.5, 0.5]));
        assert_eq!(color_ramp(&stops, Value::Scalar(7.0)), Value::Color([1.0; 3]));
    }

    #[test]
    fn checker_parity() {
        assert_eq!(checker(4.0, Value::Color([0.1, 0.1, 0.0])), Value::Scalar(0.0));
        assert_eq!(checker(4.0, Value::Color([0.3, 0.1, 0.0])), Value::Scalar(1.0));
        assert_eq!(checker(4.0, Value::Color([-0.1, 0.1, 0.0])), Value::Scalar(1.0));
        assert_eq!(checker(4.0, Value::Color([-0.3, -0.1, 0.0])), Value::Scalar(1.0));
        assert!(matches!(checker(4.0, Value::Color([3e38, -3e38, 0.0])), Value::Scalar(_)));
    }
}
