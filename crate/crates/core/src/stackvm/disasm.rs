use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{CompiledProgram, Instruction};
use crate::matgraph::{UvChannel, Value, ValueType, WrapMode};

fn value(v: &Value) -> String {
    match v {
        Value::Scalar(s) => format!("{s:?}"),
        Value::Color([r, g, b]) => format!("({r:?}, {g:?}, {b:?})"),
    }
}

/// One instruction per line; lookup targets become `L<n>:` labels.
pub fn disassemble(p: &CompiledProgram) -> String {
    let mut labels = BTreeMap::new();
    for (pc, i) in p.code.iter().enumerate() {
        if let Instruction::CacheLookup { skip, .. } = i {
            let n = labels.len();
            labels.insert(pc + 1 + *skip as usize, n);
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "; material {}  instructions {}  max_stack {}",
        p.material_id,
        p.code.len(),
        p.max_stack
    );
    for (pc, i) in p.code.iter().enumerate() {
        if let Some(n) = labels.get(&pc) {
            let _ = writeln!(out, "L{n}:");
        }
        let text = match i {
            Instruction::PushConst(v) => format!("push_const {}", value(v)),
            Instruction::LoadUv(UvChannel::Uv) => "load_uv".into(),
            Instruction::LoadUv(UvChannel::U) => "load_uv.u".into(),
            Instruction::LoadUv(UvChannel::V) => "load_uv.v".into(),
            Instruction::LoadPosition => "load_position".into(),
            Instruction::LoadNormal => "load_normal".into(),
            Instruction::LoadIncoming => "load_incoming".into(),
            Instruction::TexSample { tex, wrap } => {
                let w = match wrap {
                    WrapMode::Repeat => "repeat",
                    WrapMode::Clamp => "clamp",
                };
                format!("tex_sample {:?} {w}", p.textures[*tex as usize].name)
            }
            Instruction::Checker(s) => format!("checker {s:?}"),
            Instruction::Noise(f) => format!(
                "noise octaves={} freq={:?} lac={:?} gain={:?}",
                f.octaves, f.frequency, f.lacunarity, f.gain
            ),
            Instruction::Add => "add".into(),
            Instruction::Sub => "sub".into(),
            Instruction::Mul => "mul".into(),
            Instruction::Div => "div".into(),
            Instruction::Mix => "mix".into(),
            Instruction::Clamp => "clamp".into(),
            Instruction::Dot => "dot".into(),
            Instruction::SinWave => "sin_wave".into(),
            Instruction::Ramp(r) => format!("ramp #{r} ({} stops)", p.ramps[*r as usize].len()),
            Instruction::Power => "power".into(),
            Instruction::BsdfDiffuse => "bsdf_diffuse".into(),
            Instruction::CacheLookup {
                slot,
                node,
                uses_uv,
                value_type,
                skip,
            } => {
                let ty = match value_type {
                    ValueType::Scalar => "scalar",
                    ValueType::Color => "color",
                };
                let target = labels[&(pc + 1 + *skip as usize)];
                format!("cache_lookup node={node} slot={slot} uv={uses_uv} type={ty} hit-> L{target}")
            }
            Instruction::CacheStore { slot, node, uses_uv } => {
                format!("cache_store node={node} slot={slot} uv={uses_uv}")
            }
            Instruction::End => "end".into(),
        };
        let _ = writeln!(out, "{pc:04}  {text}");
    }
    out
}
