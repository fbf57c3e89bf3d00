use arrayvec::ArrayVec;

use super::{CompiledProgram, Instruction, MAX_CACHE_POINTS, STACK_CAPACITY};
use crate::matcache::{decode_rgb, CacheDescriptor, MaterialCache, UpdateOutcome};
use crate::matgraph::{self as mg, Value, ValueType};
use crate::raycone::ShadingPoint;

/// A cache to consult during execution.
#[derive(Clone, Copy, Debug)]
pub struct CacheBinding<'a> {
    pub cache: &'a MaterialCache,
    pub mip_offset: i32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Lookups that hit.
    pub nodes_found: u64,
    pub lookups: u64,
    pub instructions_executed: u64,
    pub stores_attempted: u64,
    pub stores_won: u64,
    /// Deepest operand stack seen.
    pub max_depth: u64,
}

impl EvalStats {
    pub fn merge(&mut self, o: &EvalStats) {
        self.nodes_found += o.nodes_found;
        self.lookups += o.lookups;
        self.instructions_executed += o.instructions_executed;
        self.stores_attempted += o.stores_attempted;
        self.stores_won += o.stores_won;
        self.max_depth = self.max_depth.max(o.max_depth);
    }
}

/// Hooks for instrumented runs. All methods default to no-ops.
pub trait ExecObserver {
    fn on_lookup(&mut self, _desc: &CacheDescriptor, _hit: Option<u32>) {}
    fn on_store(&mut self, _desc: &CacheDescriptor, _value: &Value, _outcome: UpdateOutcome) {}
}

pub struct NoObserver;
impl ExecObserver for NoObserver {}

pub fn execute(
    prog: &CompiledProgram,
    sp: &ShadingPoint,
    cache: Option<&CacheBinding>,
    stats: &mut EvalStats,
) -> Value {
    execute_observed(prog, sp, cache, stats, &mut NoObserver)
}

#[inline]
fn pop(stack: &mut ArrayVec<Value, STACK_CAPACITY>) -> Value {
    stack.pop().expect("operand stack underflow")
}

/// Run `prog` at `sp`; returns the BSDF base color.
pub fn execute_observed<O: ExecObserver>(
    prog: &CompiledProgram,
    sp: &ShadingPoint,
    cache: Option<&CacheBinding>,
    stats: &mut EvalStats,
    obs: &mut O,
) -> Value {
    let mut stack: ArrayVec<Value, STACK_CAPACITY> = ArrayVec::new();
    let mut pending: ArrayVec<CacheDescriptor, MAX_CACHE_POINTS> = ArrayVec::new();
    if cache.is_some() {
        pending.extend((0..prog.n_slots).map(|_| CacheDescriptor::default()));
    }
    let code = &prog.code;
    let mut pc = 0usize;
    let mut executed = 0u64;
    let mut max_depth = 0usize;
    loop {
        executed += 1;
        let instr = &code[pc];
        pc += 1;
        let v = match instr {
            Instruction::PushConst(v) => *v,
            Instruction::LoadUv(ch) => mg::uv_node(*ch, sp),
            Instruction::LoadPosition => sp.position_value(),
            Instruction::LoadNormal => sp.normal_value(),
            Instruction::LoadIncoming => sp.incoming_value(),
            Instruction::TexSample { tex, wrap } => {
                let at = pop(&mut stack);
                mg::tex_image(&prog.textures[*tex as usize].texture, *wrap, at)
            }
            Instruction::Checker(scale) => mg::checker(*scale, pop(&mut stack)),
            Instruction::Noise(p) => mg::noise(p, pop(&mut stack)),
            Instruction::Clamp => mg::clamp01(pop(&mut stack)),
            Instruction::SinWave => mg::sin_wave(pop(&mut stack)),
            Instruction::Ramp(r) => mg::color_ramp(&prog.ramps[*r as usize], pop(&mut stack)),
            Instruction::BsdfDiffuse => Value::color(pop(&mut stack).rgb()),
            Instruction::Add
            | Instruction::Sub
            | Instruction::Mul
            | Instruction::Div
            | Instruction::Dot
            | Instruction::Power => {
                let b = pop(&mut stack);
                let a = pop(&mut stack);
                match instr {
                    Instruction::Add => mg::add(a, b),
                    Instruction::Sub => mg::sub(a, b),
                    Instruction::Mul => mg::mul(a, b),
                    Instruction::Div => mg::div(a, b),
                    Instruction::Dot => mg::dot(a, b),
                    _ => mg::power(a, b),
                }
            }
            Instruction::Mix => {
                let t = pop(&mut stack);
                let b = pop(&mut stack);
                let a = pop(&mut stack);
                mg::mix(a, b, t)
            }
            Instruction::CacheLookup {
                slot,
                node,
                uses_uv,
                value_type,
                skip,
            } => {
                let Some(binding) = cache else { continue };
                let desc = CacheDescriptor::at(prog.material_id, *node, *uses_uv, sp, binding.mip_offset);
                stats.lookups += 1;
                let hit = binding.cache.lookup_payload(&desc);
                obs.on_lookup(&desc, hit);
                match hit {
                    Some(payload) => {
                        stats.nodes_found += 1;
                        pc += *skip as usize;
                        let rgb = decode_rgb(payload);
                        match value_type {
                            ValueType::Scalar => Value::Scalar(rgb[0]),
                            ValueType::Color => Value::Color(rgb),
                        }
                    }
                    None => {
                        pending[*slot as usize] = desc;
                        continue;
                    }
                }
            }
            Instruction::CacheStore { slot, .. } => {
                let Some(binding) = cache else { continue };
                let desc = pending[*slot as usize];
                let top = stack.last().expect("store with empty stack");
                let outcome = binding.cache.update(&desc, top);
                stats.stores_attempted += 1;
                if outcome == UpdateOutcome::Inserted {
                    stats.stores_won += 1;
                }
                obs.on_store(&desc, top, outcome);
                continue;
            }
            Instruction::End => {
                let out = pop(&mut stack);
                debug_assert!(stack.is_empty());
                stats.instructions_executed += executed;
                stats.max_depth = stats.max_depth.max(max_depth as u64);
                return Value::color(out.rgb());
            }
        };
        stack.push(v);
        max_depth = max_depth.max(stack.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze, DEFAULT_MIN_SUBTREE};
    use crate::matcache::{decode_value, encode_value};
    use crate::matgraph::{eval_reference, MaterialGraph, Node, NodeId, NodeKind, UvChannel};
    use crate::stackvm::{compile, CompileOptions};

    fn n(id: NodeId, kind: NodeKind, inputs: &[NodeId]) -> Node {
        Node {
            id,
            kind,
            inputs: inputs.to_vec(),
        }
    }

    fn program() -> (MaterialGraph, CompiledProgram) {
        let g = MaterialGraph::new(
            5,
            vec![
                n(0, NodeKind::Uv(UvChannel::Uv), &[]),
                n(1, NodeKind::Checker { scale: 3.0 }, &[0]),
                n(2, NodeKind::ConstColor([0.9, 0.3, 0.1]), &[]),
                n(3, NodeKind::Mul, &[1, 2]),
                n(4, NodeKind::SinWave, &[3]),
                n(5, NodeKind::Normal, &[]),
                n(6, NodeKind::Mul, &[4, 5]),
                n(7, NodeKind::BsdfDiffuse, &[6]),
                n(8, NodeKind::BsdfOutput, &[7]),
            ],
            8,
        )
        .unwrap();
        let (folded, ag) = analyze(&g, DEFAULT_MIN_SUBTREE);
        assert_eq!(folded.graph, g);
        assert_eq!(ag.cache_points, vec![4]);
        (g, compile(&ag, &CompileOptions::default()).unwrap())
    }

    #[test]
    fn disabled_cache_matches_reference() {
        let (g, p) = program();
        for i in 0..50 {
            let mut sp = ShadingPoint::at_uv(i as f64 * 0.037, 1.0 - i as f64 * 0.021);
            sp.normal = crate::math::Vec3::new(0.0, 0.6, 0.8);
            let mut stats = EvalStats::default();
            let v = execute(&p, &sp, None, &mut stats);
            assert!(v.bit_eq(&eval_reference(&g, &sp)));
            assert_eq!(stats.lookups, 0);
            assert_eq!(stats.max_depth as usize, p.max_stack);
        }
    }

    #[test]
    fn second_run_hits_and_skips() {
        let (g, p) = program();
        let cache = MaterialCache::new(1024, 4).unwrap();
        let binding = CacheBinding {
            cache: &cache,
            mip_offset: 0,
        };
        let mut sp = ShadingPoint::at_uv(0.41, 0.77);
        sp.normal = crate::math::Vec3::new(0.0, 0.0, 1.0);
        sp.g1 = [0.01, 0.0];
        sp.g2 = [0.0, 0.01];

        let mut first = EvalStats::default();
        let a = execute(&p, &sp, Some(&binding), &mut first);
        assert_eq!(first.nodes_found, 0);
        assert_eq!((first.stores_attempted, first.stores_won), (1, 1));
        assert!(a.bit_eq(&eval_reference(&g, &sp)));

        let mut second = EvalStats::default();
        let b = execute(&p, &sp, Some(&binding), &mut second);
        assert_eq!(second.nodes_found, 1);
        assert!(second.instructions_executed < first.instructions_executed);
        assert_eq!(second.stores_attempted, 0);
        // the only difference is codec quantization of the cached sub-tree
        let cached = eval_reference_node(&g, 4, &sp);
        let expect = mg::mul(decode_value(encode_value(&cached)), sp.normal_value());
        assert!(b.bit_eq(&Value::color(expect.rgb())));
    }

    fn eval_reference_node(g: &MaterialGraph, id: NodeId, sp: &ShadingPoint) -> Value {
        crate::matgraph::eval_node_unmemoized(g, id, sp)
    }

    #[derive(Default)]
    struct Log {
        lookups: Vec<CacheDescriptor>,
        stores: Vec<CacheDescriptor>,
    }

    impl ExecObserver for Log {
        fn on_lookup(&mut self, desc: &CacheDescriptor, _hit: Option<u32>) {
            self.lookups.push(*desc);
        }
        fn on_store(&mut self, desc: &CacheDescriptor, _value: &Value, _outcome: UpdateOutcome) {
            self.stores.push(*desc);
        }
    }

    #[test]
    fn store_reuses_lookup_descriptor() {
        let (_, p) = program();
        let cache = MaterialCache::new(64, 2).unwrap();
        let binding = CacheBinding {
            cache: &cache,
            mip_offset: 1,
        };
        let mut sp = ShadingPoint::at_uv(0.2, 0.9);
        sp.g1 = [0.1, 0.0];
        sp.g2 = [0.0, 0.3];
        let mut log = Log::default();
        execute_observed(&p, &sp, Some(&binding), &mut EvalStats::default(), &mut log);
        assert_eq!(log.lookups, log.stores);
        assert_eq!(log.lookups[0].mip_level, 3 + 1);
        assert_eq!(log.lookups[0].mat_idx, 5);
    }
}
