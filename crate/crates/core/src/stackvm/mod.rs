//! Stack-machine form of a material graph.
//!
//! [`compile`] expands the analyzed graph into a post-order instruction
//! stream. Each cache point's sub-tree is wrapped as
//!
//! ```text
//! CacheLookup  -> on hit: push cached value, jump past the store
//! ...sub-tree...
//! CacheStore   -> insert top of stack, leave it there
//! ```
//!
//! [`execute`] runs a program against a shading point, optionally with a
//! shared [`MaterialCache`](crate::matcache::MaterialCache).

mod disasm;
mod exec;

use std::collections::HashMap;

use crate::analysis::AnalyzedGraph;
use crate::matgraph::{FbmParams, NodeId, NodeKind, RampStop, TextureRef, UvChannel, Value, ValueType, WrapMode};

pub use disasm::disassemble;
pub use exec::{execute, execute_observed, CacheBinding, EvalStats, ExecObserver, NoObserver};

/// Hard capacity of the operand stack.
pub const STACK_CAPACITY: usize = 256;
/// Maximum number of cache points per material (one pending descriptor each).
pub const MAX_CACHE_POINTS: usize = 64;
/// Tree expansion of heavily shared graphs is cut off here.
pub const MAX_CODE_LEN: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub enum Instruction {
    PushConst(Value),
    LoadUv(UvChannel),
    LoadPosition,
    LoadNormal,
    LoadIncoming,
    /// Index into [`CompiledProgram::textures`].
    TexSample { tex: u32, wrap: WrapMode },
    Checker(f32),
    Noise(FbmParams),
    Add,
    Sub,
    Mul,
    Div,
    Mix,
    Clamp,
    Dot,
    SinWave,
    /// Index into [`CompiledProgram::ramps`].
    Ramp(u32),
    Power,
    BsdfDiffuse,
    /// On hit, jump to `pc + 1 + skip`.
    CacheLookup {
        slot: u16,
        node: NodeId,
        uses_uv: bool,
        value_type: ValueType,
        skip: u32,
    },
    CacheStore {
        slot: u16,
        node: NodeId,
        uses_uv: bool,
    },
    End,
}

impl Instruction {
    /// (pops, pushes) on the fall-through path.
    pub fn stack_effect(&self) -> (usize, usize) {
        use Instruction::*;
        match self {
            PushConst(_) | LoadUv(_) | LoadPosition | LoadNormal | LoadIncoming => (0, 1),
            TexSample { .. } | Checker(_) | Noise(_) | Clamp | SinWave | Ramp(_) | BsdfDiffuse => (1, 1),
            Add | Sub | Mul | Div | Dot | Power => (2, 1),
            Mix => (3, 1),
            CacheLookup { .. } | CacheStore { .. } => (0, 0),
            End => (1, 0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompiledProgram {
    pub material_id: u32,
    pub code: Vec<Instruction>,
    /// Deepest operand stack reached on any path.
    pub max_stack: usize,
    pub textures: Vec<TextureRef>,
    pub ramps: Vec<Vec<RampStop>>,
    /// Number of pending-descriptor slots (one per cache point).
    pub n_slots: usize,
}

impl CompiledProgram {
    pub fn lookup_count(&self) -> usize {
        self.code
            .iter()
            .filter(|i| matches!(i, Instruction::CacheLookup { .. }))
            .count()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CompileOptions {
    pub stack_limit: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            stack_limit: STACK_CAPACITY,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("material {material}: operand stack needs {depth} slots, limit is {limit}")]
    StackOverflow { material: u32, depth: usize, limit: usize },
    #[error("stack limit {0} exceeds the VM capacity of {STACK_CAPACITY}")]
    BadLimit(usize),
    #[error("material {material}: {count} cache points, at most {MAX_CACHE_POINTS} supported")]
    TooManyCachePoints { material: u32, count: usize },
    #[error("material {material}: cache point {inner} nested inside cache point {outer}")]
    Nested { material: u32, outer: NodeId, inner: NodeId },
    #[error("material {material}: expanded program exceeds {MAX_CODE_LEN} instructions")]
    TooLarge { material: u32 },
}

struct Emitter<'a> {
    ag: &'a AnalyzedGraph,
    slot_of: HashMap<NodeId, u16>,
    code: Vec<Instruction>,
    textures: Vec<TextureRef>,
    tex_index: HashMap<String, u32>,
    ramps: Vec<Vec<RampStop>>,
}

impl Emitter<'_> {
    fn push(&mut self, i: Instruction) -> Result<(), CompileError> {
        if self.code.len() >= MAX_CODE_LEN {
            return Err(CompileError::TooLarge {
                material: self.ag.graph.material_id(),
            });
        }
        self.code.push(i);
        Ok(())
    }

    fn emit(&mut self, id: NodeId, bracket: Option<NodeId>) -> Result<(), CompileError> {
        let g = &self.ag.graph;
        if let Some(&slot) = self.slot_of.get(&id) {
            if let Some(outer) = bracket {
                return Err(CompileError::Nested {
                    material: g.material_id(),
                    outer,
                    inner: id,
                });
            }
            let uses_uv = self.ag.uses_uv[&id];
            let at = self.code.len();
            self.push(Instruction::CacheLookup {
                slot,
                node: id,
                uses_uv,
                value_type: g.value_type(id),
                skip: 0,
            })?;
            self.emit_node(id, Some(id))?;
            self.push(Instruction::CacheStore { slot, node: id, uses_uv })?;
            let skip = (self.code.len() - at - 1) as u32;
            if let Instruction::CacheLookup { skip: s, .. } = &mut self.code[at] {
                *s = skip;
            }
            return Ok(());
        }
        self.emit_node(id, bracket)
    }

    fn emit_node(&mut self, id: NodeId, bracket: Option<NodeId>) -> Result<(), CompileError> {
        let node = self.ag.graph.node(id);
        for &input in &node.inputs {
            self.emit(input, bracket)?;
        }
        let instr = match &node.kind {
            NodeKind::ConstFloat(x) => Instruction::PushConst(Value::scalar(*x)),
            NodeKind::ConstColor(c) => Instruction::PushConst(Value::color(*c)),
            NodeKind::Uv(ch) => Instruction::LoadUv(*ch),
            NodeKind::Position => Instruction::LoadPosition,
            NodeKind::Normal => Instruction::LoadNormal,
            NodeKind::IncomingDir => Instruction::LoadIncoming,
            NodeKind::TexImage { image, wrap } => {
                let next = self.textures.len() as u32;
                let tex = *self.tex_index.entry(image.name.clone()).or_insert(next);
                if tex == next {
                    self.textures.push(image.clone());
                }
                Instruction::TexSample { tex, wrap: *wrap }
            }
            NodeKind::Checker { scale } => Instruction::Checker(*scale),
            NodeKind::NoiseFbm(p) => Instruction::Noise(*p),
            NodeKind::Add => Instruction::Add,
            NodeKind::Sub => Instruction::Sub,
            NodeKind::Mul => Instruction::Mul,
            NodeKind::Div => Instruction::Div,
            NodeKind::Mix => Instruction::Mix,
            NodeKind::Clamp => Instruction::Clamp,
            NodeKind::Dot => Instruction::Dot,
            NodeKind::SinWave => Instruction::SinWave,
            NodeKind::ColorRamp(stops) => {
                self.ramps.push(stops.clone());
                Instruction::Ramp(self.ramps.len() as u32 - 1)
            }
            NodeKind::Power => Instruction::Power,
            NodeKind::BsdfDiffuse => Instruction::BsdfDiffuse,
            // End performs the output conversion
            NodeKind::BsdfOutput => return Ok(()),
        };
        self.push(instr)
    }
}

/// Deepest stack over both the hit and miss path of every bracket.
fn simulate_depth(code: &[Instruction]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for instr in code {
        if let Instruction::CacheLookup { .. } = instr {
            // hit path: one value pushed, then continue after the store
            max = max.max(depth + 1);
        }
        let (pop, push) = instr.stack_effect();
        debug_assert!(depth >= pop, "stack underflow in generated code");
        depth = depth - pop + push;
        max = max.max(depth);
    }
    debug_assert_eq!(depth, 0);
    max
}

pub fn compile(ag: &AnalyzedGraph, opts: &CompileOptions) -> Result<CompiledProgram, CompileError> {
    let material = ag.graph.material_id();
    if opts.stack_limit > STACK_CAPACITY {
        return Err(CompileError::BadLimit(opts.stack_limit));
    }
    if ag.cache_points.len() > MAX_CACHE_POINTS {
        return Err(CompileError::TooManyCachePoints {
            material,
            count: ag.cache_points.len(),
        });
    }
    let mut e = Emitter {
        ag,
        slot_of: ag
            .cache_points
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as u16))
            .collect(),
        code: Vec::new(),
        textures: Vec::new(),
        tex_index: HashMap::new(),
        ramps: Vec::new(),
    };
    e.emit(ag.graph.output_node(), None)?;
    e.push(Instruction::End)?;
    let max_stack = simulate_depth(&e.code);
    if max_stack > opts.stack_limit {
        return Err(CompileError::StackOverflow {
            material,
            depth: max_stack,
            limit: opts.stack_limit,
        });
    }
    Ok(CompiledProgram {
        material_id: material,
        code: e.code,
        max_stack,
        textures: e.textures,
        ramps: e.ramps,
        n_slots: ag.cache_points.len(),
    })
}
