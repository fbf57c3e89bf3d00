//! Bundled fixtures: materials, scenes and goldens.
//!
//! Goldens are regenerated with `UPDATE_GOLDENS=1 cargo test -p matcache-core --test fixtures`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use matcache_core::analysis::{analyze, DepClass, DEFAULT_MIN_SUBTREE};
use matcache_core::matgraph::gen::random_shading_point;
use matcache_core::matgraph::{eval_reference, load_graph_file, MaterialGraph, NodeKind, Value};
use matcache_core::stackvm::{compile, disassemble, execute, CompileOptions, EvalStats, Instruction};
use matcache_core::tracer::load_scene;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn material(name: &str) -> MaterialGraph {
    let p = fixtures().join("materials").join(name);
    load_graph_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn blessing() -> bool {
    std::env::var_os("UPDATE_GOLDENS").is_some()
}

/// Compare `actual` with the golden file, or rewrite it when blessing.
fn check_golden(name: &str, actual: &str) {
    let p = fixtures().join("golden").join(name);
    if blessing() {
        std::fs::write(&p, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&p)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDENS=1)", p.display()));
    assert_eq!(expected, actual, "golden {name} differs");
}

fn rgb_bits(v: &Value) -> [u32; 3] {
    v.rgb().map(f32::to_bits)
}

#[test]
fn every_material_loads_and_compiles() {
    let dir = fixtures().join("materials");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        let g = load_graph_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let (_, ag) = analyze(&g, DEFAULT_MIN_SUBTREE);
        compile(&ag, &CompileOptions::default()).unwrap();
        n += 1;
    }
    assert!(n >= 20, "only {n} materials");
}

#[test]
fn every_scene_loads() {
    for name in ["cornell_mat", "noise_gallery", "texture_room", "cache_hostile"] {
        let s = load_scene(fixtures().join("scenes").join(format!("{name}.json")))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!((s.width(), s.height()), (256, 256));
        if name == "cache_hostile" {
            assert_eq!(s.cache_point_count(), 0);
        } else {
            assert!(s.cache_point_count() > 0, "{name} has no cache points");
        }
    }
}

#[test]
fn classroom_is_large() {
    assert!(material("classroom_like.json").node_count() >= 100);
}

#[test]
fn classroom_dependence_matches_independent_walk() {
    let g = material("classroom_like.json");
    // The golden was computed on the unfolded graph, so classify that.
    let dep = matcache_core::analysis::classify_deps(&g);
    let text = std::fs::read_to_string(fixtures().join("golden/classroom_like.deps.json")).unwrap();
    let golden: BTreeMap<String, DepClass> = serde_json::from_str(&text).unwrap();
    assert_eq!(golden.len(), g.node_count());
    for (id, class) in golden {
        let id: usize = id.parse().unwrap();
        assert_eq!(dep[id], class, "node {id}");
    }
}

#[test]
fn classroom_reference_golden() {
    let g = material("classroom_like.json");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = String::new();
    for i in 0..10 {
        let sp = random_shading_point(&mut rng);
        let b = rgb_bits(&eval_reference(&g, &sp));
        out.push_str(&format!("{i} {:08x} {:08x} {:08x}\n", b[0], b[1], b[2]));
    }
    check_golden("classroom_like.eval.txt", &out);
}

#[test]
fn classroom_vm_matches_reference() {
    let g = material("classroom_like.json");
    let (_, ag) = analyze(&g, DEFAULT_MIN_SUBTREE);
    assert!(!ag.cache_points.is_empty());
    let prog = compile(&ag, &CompileOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let sp = random_shading_point(&mut rng);
        let mut st = EvalStats::default();
        let vm = execute(&prog, &sp, None, &mut st);
        let reference = eval_reference(&g, &sp);
        assert!(vm.bit_eq(&reference), "{vm:?} vs {reference:?} at {sp:?}");
    }
}

#[test]
fn fold_chain_collapses_to_one_constant() {
    let g = material("fold_chain.json");
    let (folded, ag) = analyze(&g, DEFAULT_MIN_SUBTREE);
    assert!(ag.cache_points.is_empty());
    let base = ag.graph.node(ag.graph.output_node()).inputs[0];
    let color = ag.graph.node(base).inputs[0];
    assert!(ag.graph.node(color).kind.is_const());
    assert_eq!(ag.graph.node_count(), 3);
    assert_eq!(folded.remap.len(), g.node_count());
    let prog = compile(&ag, &CompileOptions::default()).unwrap();
    assert_eq!(prog.code.len(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let sp = random_shading_point(&mut rng);
        assert!(eval_reference(&ag.graph, &sp).bit_eq(&eval_reference(&g, &sp)));
    }
}

fn single_cache_point(name: &str) -> (MaterialGraph, u32, bool) {
    let g = material(name);
    let (folded, ag) = analyze(&g, DEFAULT_MIN_SUBTREE);
    assert_eq!(ag.cache_points.len(), 1, "{name}: {:?}", ag.cache_points);
    let p = ag.cache_points[0];
    let original = folded.remap.iter().position(|&n| n == Some(p)).unwrap() as u32;
    (g, original, ag.uses_uv[&p])
}

#[test]
fn mix_of_texture_and_checker_is_cached_at_the_mix() {
    let (g, p, uses_uv) = single_cache_point("mix_tex_checker.json");
    assert!(matches!(g.node(p).kind, NodeKind::Mix));
    assert!(uses_uv);
}

#[test]
fn normal_blocks_product_but_not_texture_branch() {
    let (g, p, uses_uv) = single_cache_point("normal_dot_tex.json");
    assert!(matches!(g.node(p).kind, NodeKind::TexImage { .. }));
    assert!(uses_uv);
}

#[test]
fn diamond_shares_its_leaf() {
    let g = material("diamond.json");
    let add = g.node(g.output_node()).inputs[0];
    let add = g.node(add).inputs[0];
    assert_eq!(g.subtree_nodes(add).len(), 4);
    let (_, p, _) = single_cache_point("diamond.json");
    assert_eq!(p, add);
}

#[test]
fn mix_tex_checker_disassembly_golden() {
    let g = material("mix_tex_checker.json");
    let (_, ag) = analyze(&g, DEFAULT_MIN_SUBTREE);
    let prog = compile(&ag, &CompileOptions::default()).unwrap();
    let lookup = prog
        .code
        .iter()
        .position(|i| matches!(i, Instruction::CacheLookup { .. }))
        .unwrap();
    if let Instruction::CacheLookup { skip, .. } = prog.code[lookup] {
        assert!(matches!(prog.code[lookup + skip as usize], Instruction::CacheStore { .. }));
    }
    check_golden("mix_tex_checker.disasm.txt", &disassemble(&prog));
}
