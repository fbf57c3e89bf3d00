//! Stats, analysis and sweep reports.

use std::collections::BTreeMap;

use serde::Serialize;

use matcache_core::analysis::{AnalyzedGraph, DepClass, Folded};
use matcache_core::imageio::{to_u8, Rgb8Image};
use matcache_core::matcache::memory_bytes;
use matcache_core::matgraph::MaterialGraph;
use matcache_core::tracer::{render, FrameBuffers, PassStats, RenderConfig, RenderError, RenderStats, Scene};

use crate::viridis::viridis;

/// Contents of `--stats-out`.
#[derive(Clone, Debug, Serialize)]
pub struct RenderReport {
    pub wall_time_s: f64,
    pub hits: u64,
    pub lookups: u64,
    pub hit_rate: f64,
    pub inserts_won: u64,
    pub inserts_lost_full: u64,
    pub inserts_present: u64,
    pub inserts_lost_race: u64,
    pub stores_attempted: u64,
    pub instructions_executed: u64,
    pub memory_bytes: u64,
    pub width: usize,
    pub height: usize,
    pub spp: u32,
    pub cache_enabled: bool,
    pub n_cells: u64,
    pub n_entries: u64,
    pub mip_offset: i32,
    pub seed: u64,
    pub passes: Vec<PassStats>,
    pub per_pixel_nodes_found: Vec<f64>,
}

impl RenderReport {
    pub fn new(fb: &FrameBuffers, s: &RenderStats, cfg: &RenderConfig) -> Self {
        RenderReport {
            wall_time_s: s.wall_time_s,
            hits: s.hits,
            lookups: s.lookups,
            hit_rate: s.hit_rate,
            inserts_won: s.inserts_won,
            inserts_lost_full: s.inserts_lost_full,
            inserts_present: s.inserts_present,
            inserts_lost_race: s.inserts_lost_race,
            stores_attempted: s.stores_attempted,
            instructions_executed: s.instructions_executed,
            memory_bytes: s.memory_bytes,
            width: fb.width,
            height: fb.height,
            spp: cfg.spp,
            cache_enabled: cfg.cache_enabled,
            n_cells: if cfg.cache_enabled { cfg.n_cells } else { 0 },
            n_entries: if cfg.cache_enabled { cfg.n_entries } else { 0 },
            mip_offset: cfg.mip_offset,
            seed: cfg.rng_seed,
            passes: s.passes.clone(),
            per_pixel_nodes_found: fb.nodes_found_per_sample(),
        }
    }
}

/// Average hits per sample through viridis over `[0, max]`, linear 8-bit.
pub fn heatmap_image(values: &[f64], width: usize, height: usize, max: f64) -> Rgb8Image {
    let mut data = Vec::with_capacity(values.len() * 3);
    for &v in values {
        let c = viridis((v / max) as f32);
        data.extend(c.iter().map(|&x| to_u8(x, false)));
    }
    Rgb8Image { width, height, data }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyzeReport {
    pub material_id: u32,
    pub nodes: usize,
    pub folded_nodes: usize,
    /// Original id -> id after folding (absent when removed).
    pub remap: BTreeMap<u32, u32>,
    pub dep: BTreeMap<u32, DepClass>,
    pub cache_points: Vec<CachePointReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CachePointReport {
    pub node: u32,
    pub kind: &'static str,
    pub uses_uv: bool,
    pub subtree_size: usize,
}

impl AnalyzeReport {
    pub fn new(original: &MaterialGraph, folded: &Folded, ag: &AnalyzedGraph) -> Self {
        AnalyzeReport {
            material_id: original.material_id(),
            nodes: original.node_count(),
            folded_nodes: ag.graph.node_count(),
            remap: folded
                .remap
                .iter()
                .enumerate()
                .filter_map(|(old, new)| new.map(|n| (old as u32, n)))
                .collect(),
            dep: ag.dep.iter().enumerate().map(|(i, &d)| (i as u32, d)).collect(),
            cache_points: ag
                .cache_points
                .iter()
                .map(|&p| CachePointReport {
                    node: p,
                    kind: ag.graph.node(p).kind.name(),
                    uses_uv: ag.uses_uv[&p],
                    subtree_size: ag.graph.subtree_nodes(p).len(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_cells: u64,
    pub n_entries: u64,
    pub wall_time_s: f64,
    pub relative_time_pct: f64,
    pub hit_rate: f64,
    pub inserts_lost_full: u64,
    pub memory_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    /// The cache-off run; all relative times refer to it.
    pub baseline: SweepRow,
    /// Sorted by `(n_cells, n_entries)`.
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn row(&self, n_cells: u64, n_entries: u64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.n_cells == n_cells && r.n_entries == n_entries)
    }

    /// CSV with the baseline first as `0,0,...`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "n_cells,n_entries,wall_time_s,relative_time_pct,hit_rate,inserts_lost_full,memory_bytes\n",
        );
        for r in std::iter::once(&self.baseline).chain(&self.rows) {
            s.push_str(&format!(
                "{},{},{:.6},{:.3},{:.6},{},{}\n",
                r.n_cells, r.n_entries, r.wall_time_s, r.relative_time_pct, r.hit_rate, r.inserts_lost_full, r.memory_bytes
            ));
        }
        s
    }
}

/// Baseline render without cache, then one render per `(cells, entries)`.
pub fn run_sweep(
    scene: &Scene,
    base: &RenderConfig,
    cells: &[u64],
    entries: &[u64],
) -> Result<SweepReport, RenderError> {
    let off = RenderConfig {
        cache_enabled: false,
        ..base.clone()
    };
    let (_, s0) = render(scene, &off)?;
    let t0 = s0.wall_time_s;
    let baseline = SweepRow {
        n_cells: 0,
        n_entries: 0,
        wall_time_s: t0,
        relative_time_pct: 100.0,
        hit_rate: 0.0,
        inserts_lost_full: 0,
        memory_bytes: 0,
    };
    let mut combos: Vec<(u64, u64)> = cells
        .iter()
        .flat_map(|&c| entries.iter().map(move |&e| (c, e)))
        .collect();
    combos.sort_unstable();
    combos.dedup();
    let mut rows = Vec::with_capacity(combos.len());
    for (c, e) in combos {
        let mem = memory_bytes(c, e).ok_or_else(|| RenderError::Config(format!("{c} x {e} cache overflows")))?;
        let cfg = RenderConfig {
            cache_enabled: true,
            n_cells: c,
            n_entries: e,
            ..base.clone()
        };
        let (_, s) = render(scene, &cfg)?;
        rows.push(SweepRow {
            n_cells: c,
            n_entries: e,
            wall_time_s: s.wall_time_s,
            relative_time_pct: 100.0 * s.wall_time_s / t0,
            hit_rate: s.hit_rate,
            inserts_lost_full: s.inserts_lost_full,
            memory_bytes: mem,
        });
    }
    Ok(SweepReport { baseline, rows })
}
