//! `matcache` command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 validation, 4 audit failure.

pub mod report;
pub mod viridis;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use matcache_core::analysis::{analyze, to_dot, DEFAULT_MIN_SUBTREE};
use matcache_core::imageio::{quantize, read_pfm, write_pfm, write_ppm, ImageError, Rgb8Image, RgbImage};
use matcache_core::matcache::{MaterialCache, TableImage};
use matcache_core::matgraph::load_graph_file;
use matcache_core::stackvm::{compile, disassemble, CompileOptions};
use matcache_core::tracer::{image_error, render_with_cache, RenderConfig, Scene};

pub use report::{heatmap_image, run_sweep, RenderReport, SweepReport, SweepRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 1,
    Io = 2,
    Validation = 3,
    Audit = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    fn new(exit: Exit, message: impl Into<String>) -> Self {
        CliError {
            exit,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(Exit::Io, format!("{}: {e}", path.display()))
}

fn image_err(path: &Path, e: ImageError) -> CliError {
    match e {
        ImageError::Io(_) => io_err(path, e),
        other => CliError::new(Exit::Validation, format!("{}: {other}", path.display())),
    }
}

#[derive(Parser, Debug)]
#[command(name = "matcache", version, about = "Material-network caching runtime and desk-scale path tracer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a scene to a PFM image plus statistics.
    Render(RenderArgs),
    /// Print dependence classes and cache points of a material.
    Analyze(AnalyzeArgs),
    /// Compile a material to stack-machine code.
    Compile(CompileArgs),
    /// Time a scene over combinations of cells and entries.
    Sweep(SweepArgs),
    /// Scaled absolute difference of two PFM images.
    Diff(DiffArgs),
    /// Map per-pixel cache hits from a stats file through viridis.
    Heatmap(HeatmapArgs),
    /// Check the invariants of a cache table dump.
    CacheAudit(AuditArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Args, Debug, Clone)]
pub struct SceneArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    pub spp: u32,
    /// Overrides the camera resolution.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub width: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub height: Option<u32>,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub mip_offset: i32,
    #[arg(long, env = "MATCACHE_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub max_bounces: u32,
    #[arg(long, default_value_t = DEFAULT_MIN_SUBTREE, value_parser = parse_min_subtree)]
    pub min_subtree: usize,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub cache: OnOff,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub cells: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub entries: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    #[arg(long)]
    pub heatmap_out: Option<PathBuf>,
    /// Gamma-encoded 8-bit preview.
    #[arg(long)]
    pub preview_out: Option<PathBuf>,
    /// Write the final cache table for `cache-audit`.
    #[arg(long)]
    pub cache_dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub material: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_SUBTREE, value_parser = parse_min_subtree)]
    pub min_subtree: usize,
    /// JSON report destination (default: stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    #[arg(long)]
    pub material: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_SUBTREE, value_parser = parse_min_subtree)]
    pub min_subtree: usize,
    #[arg(long, default_value_t = 256)]
    pub stack_limit: usize,
    /// Print the disassembly.
    #[arg(long)]
    pub dump: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_count)]
    pub cells_list: Vec<u64>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_count)]
    pub entries_list: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiffArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub scale: f32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    pub stats: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Value mapped to the top of the colormap.
    #[arg(long, default_value_t = 20.0)]
    pub max: f64,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    pub dump: PathBuf,
}

fn parse_min_subtree(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

/// Positive integer, also accepting `10^k` and `1e6` forms.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    let v = if let Some((b, e)) = s.split_once('^') {
        let b: u64 = b.parse().map_err(|_| format!("bad base in {s:?}"))?;
        let e: u32 = e.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
        b.checked_pow(e).ok_or_else(|| format!("{s} overflows"))?
    } else if let Some((m, e)) = s.split_once(['e', 'E']) {
        let m: u64 = m.parse().map_err(|_| format!("bad mantissa in {s:?}"))?;
        let e: u32 = e.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
        10u64
            .checked_pow(e)
            .and_then(|p| p.checked_mul(m))
            .ok_or_else(|| format!("{s} overflows"))?
    } else {
        s.parse().map_err(|_| format!("not a count: {s:?}"))?
    };
    if v == 0 {
        return Err("must be at least 1".into());
    }
    Ok(v)
}

pub fn load_scene_args(a: &SceneArgs) -> Result<Scene> {
    let scene = Scene::load(&a.scene, a.min_subtree).map_err(|e| {
        use matcache_core::tracer::SceneError;
        let exit = match &e {
            SceneError::Io { .. } => Exit::Io,
            SceneError::Material { source, .. } if matches!(source, matcache_core::matgraph::GraphError::Io(_)) => {
                Exit::Io
            }
            _ => Exit::Validation,
        };
        CliError::new(exit, e.to_string())
    })?;
    let w = a.width.unwrap_or(scene.width());
    let h = a.height.unwrap_or(scene.height());
    Ok(scene.with_resolution(w, h))
}

pub fn render_config(a: &SceneArgs, cache: bool, cells: u64, entries: u64) -> RenderConfig {
    RenderConfig {
        spp: a.spp,
        max_bounces: a.max_bounces,
        threads: a.threads as usize,
        cache_enabled: cache,
        n_cells: cells,
        n_entries: entries,
        mip_offset: a.mip_offset,
        rng_seed: a.seed,
        ..RenderConfig::default()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn write_pfm_file(path: &Path, img: &RgbImage) -> Result<()> {
    write_with(path, |w| write_pfm(w, img))
}

pub fn write_ppm_file(path: &Path, img: &Rgb8Image) -> Result<()> {
    write_with(path, |w| write_ppm(w, img))
}

pub fn read_pfm_file(path: &Path) -> Result<RgbImage> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_pfm(&mut BufReader::new(f)).map_err(|e| image_err(path, e))
}

fn cmd_render(a: &RenderArgs, out: &mut dyn Write) -> Result<()> {
    let scene = load_scene_args(&a.scene)?;
    let cfg = render_config(&a.scene, a.cache == OnOff::On, a.cells, a.entries);
    let cache = if cfg.cache_enabled {
        Some(MaterialCache::new(cfg.n_cells, cfg.n_entries).map_err(|e| CliError::new(Exit::Usage, e.to_string()))?)
    } else {
        None
    };
    let (fb, stats) =
        render_with_cache(&scene, &cfg, cache.as_ref()).map_err(|e| CliError::new(Exit::Usage, e.to_string()))?;
    let img = fb.image();
    write_pfm_file(&a.out, &img)?;
    let report = RenderReport::new(&fb, &stats, &cfg);
    if let Some(p) = &a.stats_out {
        let json = serde_json::to_string_pretty(&report).expect("stats serialize");
        write_with(p, |w| w.write_all(json.as_bytes()).and_then(|_| w.write_all(b"\n")))?;
    }
    if let Some(p) = &a.heatmap_out {
        write_ppm_file(p, &heatmap_image(&report.per_pixel_nodes_found, fb.width, fb.height, 20.0))?;
    }
    if let Some(p) = &a.preview_out {
        write_ppm_file(p, &quantize(&img, true))?;
    }
    if let (Some(p), Some(c)) = (&a.cache_dump, &cache) {
        write_with(p, |w| c.snapshot().write_to(w))?;
    }
    let _ = writeln!(
        out,
        "rendered {}x{} spp={} in {:.3}s: lookups={} hits={} hit_rate={:.4} inserts_won={} inserts_lost_full={}",
        fb.width,
        fb.height,
        cfg.spp,
        stats.wall_time_s,
        stats.lookups,
        stats.hits,
        stats.hit_rate,
        stats.inserts_won,
        stats.inserts_lost_full
    );
    Ok(())
}

fn load_material(path: &Path) -> Result<matcache_core::matgraph::MaterialGraph> {
    load_graph_file(path).map_err(|e| {
        let exit = match e {
            matcache_core::matgraph::GraphError::Io(_) => Exit::Io,
            _ => Exit::Validation,
        };
        CliError::new(exit, format!("{}: {e}", path.display()))
    })
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let g = load_material(&a.material)?;
    let (folded, ag) = analyze(&g, a.min_subtree);
    let report = report::AnalyzeReport::new(&g, &folded, &ag);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &a.json {
        Some(p) => write_with(p, |w| writeln!(w, "{json}"))?,
        None => {
            let _ = writeln!(out, "{json}");
        }
    }
    if let Some(p) = &a.dot {
        let dot = to_dot(&ag);
        write_with(p, |w| w.write_all(dot.as_bytes()))?;
    }
    Ok(())
}

fn cmd_compile(a: &CompileArgs, out: &mut dyn Write) -> Result<()> {
    let g = load_material(&a.material)?;
    let (_, ag) = analyze(&g, a.min_subtree);
    let prog = compile(&ag, &CompileOptions { stack_limit: a.stack_limit })
        .map_err(|e| CliError::new(Exit::Validation, format!("{}: {e}", a.material.display())))?;
    let text = if a.dump {
        disassemble(&prog)
    } else {
        format!(
            "material {}: {} instructions, {} cache lookups, max_stack {}\n",
            prog.material_id,
            prog.code.len(),
            prog.lookup_count(),
            prog.max_stack
        )
    };
    match &a.out {
        Some(p) => write_with(p, |w| w.write_all(text.as_bytes())),
        None => {
            let _ = out.write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let scene = load_scene_args(&a.scene)?;
    let base = render_config(&a.scene, false, 1, 1);
    let report =
        run_sweep(&scene, &base, &a.cells_list, &a.entries_list).map_err(|e| CliError::new(Exit::Usage, e.to_string()))?;
    let csv = report.to_csv();
    match &a.out {
        Some(p) => write_with(p, |w| w.write_all(csv.as_bytes())),
        None => {
            let _ = out.write_all(csv.as_bytes());
            Ok(())
        }
    }
}

fn cmd_diff(a: &DiffArgs, out: &mut dyn Write) -> Result<()> {
    let ia = read_pfm_file(&a.a)?;
    let ib = read_pfm_file(&a.b)?;
    let e = image_error(&ia, &ib, a.scale).map_err(|e| CliError::new(Exit::Validation, e.to_string()))?;
    write_ppm_file(&a.out, &quantize(&e.diff, false))?;
    let _ = writeln!(
        out,
        "mean_abs={:.6e} max_abs={:.6e} frac_below_0.05={:.6}",
        e.mean_abs, e.max_abs, e.frac_below_005
    );
    Ok(())
}

fn cmd_heatmap(a: &HeatmapArgs, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(&a.stats).map_err(|e| io_err(&a.stats, e))?;
    let stats: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::new(Exit::Validation, format!("{}: {e}", a.stats.display())))?;
    let field = |name: &str| {
        stats
            .get(name)
            .ok_or_else(|| CliError::new(Exit::Validation, format!("{}: missing field {name:?}", a.stats.display())))
    };
    let values: Vec<f64> = serde_json::from_value(field("per_pixel_nodes_found")?.clone())
        .map_err(|e| CliError::new(Exit::Validation, format!("per_pixel_nodes_found: {e}")))?;
    let dim = |name: &str| -> Result<usize> {
        field(name)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| CliError::new(Exit::Validation, format!("{name} must be an integer")))
    };
    let (w, h) = (dim("width")?, dim("height")?);
    if w * h != values.len() {
        return Err(CliError::new(
            Exit::Validation,
            format!("{} values for a {w}x{h} image", values.len()),
        ));
    }
    if !(a.max > 0.0) {
        return Err(CliError::new(Exit::Usage, "--max must be positive"));
    }
    write_ppm_file(&a.out, &heatmap_image(&values, w, h, a.max))?;
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let _ = writeln!(out, "mean nodes found per sample: {mean:.4}");
    Ok(())
}

fn cmd_audit(a: &AuditArgs, out: &mut dyn Write) -> Result<()> {
    let f = File::open(&a.dump).map_err(|e| io_err(&a.dump, e))?;
    let table = TableImage::read_from(&mut BufReader::new(f))
        .map_err(|e| CliError::new(Exit::Validation, format!("{}: {e}", a.dump.display())))?;
    let r = table.audit();
    let total = r.n_cells * r.n_entries;
    let _ = writeln!(
        out,
        "cells={} entries={} occupied={} ({:.4}%) full_cells={}",
        r.n_cells,
        r.n_entries,
        r.occupied,
        100.0 * r.occupied as f64 / total as f64,
        r.full_cells
    );
    if r.is_clean() {
        let _ = writeln!(out, "audit: clean");
        Ok(())
    } else {
        for p in r.problems.iter().take(20) {
            let _ = writeln!(out, "problem: {p}");
        }
        Err(CliError::new(
            Exit::Audit,
            format!("audit failed: {} problem(s), first: {}", r.problems.len(), r.problems[0]),
        ))
    }
}

/// Execute a parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Render(a) => cmd_render(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Compile(a) => cmd_compile(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Diff(a) => cmd_diff(a, out),
        Command::Heatmap(a) => cmd_heatmap(a, out),
        Command::CacheAudit(a) => cmd_audit(a, out),
    }
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Usage as i32 } else { Exit::Ok as i32 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => Exit::Ok as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit as i32
        }
    }
}
