//! Experiment driver: single runs, vector-length / L2-size sweeps, roofline
//! reports, the replication-strategy microbenchmark, and the self-validation
//! suite. All tabular output is deterministic: fixed column order, fixed row
//! order, fixed float formatting.

use crate::lowering::{conv_im2col_gemm, direct_conv_oracle};
use crate::memsim::{
    arithmetic_intensity, attainable_gflops, is_memory_bound, CacheConfig, CostModel, ExecStats,
    Replayer,
};
use crate::network::{
    builtin_cfg, parse_cfg, run_network_inference, LayerKind, NetworkError,
    NetworkModel, NetworkRun, RunMode,
};
use crate::vvm::{OpcodeClass, TraceSink, VectorMachine, VectorMachineConfig};
use crate::winograd::{
    build_winograd_matrices, conv_winograd, direct_tile_correlation, filter_transform,
    input_transform, interleave4, tuple_multiply, ReplicateStrategy, StrategyConfig, TileGrid,
    TransposeStrategy, UPack, VPack, WinogradMatrices,
};
use crate::{peak_relative_error, ConvShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("unknown network {0:?} (expected a builtin name or a cfg path)")]
    UnknownNetwork(String),
    #[error("sweep grid of {rows} rows exceeds the cap of {cap}; pass --force to run it")]
    GridTooLarge { rows: usize, cap: usize },
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// Load a model by builtin name or from cfg text on disk.
pub fn load_network(name_or_path: &str) -> Result<NetworkModel> {
    if let Some(text) = builtin_cfg(name_or_path) {
        return Ok(parse_cfg(text, name_or_path)?);
    }
    let path = std::path::Path::new(name_or_path);
    let text = std::fs::read_to_string(path)
        .map_err(|_| BenchError::UnknownNetwork(name_or_path.to_string()))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name_or_path);
    Ok(parse_cfg(&text, name)?)
}

/// One experiment point.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub vlen_bits: u32,
    pub l2_mib: u64,
    pub mode: RunMode,
    pub strategy: StrategyConfig,
    pub seed: u64,
    pub layer_limit: Option<usize>,
    pub cost: CostModel,
    pub cache_template: CacheConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            vlen_bits: 512,
            l2_mib: 1,
            mode: RunMode::Hybrid,
            strategy: StrategyConfig::default(),
            seed: 1,
            layer_limit: None,
            cost: CostModel::default(),
            cache_template: CacheConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn cache(&self) -> CacheConfig {
        CacheConfig {
            l2_bytes: self.l2_mib * 1024 * 1024,
            ..self.cache_template
        }
    }
}

pub fn run_once(model: &NetworkModel, cfg: &RunConfig) -> Result<NetworkRun> {
    Ok(run_network_inference(
        model,
        cfg.vlen_bits,
        &cfg.cache(),
        cfg.cost,
        cfg.mode,
        cfg.strategy,
        cfg.seed,
        cfg.layer_limit,
    )?)
}

/// Experiment grid over vector lengths and L2 sizes.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub vlens: Vec<u32>,
    pub l2_mibs: Vec<u64>,
    pub base: RunConfig,
    pub row_cap: usize,
    pub force: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            vlens: vec![512, 1024, 2048, 4096],
            l2_mibs: vec![1, 4, 16, 64, 256],
            base: RunConfig::default(),
            row_cap: 20_000,
            force: false,
        }
    }
}

const CSV_HEADER: &str = "network,mode,vlen_bits,l2_mib,layer,kind,algorithm,out_c,out_h,out_w,\
n_scalar,n_setvl,n_arith,n_fma,n_slide,n_permute,n_reduce,n_mem_unit,n_mem_strided,n_mem_indexed,\
flops,l1_accesses,l1_misses,l1_miss_rate,l2_accesses,l2_misses,l2_miss_rate,l2_writebacks,\
dram_bytes,cycles,seconds";

fn stats_csv_fields(stats: &ExecStats, cost: &CostModel) -> String {
    let mut s = String::new();
    for class in OpcodeClass::ALL {
        let _ = write!(s, "{},", stats.count(class));
    }
    let _ = write!(
        s,
        "{},{},{},{:.6},{},{},{:.6},{},{},{},{:.9}",
        stats.flops,
        stats.l1_accesses,
        stats.l1_misses,
        stats.l1_miss_rate(),
        stats.l2_accesses,
        stats.l2_misses,
        stats.l2_miss_rate(),
        stats.l2_writebacks,
        stats.dram_bytes,
        stats.cycles,
        stats.modeled_seconds(cost)
    );
    s
}

fn run_csv_rows(model: &NetworkModel, cfg: &RunConfig, run: &NetworkRun, out: &mut String) {
    let prefix = |layer: &str, kind: &str, algo: &str, c: usize, h: usize, w: usize| {
        format!(
            "{},{},{},{},{layer},{kind},{algo},{c},{h},{w},",
            model.name,
            cfg.mode.name(),
            cfg.vlen_bits,
            cfg.l2_mib
        )
    };
    for l in &run.layers {
        out.push_str(&prefix(
            &l.index.to_string(),
            l.kind.name(),
            l.algorithm.name(),
            l.out_c,
            l.out_h,
            l.out_w,
        ));
        out.push_str(&stats_csv_fields(&l.stats, &cfg.cost));
        out.push('\n');
    }
    out.push_str(&prefix("total", "-", "-", 0, 0, 0));
    out.push_str(&stats_csv_fields(&run.total, &cfg.cost));
    out.push('\n');
}

/// Full sweep -> CSV. Points run in parallel; the output row order is
/// (vlen, l2, layer) regardless of completion order.
pub fn cmd_sweep(model: &NetworkModel, spec: &SweepSpec) -> Result<String> {
    let n_layers = spec.base.layer_limit.unwrap_or(model.layers.len()).min(model.layers.len());
    let rows = spec.vlens.len() * spec.l2_mibs.len() * (n_layers + 1);
    if rows > spec.row_cap && !spec.force {
        return Err(BenchError::GridTooLarge { rows, cap: spec.row_cap });
    }
    for &v in &spec.vlens {
        if !v.is_power_of_two() || v < 128 {
            return Err(BenchError::Config(format!("bad vector length {v}")));
        }
    }
    if spec.vlens.is_empty() || spec.l2_mibs.is_empty() {
        return Err(BenchError::Config("sweep grid is empty".into()));
    }
    let grid: Vec<RunConfig> = spec
        .vlens
        .iter()
        .flat_map(|&vlen_bits| {
            spec.l2_mibs.iter().map(move |&l2_mib| RunConfig {
                vlen_bits,
                l2_mib,
                ..spec.base.clone()
            })
        })
        .collect();
    let runs: Vec<Result<NetworkRun>> =
        grid.par_iter().map(|cfg| run_once(model, cfg)).collect();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for (cfg, run) in grid.iter().zip(runs) {
        run_csv_rows(model, cfg, &run?, &mut csv);
    }
    Ok(csv)
}

/// Key=value summary of one run, layer table plus totals.
pub fn run_report(model: &NetworkModel, cfg: &RunConfig, run: &NetworkRun) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "network={}", model.name);
    let _ = writeln!(s, "mode={}", cfg.mode.name());
    let _ = writeln!(s, "vlen_bits={}", cfg.vlen_bits);
    let _ = writeln!(s, "l2_mib={}", cfg.l2_mib);
    let _ = writeln!(s, "seed={}", cfg.seed);
    for l in &run.layers {
        let _ = writeln!(
            s,
            "layer.{}.kind={} layer.{}.algorithm={} layer.{}.out={}x{}x{} layer.{}.cycles={} layer.{}.flops={} layer.{}.l2_miss_rate={:.4} layer.{}.dram_bytes={}",
            l.index, l.kind.name(), l.index, l.algorithm.name(), l.index, l.out_c, l.out_h,
            l.out_w, l.index, l.stats.cycles, l.index, l.stats.flops, l.index,
            l.stats.l2_miss_rate(), l.index, l.stats.dram_bytes,
        );
    }
    let t = &run.total;
    let _ = writeln!(s, "total.instructions={}", t.total_instructions());
    let _ = writeln!(s, "total.flops={}", t.flops);
    let _ = writeln!(s, "total.l1_miss_rate={:.6}", t.l1_miss_rate());
    let _ = writeln!(s, "total.l2_miss_rate={:.6}", t.l2_miss_rate());
    let _ = writeln!(s, "total.dram_bytes={}", t.dram_bytes);
    let _ = writeln!(s, "total.cycles={}", t.cycles);
    let _ = writeln!(s, "total.seconds={:.9}", t.modeled_seconds(&cfg.cost));
    let _ = writeln!(s, "total.gflops={:.4}", t.achieved_gflops(&cfg.cost));
    s
}

#[derive(Debug, Clone, Copy)]
pub struct RooflinePoint {
    pub layer: usize,
    pub ai: f64,
    pub gflops: f64,
    pub memory_bound: bool,
}

#[derive(Debug, Clone)]
pub struct RooflineReport {
    pub points: Vec<RooflinePoint>,
    pub ridge_ai: f64,
    pub peak_gflops: f64,
    pub dram_gbps: f64,
}

/// Roofline points for the first `max_layers` convolutional layers.
pub fn cmd_roofline(
    model: &NetworkModel,
    cfg: &RunConfig,
    max_layers: usize,
) -> Result<(RooflineReport, NetworkRun)> {
    let run = run_once(model, cfg)?;
    let mut points = Vec::new();
    for l in &run.layers {
        if l.kind != LayerKind::Convolutional {
            continue;
        }
        if points.len() >= max_layers {
            break;
        }
        let ai = arithmetic_intensity(&l.stats);
        points.push(RooflinePoint {
            layer: l.index,
            ai,
            gflops: l.stats.achieved_gflops(&cfg.cost),
            memory_bound: is_memory_bound(&cfg.cost, ai),
        });
    }
    Ok((
        RooflineReport {
            points,
            ridge_ai: cfg.cost.ridge_ai(),
            peak_gflops: cfg.cost.peak_gflops,
            dram_gbps: cfg.cost.dram_gbps,
        },
        run,
    ))
}

pub fn roofline_csv(report: &RooflineReport) -> String {
    let mut s = String::from("layer,ai_flops_per_byte,achieved_gflops,ceiling_gflops,bound\n");
    for p in &report.points {
        let cost = CostModel {
            peak_gflops: report.peak_gflops,
            dram_gbps: report.dram_gbps,
            ..CostModel::default()
        };
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{}",
            p.layer,
            p.ai,
            p.gflops,
            attainable_gflops(&cost, p.ai),
            if p.memory_bound { "memory" } else { "compute" }
        );
    }
    s
}

/// Gnuplot-friendly roofline data: the machine ceiling sampled over a log
/// AI grid, a blank-line break, then the per-layer points.
pub fn roofline_plot_data(report: &RooflineReport) -> String {
    let mut s = String::from("# ai gflops  (machine ceiling)\n");
    let cost = CostModel {
        peak_gflops: report.peak_gflops,
        dram_gbps: report.dram_gbps,
        ..CostModel::default()
    };
    let mut ai = 0.0625f64;
    while ai <= 1024.0 {
        let _ = writeln!(s, "{:.6} {:.6}", ai, attainable_gflops(&cost, ai));
        ai *= 2.0;
    }
    s.push_str("\n\n# ai gflops layer  (measured layers)\n");
    for p in &report.points {
        let _ = writeln!(s, "{:.6} {:.6} {}", p.ai, p.gflops, p.layer);
    }
    s
}

#[derive(Debug, Clone)]
pub struct MicrobenchResult {
    pub vlen_bits: u32,
    pub iterations: usize,
    pub cycles_indexed: u64,
    pub cycles_slide: u64,
    pub indexed_loads_in_slide_kernel: u64,
    pub indexed_loads_in_indexed_kernel: u64,
    pub checksums_equal: bool,
}

impl MicrobenchResult {
    pub fn cycle_ratio(&self) -> f64 {
        self.cycles_indexed as f64 / self.cycles_slide as f64
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vlen_bits={}", self.vlen_bits);
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "cycles_indexed={}", self.cycles_indexed);
        let _ = writeln!(s, "cycles_slide={}", self.cycles_slide);
        let _ = writeln!(s, "cycle_ratio_indexed_over_slide={:.4}", self.cycle_ratio());
        let _ = writeln!(s, "mem_indexed_in_slide_kernel={}", self.indexed_loads_in_slide_kernel);
        let _ =
            writeln!(s, "mem_indexed_in_indexed_kernel={}", self.indexed_loads_in_indexed_kernel);
        let _ = writeln!(s, "checksums_equal={}", self.checksums_equal);
        s
    }
}

/// Repeated tuple multiplication on a fixed shape under both replication
/// strategies, measured on fresh hierarchies.
pub fn cmd_microbench_tuple(vlen_bits: u32, iterations: usize, seed: u64) -> Result<MicrobenchResult> {
    let mcfg = VectorMachineConfig::new(vlen_bits)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    // fixed shape: one full filter group, enough channels and tiles to give
    // the replication stage weight
    let blocks = mcfg.blocks();
    let (f, c, tiles) = (blocks, 16usize, 4usize);

    let run = |strategy: ReplicateStrategy| -> Result<(ExecStats, u64, Vec<f32>)> {
        let mut m = VectorMachine::new(mcfg, Replayer::new(&CacheConfig::default(), CostModel::default()));
        let vpack = VPack { addr: m.alloc(VPack::len_floats(tiles, c)), tiles, channels: c };
        let upack = UPack {
            addr: m.alloc(UPack::len_floats(f, c, blocks)),
            filters: f,
            channels: c,
            blocks,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in 0..tiles {
            for ci in 0..c {
                for e in 0..64 {
                    let v: f32 = rng.gen_range(-1.0..1.0);
                    m.write_slice(vpack.quad_addr(t, e / 4, ci) + (e % 4) as u64 * 4, &[v]);
                }
            }
        }
        for fi in 0..f {
            for ci in 0..c {
                for e in 0..64 {
                    let v: f32 = rng.gen_range(-1.0..1.0);
                    m.write_slice(upack.element_addr(fi, ci, e), &[v]);
                }
            }
        }
        let before = m.sink_mut().stats();
        let mut mpack = None;
        for _ in 0..iterations {
            mpack = Some(
                tuple_multiply(&mut m, &vpack, &upack, tiles, strategy)
                    .map_err(|e| BenchError::Config(e.to_string()))?,
            );
        }
        let stats = m.sink_mut().stats().delta_since(&before);
        let mp = mpack.unwrap();
        let mut result = Vec::with_capacity(f * tiles * 64);
        for fi in 0..f {
            for t in 0..tiles {
                for e in 0..64 {
                    result.push(mp.read_element(&m, fi, t, e));
                }
            }
        }
        Ok((stats, stats.count(OpcodeClass::MemIndexed), result))
    };

    let (idx_stats, idx_gathers, idx_result) = run(ReplicateStrategy::Indexed)?;
    let (slide_stats, slide_gathers, slide_result) = run(ReplicateStrategy::Slide)?;
    Ok(MicrobenchResult {
        vlen_bits,
        iterations,
        cycles_indexed: idx_stats.cycles,
        cycles_slide: slide_stats.cycles,
        indexed_loads_in_slide_kernel: slide_gathers,
        indexed_loads_in_indexed_kernel: idx_gathers,
        checksums_equal: idx_result == slide_result,
    })
}

/// Outcome of one validation check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub max_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn err(name: &'static str, max_err: f64, tolerance: f64) -> Self {
        Self { name, max_err, tolerance, passed: max_err <= tolerance }
    }

    fn flag(name: &'static str, passed: bool) -> Self {
        Self { name, max_err: if passed { 0.0 } else { 1.0 }, tolerance: 0.0, passed }
    }

    pub fn line(&self) -> String {
        format!(
            "check={} max_err={:.3e} tolerance={:.3e} status={}",
            self.name,
            self.max_err,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Oracle-equivalence and strategy-equivalence suite. `quick` shrinks the
/// case counts and shapes.
pub fn cmd_validate(seed: u64, quick: bool) -> Vec<Check> {
    let mats = build_winograd_matrices();
    validate_with_matrices(&mats, seed, quick)
}

/// Validation against caller-provided transform matrices; the test hook for
/// fault injection.
pub fn validate_with_matrices(mats: &WinogradMatrices, seed: u64, quick: bool) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // transform identity in f64
    let pairs = if quick { 100 } else { 1000 };
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let mut d = [[0.0f64; 8]; 8];
        let mut g = [[0.0f64; 3]; 3];
        for row in d.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        for row in g.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let fast = mats.tile_correlation(&d, &g);
        let exact = direct_tile_correlation(&d, &g);
        for i in 0..6 {
            for j in 0..6 {
                worst = worst.max((fast[i][j] - exact[i][j]).abs());
            }
        }
    }
    checks.push(Check::err("transform_identity", worst, 1e-10));

    // winograd and im2col+gemm vs the direct oracle
    let layers = if quick { 4 } else { 10 };
    let mut wino_err: f64 = 0.0;
    let mut gemm_err: f64 = 0.0;
    for i in 0..layers {
        let shape = ConvShape {
            in_channels: 4 + (i * 7) % 20,
            in_h: 8 + (i * 5) % 16,
            in_w: 8 + (i * 3) % 16,
            filters: 4 + (i * 5) % 16,
            kernel: 3,
            stride: 1,
            pad: i % 2,
        };
        let input: Vec<f32> =
            (0..shape.input_len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let filters: Vec<f32> =
            (0..shape.filters_len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let oracle = direct_conv_oracle(&input, &filters, &shape);

        let mcfg = VectorMachineConfig::new(512).unwrap();
        let mut m =
            VectorMachine::new(mcfg, Replayer::new(&CacheConfig::default(), CostModel::default()));
        let ia = m.alloc(shape.input_len());
        m.write_slice(ia, &input);
        let fa = m.alloc(shape.filters_len());
        m.write_slice(fa, &filters);
        let out_w = m.alloc(shape.output_len());
        let out_g = m.alloc(shape.output_len());
        if conv_winograd(&mut m, mats, ia, fa, &shape, StrategyConfig::default(), out_w).is_err() {
            checks.push(Check::flag("winograd_vs_oracle", false));
            continue;
        }
        conv_im2col_gemm(&mut m, ia, fa, &shape, out_g).unwrap();
        wino_err = wino_err.max(peak_relative_error(m.read_slice(out_w, shape.output_len()), &oracle));
        gemm_err = gemm_err.max(peak_relative_error(m.read_slice(out_g, shape.output_len()), &oracle));
    }
    checks.push(Check::err("winograd_vs_oracle", wino_err, 5e-3));
    checks.push(Check::err("im2col_gemm_vs_oracle", gemm_err, 1e-4));

    // strategy equivalence: tuple replication and transpose, bit-identical
    let vlens: &[u32] = if quick { &[512, 2048] } else { &[128, 512, 2048, 8192] };
    let mut equal = true;
    for &vlen in vlens {
        let shape = ConvShape {
            in_channels: 8,
            in_h: 14,
            in_w: 14,
            filters: 8,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let input: Vec<f32> =
            (0..shape.input_len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let filters: Vec<f32> =
            (0..shape.filters_len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let mut outs = Vec::new();
        for replicate in [ReplicateStrategy::Indexed, ReplicateStrategy::Slide] {
            for transpose in [TransposeStrategy::Indexed, TransposeStrategy::Strided] {
                let mcfg = VectorMachineConfig::new(vlen).unwrap();
                let mut m = VectorMachine::new(
                    mcfg,
                    Replayer::new(&CacheConfig::default(), CostModel::default()),
                );
                let ia = m.alloc(shape.input_len());
                m.write_slice(ia, &input);
                let fa = m.alloc(shape.filters_len());
                m.write_slice(fa, &filters);
                let out = m.alloc(shape.output_len());
                conv_winograd(
                    &mut m,
                    mats,
                    ia,
                    fa,
                    &shape,
                    StrategyConfig { replicate, transpose },
                    out,
                )
                .unwrap();
                outs.push(m.read_slice(out, shape.output_len()).to_vec());
            }
        }
        equal &= outs.windows(2).all(|w| w[0] == w[1]);
    }
    checks.push(Check::flag("strategy_equivalence_bitwise", equal));

    // replication identity: slide doubling equals the i%4 gather
    let mut rep_ok = true;
    for &vlen in vlens {
        let mcfg = VectorMachineConfig::new(vlen).unwrap();
        let mut m =
            VectorMachine::new(mcfg, Replayer::new(&CacheConfig::default(), CostModel::default()));
        let a = m.alloc(4);
        let quad: Vec<f32> = (0..4).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        m.write_slice(a, &quad);
        let gvl = m.vlmax();
        let mut v = m.load_unit(a, 4).unwrap();
        let mut off = 4;
        while off < gvl {
            v = m.slide_up(&v.clone(), &v, off, gvl).unwrap();
            off *= 2;
        }
        rep_ok &= (0..gvl).all(|i| v.lane(i) == quad[i % 4]);
    }
    checks.push(Check::flag("slide_replication_identity", rep_ok));

    // setvl monotonicity spot check
    let mcfg = VectorMachineConfig::new(1024).unwrap();
    let mut m =
        VectorMachine::new(mcfg, Replayer::new(&CacheConfig::default(), CostModel::default()));
    let mut mono = true;
    let mut prev = 0;
    for avl in 0..80 {
        let g = m.set_vector_length(avl);
        mono &= g >= prev && (avl > m.vlmax() || g == avl);
        prev = g;
    }
    checks.push(Check::flag("setvl_monotone", mono));

    checks
}

/// The five run-relevant interleave/transform stages are exercised by the
/// equivalence checks; this helper measures input-transform cycles per
/// transpose strategy for the parity comparison.
pub fn input_transform_cycles(
    model: &NetworkModel,
    layer_index: usize,
    vlen_bits: u32,
    strategy: TransposeStrategy,
    seed: u64,
) -> Result<ExecStats> {
    let layer = model
        .layers
        .get(layer_index)
        .filter(|l| l.kind == LayerKind::Convolutional)
        .ok_or_else(|| BenchError::Config(format!("layer {layer_index} is not convolutional")))?;
    let shape = layer.conv_shape();
    let mats = build_winograd_matrices();
    let grid = TileGrid::new(shape).map_err(|e| BenchError::Config(e.to_string()))?;
    let mcfg =
        VectorMachineConfig::new(vlen_bits).map_err(|e| BenchError::Config(e.to_string()))?;
    let mut m =
        VectorMachine::new(mcfg, Replayer::new(&CacheConfig::default(), CostModel::default()));
    let ia = m.alloc(shape.input_len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..shape.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    m.write_slice(ia, &data);
    let before = m.sink_mut().stats();
    input_transform(&mut m, &mats, ia, &grid, strategy)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(m.sink_mut().stats().delta_since(&before))
}

/// Trace-level interleave comparison for the validation suite: both
/// strategies must produce byte-identical regions across widths.
pub fn interleave_strategies_agree(seed: u64, cases: usize, vlens: &[u32]) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &vlen in vlens {
        let mcfg = match VectorMachineConfig::new(vlen) {
            Ok(c) => c,
            Err(_) => return false,
        };
        for _ in 0..cases {
            let gvl = 1 + (rng.gen::<u32>() as usize) % mcfg.vlmax();
            let vecs: Vec<crate::vvm::VectorValue> = (0..4)
                .map(|_| {
                    crate::vvm::VectorValue::from_lanes(
                        (0..gvl).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
                    )
                })
                .collect();
            let mut regions = Vec::new();
            for strategy in [TransposeStrategy::Indexed, TransposeStrategy::Strided] {
                let mut m = VectorMachine::new(
                    mcfg,
                    Replayer::new(&CacheConfig::default(), CostModel::default()),
                );
                let out = m.alloc(4 * gvl);
                let scratch = m.alloc(4 * gvl);
                let idxbuf = m.alloc(4 * gvl);
                let index =
                    crate::winograd::build_transpose_index(&mut m, gvl, idxbuf).unwrap();
                interleave4(
                    &mut m,
                    [&vecs[0], &vecs[1], &vecs[2], &vecs[3]],
                    gvl,
                    strategy,
                    out,
                    scratch,
                    Some(&index),
                )
                .unwrap();
                regions.push(m.read_slice(out, 4 * gvl).to_vec());
            }
            if regions[0] != regions[1] {
                return false;
            }
        }
    }
    true
}

/// U and V pack construction for external callers (microbenchmarks, tests).
pub fn build_packs_for_layer<S: TraceSink>(
    m: &mut VectorMachine<S>,
    mats: &WinogradMatrices,
    shape: &ConvShape,
    strategy: TransposeStrategy,
    seed: u64,
) -> Result<(VPack, UPack, TileGrid)> {
    let grid = TileGrid::new(*shape).map_err(|e| BenchError::Config(e.to_string()))?;
    let ia = m.alloc(shape.input_len());
    let fa = m.alloc(shape.filters_len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input: Vec<f32> = (0..shape.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let filters: Vec<f32> = (0..shape.filters_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    m.write_slice(ia, &input);
    m.write_slice(fa, &filters);
    let upack = filter_transform(m, mats, fa, shape.filters, shape.in_channels)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let vpack = input_transform(m, mats, ia, &grid, strategy)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    Ok((vpack, upack, grid))
}
