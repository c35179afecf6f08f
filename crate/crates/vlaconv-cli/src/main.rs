//! Command-line driver: single runs, co-design sweeps, roofline reports,
//! the replication microbenchmark, and the self-validation suite.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage or config error.

use clap::{Args, Parser, Subcommand};
use std::process::ExitCode;
use vlaconv::bench::{
    cmd_microbench_tuple, cmd_roofline, cmd_sweep, cmd_validate, load_network, roofline_csv,
    roofline_plot_data, run_once, run_report, RunConfig, SweepSpec,
};
use vlaconv::memsim::{parse_config, CacheConfig, CostModel};
use vlaconv::network::RunMode;
use vlaconv::winograd::{ReplicateStrategy, StrategyConfig, TransposeStrategy};

#[derive(Parser)]
#[command(
    name = "vlaconv",
    about = "Vector-length-agnostic convolution kernels on a traced vector machine"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Builtin network name (vgg16, yolov3-first20) or a cfg file path
    #[arg(long, default_value = "yolov3-first20")]
    cfg: String,
    /// Run only the first N layers
    #[arg(long)]
    layers: Option<usize>,
    /// Convolution implementation policy
    #[arg(long, value_parser = parse_mode, default_value = "hybrid")]
    mode: RunMode,
    /// Quadword replication strategy: indexed | slide
    #[arg(long, value_parser = parse_replicate, default_value = "slide")]
    replicate: ReplicateStrategy,
    /// Vector transpose strategy: indexed | strided
    #[arg(long, value_parser = parse_transpose, default_value = "strided")]
    transpose: TransposeStrategy,
    /// Seed for synthetic weights and input
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// key=value file overriding cache geometry and cycle costs
    #[arg(long)]
    calibration: Option<String>,
    /// Write output to this path instead of stdout
    #[arg(long)]
    out: Option<String>,
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    match s {
        "pure" => Ok(RunMode::PureIm2col),
        "hybrid" => Ok(RunMode::Hybrid),
        "winograd-all" => Ok(RunMode::WinogradAll),
        _ => Err("expected pure | hybrid | winograd-all".into()),
    }
}

fn parse_replicate(s: &str) -> Result<ReplicateStrategy, String> {
    match s {
        "indexed" => Ok(ReplicateStrategy::Indexed),
        "slide" => Ok(ReplicateStrategy::Slide),
        _ => Err("expected indexed | slide".into()),
    }
}

fn parse_transpose(s: &str) -> Result<TransposeStrategy, String> {
    match s {
        "indexed" => Ok(TransposeStrategy::Indexed),
        "strided" => Ok(TransposeStrategy::Strided),
        _ => Err("expected indexed | strided".into()),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad {what} value: {p}")))
        .collect()
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the oracle-equivalence and strategy-equivalence checks
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Smaller shapes and fewer cases
        #[arg(long)]
        quick: bool,
    },
    /// Full inference at one configuration; per-layer report
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// Vector length in bits
        #[arg(long, default_value_t = 512)]
        vlen: u32,
        /// L2 size in MiB
        #[arg(long = "l2-mb", default_value_t = 1)]
        l2_mb: u64,
    },
    /// Vector-length x L2-size grid; CSV output
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Vector lengths in bits, comma separated
        #[arg(long, default_value = "512,1024,2048,4096")]
        vlen: String,
        /// L2 sizes in MiB, comma separated
        #[arg(long = "l2-mb", default_value = "1,4,16,64,256")]
        l2_mb: String,
        /// Run grids above the row cap
        #[arg(long)]
        force: bool,
    },
    /// Arithmetic-intensity roofline for the first convolutional layers
    Roofline {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 512)]
        vlen: u32,
        #[arg(long = "l2-mb", default_value_t = 1)]
        l2_mb: u64,
        /// Number of leading convolutional layers to report
        #[arg(long, default_value_t = 10)]
        conv_layers: usize,
    },
    /// Tuple-multiplication replication strategies head to head
    Microbench {
        #[arg(long, default_value_t = 512)]
        vlen: u32,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        calibration: Option<String>,
    },
}

fn load_calibration(path: &Option<String>) -> Result<(CacheConfig, CostModel), String> {
    let mut cache = CacheConfig::default();
    let mut cost = CostModel::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read calibration file {path}: {e}"))?;
        parse_config(&text, &mut cache, &mut cost).map_err(|e| e.to_string())?;
    }
    Ok((cache, cost))
}

fn build_run_config(common: &CommonOpts, vlen: u32, l2_mb: u64) -> Result<RunConfig, String> {
    let (cache, cost) = load_calibration(&common.calibration)?;
    Ok(RunConfig {
        vlen_bits: vlen,
        l2_mib: l2_mb,
        mode: common.mode,
        strategy: StrategyConfig { replicate: common.replicate, transpose: common.transpose },
        seed: common.seed,
        layer_limit: common.layers,
        cost,
        cache_template: cache,
    })
}

fn emit(out: &Option<String>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| format!("cannot write {path}: {e}")),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn usage_err(msg: String) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { seed, quick } => {
            let checks = cmd_validate(seed, quick);
            let mut ok = true;
            for c in &checks {
                println!("{}", c.line());
                ok &= c.passed;
            }
            println!("validation={}", if ok { "PASS" } else { "FAIL" });
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Cmd::Run { common, vlen, l2_mb } => {
            let cfg = match build_run_config(&common, vlen, l2_mb) {
                Ok(c) => c,
                Err(e) => return usage_err(e),
            };
            let model = match load_network(&common.cfg) {
                Ok(m) => m,
                Err(e) => return usage_err(e.to_string()),
            };
            match run_once(&model, &cfg) {
                Ok(run) => {
                    let report = run_report(&model, &cfg, &run);
                    if let Err(e) = emit(&common.out, &report) {
                        return usage_err(e);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => usage_err(e.to_string()),
            }
        }
        Cmd::Sweep { common, vlen, l2_mb, force } => {
            let vlens = match parse_list::<u32>(&vlen, "vector length") {
                Ok(v) => v,
                Err(e) => return usage_err(e),
            };
            let l2s = match parse_list::<u64>(&l2_mb, "L2 size") {
                Ok(v) => v,
                Err(e) => return usage_err(e),
            };
            let base = match build_run_config(&common, 512, 1) {
                Ok(c) => c,
                Err(e) => return usage_err(e),
            };
            let model = match load_network(&common.cfg) {
                Ok(m) => m,
                Err(e) => return usage_err(e.to_string()),
            };
            let spec = SweepSpec { vlens, l2_mibs: l2s, base, force, ..SweepSpec::default() };
            match cmd_sweep(&model, &spec) {
                Ok(csv) => {
                    if let Err(e) = emit(&common.out, &csv) {
                        return usage_err(e);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => usage_err(e.to_string()),
            }
        }
        Cmd::Roofline { common, vlen, l2_mb, conv_layers } => {
            let cfg = match build_run_config(&common, vlen, l2_mb) {
                Ok(c) => c,
                Err(e) => return usage_err(e),
            };
            let model = match load_network(&common.cfg) {
                Ok(m) => m,
                Err(e) => return usage_err(e.to_string()),
            };
            match cmd_roofline(&model, &cfg, conv_layers) {
                Ok((report, _run)) => {
                    let csv = roofline_csv(&report);
                    if let Err(e) = emit(&common.out, &csv) {
                        return usage_err(e);
                    }
                    // gnuplot-style companion data next to the CSV
                    if let Some(path) = &common.out {
                        let plot_path = format!("{path}.dat");
                        if let Err(e) = std::fs::write(&plot_path, roofline_plot_data(&report)) {
                            return usage_err(format!("cannot write {plot_path}: {e}"));
                        }
                    } else {
                        print!("{}", roofline_plot_data(&report));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => usage_err(e.to_string()),
            }
        }
        Cmd::Microbench { vlen, iterations, seed, calibration } => {
            if let Err(e) = load_calibration(&calibration) {
                return usage_err(e);
            }
            match cmd_microbench_tuple(vlen, iterations, seed) {
                Ok(r) => {
                    print!("{}", r.report());
                    ExitCode::SUCCESS
                }
                Err(e) => usage_err(e.to_string()),
            }
        }
    }
}
