// scratch probe for calibration numbers; not part of the deliverable
use std::time::Instant;
use vlaconv::bench::*;
use vlaconv::memsim::arithmetic_intensity;
use vlaconv::network::RunMode;
use vlaconv::winograd::TransposeStrategy;

fn main() {
    let t0 = Instant::now();
    let yolo = load_network("yolov3-first20").unwrap();
    let vgg = load_network("vgg16").unwrap();

    // C5: transpose parity on vgg16 layer 1 (index 0)
    for vlen in [512u32] {
        let a = input_transform_cycles(&vgg, 0, vlen, TransposeStrategy::Indexed, 1).unwrap();
        let b = input_transform_cycles(&vgg, 0, vlen, TransposeStrategy::Strided, 1).unwrap();
        println!(
            "C5 parity vlen={vlen}: indexed={} strided={} ratio={:.4} [{:.1?}]",
            a.cycles,
            b.cycles,
            a.cycles as f64 / b.cycles as f64,
            t0.elapsed()
        );
    }

    // C4: microbench at 512
    let mb = cmd_microbench_tuple(512, 100, 1).unwrap();
    println!(
        "C4 microbench: ratio={:.3} slide_gathers={} [{:.1?}]",
        mb.cycle_ratio(),
        mb.indexed_loads_in_slide_kernel,
        t0.elapsed()
    );

    // C7+C9a: YOLO hybrid across vlens at 1 MiB
    let mut yolo_seconds = Vec::new();
    let mut per_layer: Vec<Vec<(u64, u64)>> = Vec::new();
    for vlen in [512u32, 1024, 2048, 4096] {
        let cfg = RunConfig { vlen_bits: vlen, l2_mib: 1, mode: RunMode::Hybrid, ..Default::default() };
        let r = run_once(&yolo, &cfg).unwrap();
        yolo_seconds.push(r.total.modeled_seconds(&cfg.cost));
        println!(
            "C7 yolo hybrid vlen={vlen}: l2_miss_rate={:.4} l2_acc={} l2_miss={} cycles={} l1mr={:.4} [{:.1?}]",
            r.total.l2_miss_rate(),
            r.total.l2_accesses,
            r.total.l2_misses,
            r.total.cycles,
            r.total.l1_miss_rate(),
            t0.elapsed()
        );
        per_layer.push(r.layers.iter().map(|l| (l.stats.l2_accesses, l.stats.l2_misses)).collect());
    }
    println!("C7 per-layer (acc512,miss512 -> acc4096,miss4096):");
    for i in 0..per_layer[0].len() {
        let (a0, m0) = per_layer[0][i];
        let (a3, m3) = per_layer[3][i];
        println!(
            "  layer {i:2}: {a0:>9},{m0:>9} -> {a3:>9},{m3:>9}  rate {:.3} -> {:.3}",
            m0 as f64 / a0.max(1) as f64,
            m3 as f64 / a3.max(1) as f64
        );
    }
    println!(
        "C9a yolo speedup 512->4096: {:.3}",
        yolo_seconds[0] / yolo_seconds[3]
    );

    // C10a: hybrid vs pure on yolo at 2048/1MiB
    let cfg = RunConfig { vlen_bits: 2048, l2_mib: 1, mode: RunMode::PureIm2col, ..Default::default() };
    let pure = run_once(&yolo, &cfg).unwrap();
    let cfg_h = RunConfig { mode: RunMode::Hybrid, ..cfg.clone() };
    let hybrid = run_once(&yolo, &cfg_h).unwrap();
    println!(
        "C10a yolo pure={} hybrid={} improvement={:.4} [{:.1?}]",
        pure.total.cycles,
        hybrid.total.cycles,
        1.0 - hybrid.total.cycles as f64 / pure.total.cycles as f64,
        t0.elapsed()
    );

    // VGG per-layer scaling diagnosis at 1 MiB
    {
        let mut layer_cycles = Vec::new();
        for vlen in [512u32, 4096] {
            let cfg = RunConfig {
                vlen_bits: vlen,
                l2_mib: 1,
                mode: RunMode::WinogradAll,
                ..Default::default()
            };
            let r = run_once(&vgg, &cfg).unwrap();
            layer_cycles.push(r.layers.iter().map(|l| l.stats.cycles).collect::<Vec<_>>());
        }
        println!("VGG per-layer cycles @512 -> @4096 (ratio):");
        for i in 0..layer_cycles[0].len() {
            let (a, b) = (layer_cycles[0][i], layer_cycles[1][i]);
            if a > 1000 {
                println!("  layer {i:2}: {a:>11} -> {b:>11}  x{:.2}", a as f64 / b as f64);
            }
        }
    }

    // C8 + C9b: VGG winograd-all over vlen x l2
    let mut vgg_secs = std::collections::BTreeMap::new();
    for vlen in [512u32, 1024, 2048, 4096] {
        for l2 in [1u64, 4, 16, 64, 256] {
            let cfg = RunConfig {
                vlen_bits: vlen,
                l2_mib: l2,
                mode: RunMode::WinogradAll,
                ..Default::default()
            };
            let r = run_once(&vgg, &cfg).unwrap();
            vgg_secs.insert((vlen, l2), r.total.modeled_seconds(&cfg.cost));
            if l2 == 1 {
                println!(
                    "   vgg wino vlen={vlen} l2=1: l2_miss_rate={:.4} cycles={}",
                    r.total.l2_miss_rate(),
                    r.total.cycles
                );
            }
        }
        let s1 = vgg_secs[&(vlen, 1)];
        let s64 = vgg_secs[&(vlen, 64)];
        let s256 = vgg_secs[&(vlen, 256)];
        println!(
            "C8 vgg vlen={vlen}: t(1MB)={:.5} t(64MB)={:.5} t(256MB)={:.5} improve={:.3} plateau_delta={:.4} [{:.1?}]",
            s1, s64, s256, s1 / s64, (s64 - s256).abs() / s64, t0.elapsed()
        );
    }
    println!(
        "C9b vgg speedup 512->4096 @1MB: {:.3}; monotone: {:?}",
        vgg_secs[&(512, 1)] / vgg_secs[&(4096, 1)],
        [512u32, 1024, 2048, 4096]
            .windows(2)
            .map(|w| vgg_secs[&(w[0], 1)] / vgg_secs[&(w[1], 1)])
            .collect::<Vec<_>>()
    );

    // C10b: vgg winograd-all vs pure @2048/1MB
    let cfg = RunConfig { vlen_bits: 2048, l2_mib: 1, mode: RunMode::PureIm2col, ..Default::default() };
    let pure = run_once(&vgg, &cfg).unwrap();
    let cfg_w = RunConfig { mode: RunMode::WinogradAll, ..cfg.clone() };
    let wino = run_once(&vgg, &cfg_w).unwrap();
    println!(
        "C10b vgg pure={} wino={} speedup={:.3} [{:.1?}]",
        pure.total.cycles,
        wino.total.cycles,
        pure.total.cycles as f64 / wino.total.cycles as f64,
        t0.elapsed()
    );

    // C11: rooflines at 512/1MB
    for mode in [RunMode::WinogradAll, RunMode::PureIm2col] {
        let cfg = RunConfig { vlen_bits: 512, l2_mib: 1, mode, ..Default::default() };
        let (report, run) = cmd_roofline(&vgg, &cfg, 10).unwrap();
        let mem = report.points.iter().filter(|p| p.memory_bound).count();
        println!(
            "C11 {} memory_bound={}/10 ais={:?} [{:.1?}]",
            mode.name(),
            mem,
            report.points.iter().map(|p| (p.ai * 100.0).round() / 100.0).collect::<Vec<_>>(),
            t0.elapsed()
        );
        let _ = run;
        for p in &report.points {
            let ceiling = report.peak_gflops.min(p.ai * report.dram_gbps);
            assert!(
                p.gflops <= ceiling * 1.05,
                "layer {} gflops {} over ceiling {}",
                p.layer,
                p.gflops,
                ceiling
            );
        }
    }
    // C1-style spot: a couple of random layers
    let checks = cmd_validate(11, true);
    for c in checks {
        println!("{}", c.line());
    }
    println!("total elapsed {:.1?}", t0.elapsed());
}
