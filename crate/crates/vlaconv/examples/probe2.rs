// focused probe: C10b / C11 / C9b sensitivity; not part of the deliverable
use std::time::Instant;
use vlaconv::bench::*;
use vlaconv::network::RunMode;

fn main() {
    let t0 = Instant::now();
    let vgg = load_network("vgg16").unwrap();
    let mlp: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let mut base = RunConfig::default();
    base.cost.unit_mlp = mlp;
    println!("== unit_mlp={mlp} vgg {}x{}", vgg.width, vgg.height);

    // C10b at 2048/1MB with per-layer comparison
    let cfg_p = RunConfig { vlen_bits: 2048, l2_mib: 1, mode: RunMode::PureIm2col, ..base.clone() };
    let cfg_w = RunConfig { mode: RunMode::WinogradAll, ..cfg_p.clone() };
    let pure = run_once(&vgg, &cfg_p).unwrap();
    let wino = run_once(&vgg, &cfg_w).unwrap();
    println!(
        "C10b pure={} wino={} speedup={:.3} [{:.1?}]",
        pure.total.cycles,
        wino.total.cycles,
        pure.total.cycles as f64 / wino.total.cycles as f64,
        t0.elapsed()
    );
    for (p, w) in pure.layers.iter().zip(&wino.layers) {
        if p.stats.cycles > 1_000_000 {
            println!(
                "  layer {:2}: pure={:>11} wino={:>11} ratio={:.2}",
                p.index,
                p.stats.cycles,
                w.stats.cycles,
                p.stats.cycles as f64 / w.stats.cycles as f64
            );
        }
    }

    // C11 at 512/1MB
    for mode in [RunMode::WinogradAll, RunMode::PureIm2col] {
        let cfg = RunConfig { vlen_bits: 512, l2_mib: 1, mode, ..base.clone() };
        let (report, _) = cmd_roofline(&vgg, &cfg, 10).unwrap();
        let mem = report.points.iter().filter(|p| p.memory_bound).count();
        println!(
            "C11 {} memory_bound={}/10 ais={:?} [{:.1?}]",
            mode.name(),
            mem,
            report.points.iter().map(|p| (p.ai * 100.0).round() / 100.0).collect::<Vec<_>>(),
            t0.elapsed()
        );
    }

    // C9b: 1MB column over vlens
    let mut secs = Vec::new();
    for vlen in [512u32, 1024, 2048, 4096] {
        let cfg = RunConfig { vlen_bits: vlen, l2_mib: 1, mode: RunMode::WinogradAll, ..base.clone() };
        let r = run_once(&vgg, &cfg).unwrap();
        secs.push(r.total.modeled_seconds(&cfg.cost));
    }
    println!(
        "C9b speedup={:.3} steps={:?} [{:.1?}]",
        secs[0] / secs[3],
        secs.windows(2).map(|w| (w[0] / w[1] * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        t0.elapsed()
    );
}
