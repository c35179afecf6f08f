//! Trace-driven cost model: a two-level set-associative data cache plus
//! per-class instruction costs, folded over a vvm instruction stream.
//!
//! Accounting rules:
//! - Every distinct cache line touched by a memory event is probed once
//!   (LRU update, miss/hit tally, write-allocate, dirty tracking).
//! - Latency is charged per line for unit-stride events and per element for
//!   strided and indexed events: unit-stride accesses coalesce into line
//!   transactions, while strided/gather units issue one transaction per
//!   element address. Repeated addresses within one gather are charged once.
//! - DRAM bytes = (L2 fill reads + L2 dirty write-backs) * line size.

use crate::vvm::{
    AddressPattern, Addr, InstructionRecord, MemoryEvent, OpcodeClass, TraceSink,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cache config invalid: {0}")]
    Cache(String),
    #[error("bad config line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Two-level cache geometry. Defaults: 64 KiB L1 / 1 MiB L2, 64-byte lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheConfig {
    pub l1_bytes: u64,
    pub l2_bytes: u64,
    pub line_bytes: u64,
    pub l1_ways: u32,
    pub l2_ways: u32,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            l1_bytes: 64 * 1024,
            l2_bytes: 1024 * 1024,
            line_bytes: 64,
            l1_ways: 8,
            l2_ways: 16,
        }
    }
}

impl CacheConfig {
    pub fn with_l2_mib(l2_mib: u64) -> Self {
        Self { l2_bytes: l2_mib * 1024 * 1024, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("l1_bytes", self.l1_bytes),
            ("l2_bytes", self.l2_bytes),
            ("line_bytes", self.line_bytes),
        ] {
            if !v.is_power_of_two() {
                return Err(ConfigError::Cache(format!("{name} must be a power of two")));
            }
        }
        for (name, bytes, ways) in [
            ("l1", self.l1_bytes, self.l1_ways as u64),
            ("l2", self.l2_bytes, self.l2_ways as u64),
        ] {
            let lines = bytes / self.line_bytes;
            if ways == 0 || lines % ways != 0 {
                return Err(ConfigError::Cache(format!("{name}_ways must divide line count")));
            }
        }
        Ok(())
    }
}

/// Per-class cycle costs and machine rates.
///
/// Vector instructions have a constant base cost; strided and indexed memory
/// instructions pay an extra address-generation term that grows with gvl.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub scalar: u64,
    pub setvl: u64,
    /// arith / fma / slide / permute / reduce
    pub vector: u64,
    pub mem_unit: u64,
    pub mem_strided_base: u64,
    pub mem_indexed_base: u64,
    pub l1_hit_cycles: u64,
    pub l2_hit_cycles: u64,
    pub dram_cycles: u64,
    /// Line transactions a single unit-stride access overlaps. Strided and
    /// indexed accesses serialize on address generation and get no overlap.
    pub unit_mlp: u64,
    pub core_ghz: f64,
    pub peak_gflops: f64,
    pub dram_gbps: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            scalar: 1,
            setvl: 1,
            vector: 4,
            mem_unit: 4,
            mem_strided_base: 4,
            mem_indexed_base: 4,
            l1_hit_cycles: 4,
            l2_hit_cycles: 20,
            dram_cycles: 100,
            unit_mlp: 8,
            core_ghz: 2.0,
            peak_gflops: 64.0,
            dram_gbps: 13.0,
        }
    }
}

impl CostModel {
    pub fn base_cost(&self, class: OpcodeClass, gvl: u32) -> u64 {
        let gvl = gvl as u64;
        match class {
            OpcodeClass::Scalar => self.scalar,
            OpcodeClass::SetVl => self.setvl,
            OpcodeClass::Arith
            | OpcodeClass::Fma
            | OpcodeClass::Slide
            | OpcodeClass::Permute
            | OpcodeClass::Reduce => self.vector,
            OpcodeClass::MemUnit => self.mem_unit,
            OpcodeClass::MemStrided => self.mem_strided_base + gvl.div_ceil(4),
            OpcodeClass::MemIndexed => self.mem_indexed_base + gvl,
        }
    }

    pub fn ridge_ai(&self) -> f64 {
        self.peak_gflops / self.dram_gbps
    }
}

/// Parse `key=value` lines into cache and cost settings. `#` starts a
/// comment. Unknown keys are rejected.
pub fn parse_config(
    text: &str,
    cache: &mut CacheConfig,
    cost: &mut CostModel,
) -> Result<(), ConfigError> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Parse {
            line: lineno + 1,
            msg: "expected key=value".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let as_u64 = || -> Result<u64, ConfigError> {
            value.parse().map_err(|_| ConfigError::Parse {
                line: lineno + 1,
                msg: format!("not an integer: {value}"),
            })
        };
        let as_f64 = || -> Result<f64, ConfigError> {
            value.parse().map_err(|_| ConfigError::Parse {
                line: lineno + 1,
                msg: format!("not a number: {value}"),
            })
        };
        match key {
            "cache.l1_bytes" => cache.l1_bytes = as_u64()?,
            "cache.l2_bytes" => cache.l2_bytes = as_u64()?,
            "cache.line_bytes" => cache.line_bytes = as_u64()?,
            "cache.l1_ways" => cache.l1_ways = as_u64()? as u32,
            "cache.l2_ways" => cache.l2_ways = as_u64()? as u32,
            "cost.scalar" => cost.scalar = as_u64()?,
            "cost.setvl" => cost.setvl = as_u64()?,
            "cost.vector" => cost.vector = as_u64()?,
            "cost.mem_unit" => cost.mem_unit = as_u64()?,
            "cost.mem_strided_base" => cost.mem_strided_base = as_u64()?,
            "cost.mem_indexed_base" => cost.mem_indexed_base = as_u64()?,
            "cost.l1_hit_cycles" => cost.l1_hit_cycles = as_u64()?,
            "cost.l2_hit_cycles" => cost.l2_hit_cycles = as_u64()?,
            "cost.dram_cycles" => cost.dram_cycles = as_u64()?,
            "cost.unit_mlp" => cost.unit_mlp = as_u64()?,
            "machine.core_ghz" => cost.core_ghz = as_f64()?,
            "machine.peak_gflops" => cost.peak_gflops = as_f64()?,
            "machine.dram_gbps" => cost.dram_gbps = as_f64()?,
            other => {
                return Err(ConfigError::Parse {
                    line: lineno + 1,
                    msg: format!("unknown key: {other}"),
                })
            }
        }
    }
    cache.validate()
}

#[derive(Debug, Clone, Copy, Default)]
struct Line {
    tag: u64,
    valid: bool,
    dirty: bool,
    last_used: u64,
}

#[derive(Debug)]
struct Cache {
    sets: Vec<Vec<Line>>,
    num_sets: u64,
    ways: usize,
}

/// Result of one line probe, with the evicted dirty line if any.
struct ProbeOutcome {
    hit: bool,
    writeback: Option<u64>, // evicted dirty line number
}

impl Cache {
    fn new(bytes: u64, line_bytes: u64, ways: u32) -> Self {
        let num_sets = bytes / line_bytes / ways as u64;
        Self { sets: vec![Vec::new(); num_sets as usize], num_sets, ways: ways as usize }
    }

    /// Probe one line (identified by its line number). Allocates on miss.
    fn probe(&mut self, line_no: u64, make_dirty: bool, tick: u64) -> ProbeOutcome {
        let set_idx = (line_no % self.num_sets) as usize;
        let tag = line_no / self.num_sets;
        let ways = self.ways;
        let set = &mut self.sets[set_idx];
        if set.is_empty() {
            set.reserve_exact(ways);
        }
        for line in set.iter_mut() {
            if line.valid && line.tag == tag {
                line.last_used = tick;
                line.dirty |= make_dirty;
                return ProbeOutcome { hit: true, writeback: None };
            }
        }
        // miss: allocate
        if set.len() < ways {
            set.push(Line { tag, valid: true, dirty: make_dirty, last_used: tick });
            return ProbeOutcome { hit: false, writeback: None };
        }
        let victim = set
            .iter()
            .enumerate()
            .min_by_key(|(_, l)| l.last_used)
            .map(|(i, _)| i)
            .unwrap();
        let old = set[victim];
        set[victim] = Line { tag, valid: true, dirty: make_dirty, last_used: tick };
        let writeback = (old.valid && old.dirty)
            .then(|| old.tag * self.num_sets + set_idx as u64);
        ProbeOutcome { hit: false, writeback }
    }

    /// Mark a line dirty if present, else silently install it (used to sink
    /// L1 write-backs without disturbing demand statistics).
    fn absorb_writeback(&mut self, line_no: u64, tick: u64) -> Option<u64> {
        self.probe(line_no, true, tick).writeback
    }
}

/// Which level served an access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ServedBy {
    L1,
    L2,
    Dram,
}

/// The two-level hierarchy with demand statistics.
#[derive(Debug)]
pub struct CacheHierarchy {
    l1: Cache,
    l2: Cache,
    line_bytes: u64,
    tick: u64,
    pub l1_accesses: u64,
    pub l1_misses: u64,
    pub l2_accesses: u64,
    pub l2_misses: u64,
    pub l2_writebacks: u64,
    pub dram_bytes: u64,
}

impl CacheHierarchy {
    pub fn new(cfg: &CacheConfig) -> Self {
        cfg.validate().expect("invalid cache config");
        Self {
            l1: Cache::new(cfg.l1_bytes, cfg.line_bytes, cfg.l1_ways),
            l2: Cache::new(cfg.l2_bytes, cfg.line_bytes, cfg.l2_ways),
            line_bytes: cfg.line_bytes,
            tick: 0,
            l1_accesses: 0,
            l1_misses: 0,
            l2_accesses: 0,
            l2_misses: 0,
            l2_writebacks: 0,
            dram_bytes: 0,
        }
    }

    pub fn line_bytes(&self) -> u64 {
        self.line_bytes
    }

    fn line_of(&self, addr: Addr) -> u64 {
        addr / self.line_bytes
    }

    /// Demand access to one line; returns the serving level.
    fn access_line(&mut self, line_no: u64, is_store: bool) -> ServedBy {
        self.tick += 1;
        let tick = self.tick;
        self.l1_accesses += 1;
        let l1 = self.l1.probe(line_no, is_store, tick);
        if l1.hit {
            return ServedBy::L1;
        }
        self.l1_misses += 1;
        // dirty L1 victim drains into L2
        if let Some(wb) = l1.writeback {
            if let Some(l2_evict) = self.l2.absorb_writeback(wb, tick) {
                self.l2_writebacks += 1;
                self.dram_bytes += self.line_bytes;
                let _ = l2_evict;
            }
        }
        self.l2_accesses += 1;
        let l2 = self.l2.probe(line_no, false, tick);
        if let Some(_evicted) = l2.writeback {
            self.l2_writebacks += 1;
            self.dram_bytes += self.line_bytes;
        }
        if l2.hit {
            ServedBy::L2
        } else {
            self.l2_misses += 1;
            self.dram_bytes += self.line_bytes; // fill read (also on write-allocate)
            ServedBy::Dram
        }
    }
}

/// Per-class counts plus derived cache and cycle totals. Additive across
/// program sections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub counts: [u64; 10],
    pub flops: u64,
    pub l1_accesses: u64,
    pub l1_misses: u64,
    pub l2_accesses: u64,
    pub l2_misses: u64,
    pub l2_writebacks: u64,
    pub dram_bytes: u64,
    pub cycles: u64,
}

impl ExecStats {
    pub fn count(&self, class: OpcodeClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn total_instructions(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn modeled_seconds(&self, cost: &CostModel) -> f64 {
        self.cycles as f64 / (cost.core_ghz * 1e9)
    }

    pub fn l1_miss_rate(&self) -> f64 {
        if self.l1_accesses == 0 { 0.0 } else { self.l1_misses as f64 / self.l1_accesses as f64 }
    }

    pub fn l2_miss_rate(&self) -> f64 {
        if self.l2_accesses == 0 { 0.0 } else { self.l2_misses as f64 / self.l2_accesses as f64 }
    }

    pub fn achieved_gflops(&self, cost: &CostModel) -> f64 {
        let secs = self.modeled_seconds(cost);
        if secs == 0.0 { 0.0 } else { self.flops as f64 / secs / 1e9 }
    }

    /// Difference of two cumulative snapshots (`self` taken after `earlier`).
    pub fn delta_since(&self, earlier: &ExecStats) -> ExecStats {
        let mut counts = [0u64; 10];
        for i in 0..10 {
            counts[i] = self.counts[i] - earlier.counts[i];
        }
        ExecStats {
            counts,
            flops: self.flops - earlier.flops,
            l1_accesses: self.l1_accesses - earlier.l1_accesses,
            l1_misses: self.l1_misses - earlier.l1_misses,
            l2_accesses: self.l2_accesses - earlier.l2_accesses,
            l2_misses: self.l2_misses - earlier.l2_misses,
            l2_writebacks: self.l2_writebacks - earlier.l2_writebacks,
            dram_bytes: self.dram_bytes - earlier.dram_bytes,
            cycles: self.cycles - earlier.cycles,
        }
    }

    pub fn accumulate(&mut self, other: &ExecStats) {
        for i in 0..10 {
            self.counts[i] += other.counts[i];
        }
        self.flops += other.flops;
        self.l1_accesses += other.l1_accesses;
        self.l1_misses += other.l1_misses;
        self.l2_accesses += other.l2_accesses;
        self.l2_misses += other.l2_misses;
        self.l2_writebacks += other.l2_writebacks;
        self.dram_bytes += other.dram_bytes;
        self.cycles += other.cycles;
    }
}

/// Arithmetic intensity in FLOPs per DRAM byte. `+inf` when no DRAM traffic.
pub fn arithmetic_intensity(stats: &ExecStats) -> f64 {
    if stats.dram_bytes == 0 {
        f64::INFINITY
    } else {
        stats.flops as f64 / stats.dram_bytes as f64
    }
}

/// Roofline ceiling at a given arithmetic intensity.
pub fn attainable_gflops(cost: &CostModel, ai: f64) -> f64 {
    cost.peak_gflops.min(ai * cost.dram_gbps)
}

pub fn is_memory_bound(cost: &CostModel, ai: f64) -> bool {
    ai < cost.ridge_ai()
}

/// Streaming consumer: folds each instruction through the cost model and the
/// cache hierarchy as it is executed.
pub struct Replayer {
    hierarchy: CacheHierarchy,
    cost: CostModel,
    stats: ExecStats,
    // scratch reused across events to avoid per-event allocation
    seen_lines: Vec<u64>,
    seen_addrs: Vec<Addr>,
}

impl Replayer {
    pub fn new(cache: &CacheConfig, cost: CostModel) -> Self {
        Self {
            hierarchy: CacheHierarchy::new(cache),
            cost,
            stats: ExecStats::default(),
            seen_lines: Vec::new(),
            seen_addrs: Vec::new(),
        }
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    pub fn stats(&self) -> ExecStats {
        self.stats
    }

    fn level_latency(&self, served: ServedBy) -> u64 {
        match served {
            ServedBy::L1 => self.cost.l1_hit_cycles,
            ServedBy::L2 => self.cost.l2_hit_cycles,
            ServedBy::Dram => self.cost.dram_cycles,
        }
    }

    /// Probe the line if new within this event; return its serving level.
    /// Repeat touches within one event are served by L1: the first access
    /// installed the line.
    fn classify_line(&mut self, line_no: u64, is_store: bool) -> ServedBy {
        if self.seen_lines.contains(&line_no) {
            return ServedBy::L1;
        }
        let served = self.hierarchy.access_line(line_no, is_store);
        self.seen_lines.push(line_no);
        served
    }

    fn memory_latency(&mut self, ev: &MemoryEvent) -> u64 {
        self.seen_lines.clear();
        let is_store = ev.kind.is_store();
        let mut latency = 0u64;
        match &ev.pattern {
            // unit-stride coalesces into line transactions which overlap up
            // to unit_mlp deep; the longest single transaction is the floor
            AddressPattern::Unit => {
                let mut last_line = None;
                let mut worst = 0u64;
                for addr in ev.element_addrs() {
                    let line = self.hierarchy.line_of(addr);
                    if last_line != Some(line) {
                        let served = self.classify_line(line, is_store);
                        let lat = self.level_latency(served);
                        latency += lat;
                        worst = worst.max(lat);
                        last_line = Some(line);
                    }
                }
                let mlp = self.cost.unit_mlp.max(1);
                latency = worst.max(latency.div_ceil(mlp));
            }
            // one transaction per element
            AddressPattern::Strided(_) => {
                for addr in ev.element_addrs() {
                    let line = self.hierarchy.line_of(addr);
                    let served = self.classify_line(line, is_store);
                    latency += self.level_latency(served);
                }
            }
            // one transaction per distinct element address
            AddressPattern::Indexed(addrs) => {
                self.seen_addrs.clear();
                for &addr in addrs {
                    if self.seen_addrs.contains(&addr) {
                        continue;
                    }
                    self.seen_addrs.push(addr);
                    let line = self.hierarchy.line_of(addr);
                    let served = self.classify_line(line, is_store);
                    latency += self.level_latency(served);
                }
            }
        }
        latency
    }

    /// Final snapshot plus the hierarchy, for inspection.
    pub fn finish(self) -> ExecStats {
        self.stats
    }
}

impl TraceSink for Replayer {
    fn record(&mut self, rec: InstructionRecord) {
        self.stats.counts[rec.class.index()] += 1;
        self.stats.flops += rec.flops as u64;
        let mut cycles = self.cost.base_cost(rec.class, rec.gvl);
        if let Some(ev) = &rec.mem {
            cycles += self.memory_latency(ev);
        }
        self.stats.cycles += cycles;
        self.stats.l1_accesses = self.hierarchy.l1_accesses;
        self.stats.l1_misses = self.hierarchy.l1_misses;
        self.stats.l2_accesses = self.hierarchy.l2_accesses;
        self.stats.l2_misses = self.hierarchy.l2_misses;
        self.stats.l2_writebacks = self.hierarchy.l2_writebacks;
        self.stats.dram_bytes = self.hierarchy.dram_bytes;
    }
}

/// Fold a collected trace through a fresh hierarchy.
pub fn replay<'a>(
    records: impl IntoIterator<Item = &'a InstructionRecord>,
    cache: &CacheConfig,
    cost: CostModel,
) -> ExecStats {
    let mut r = Replayer::new(cache, cost);
    for rec in records {
        r.record(rec.clone());
    }
    r.finish()
}
