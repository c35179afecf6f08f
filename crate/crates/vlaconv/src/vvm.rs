//! A minimal vector-length-agnostic virtual vector machine.
//!
//! Every instruction the machine executes is pushed into a [`TraceSink`];
//! the cache/cost model in [`crate::memsim`] consumes that stream to produce
//! modeled cycles and miss rates. The machine owns a flat byte-addressable
//! memory so that every kernel access is visible to the trace.
//!
//! Element type is fixed to fp32. Lanes at or beyond the granted vector
//! length read as zero and are never written.

use thiserror::Error;

/// Byte address into the machine's flat memory.
pub type Addr = u64;

pub const ELEM_BYTES: u64 = 4;

#[derive(Debug, Error)]
pub enum VvmError {
    #[error("memory fault at byte address {addr:#x}")]
    Fault { addr: Addr },
    #[error("memory fault at lane {lane} (byte address {addr:#x})")]
    FaultLane { lane: usize, addr: Addr },
    #[error("misaligned address {addr:#x} (4-byte alignment required)")]
    Misaligned { addr: Addr },
    #[error("strided store with zero stride would collide on a single word")]
    WriteCollision,
    #[error("bad argument: {0}")]
    BadArgument(&'static str),
}

pub type Result<T> = std::result::Result<T, VvmError>;

/// Machine shape: vector register width in bits, fp32 elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorMachineConfig {
    pub vlen_bits: u32,
}

impl VectorMachineConfig {
    pub fn new(vlen_bits: u32) -> Result<Self> {
        if !vlen_bits.is_power_of_two() || !(128..=16384).contains(&vlen_bits) {
            return Err(VvmError::BadArgument(
                "vlen must be a power of two in 128..=16384",
            ));
        }
        Ok(Self { vlen_bits })
    }

    /// Lanes available at 32-bit elements.
    pub fn vlmax(&self) -> usize {
        (self.vlen_bits / 32) as usize
    }

    /// Quadword blocks per full vector (4 fp32 elements each).
    pub fn blocks(&self) -> usize {
        self.vlmax() / 4
    }
}

/// A vector register value. Only the `active` lanes are stored; lanes at or
/// beyond `active` read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorValue {
    lanes: Vec<f32>,
    active: usize,
}

impl VectorValue {
    pub fn zero(active: usize) -> Self {
        Self { lanes: vec![0.0; active], active }
    }

    pub fn from_lanes(lanes: Vec<f32>) -> Self {
        let active = lanes.len();
        Self { lanes, active }
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn lane(&self, i: usize) -> f32 {
        if i < self.active { self.lanes[i] } else { 0.0 }
    }

    pub fn lanes(&self) -> &[f32] {
        &self.lanes
    }
}

/// Instruction classes as counted by the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpcodeClass {
    Scalar,
    SetVl,
    Arith,
    Fma,
    Slide,
    Permute,
    Reduce,
    MemUnit,
    MemStrided,
    MemIndexed,
}

impl OpcodeClass {
    pub const ALL: [OpcodeClass; 10] = [
        OpcodeClass::Scalar,
        OpcodeClass::SetVl,
        OpcodeClass::Arith,
        OpcodeClass::Fma,
        OpcodeClass::Slide,
        OpcodeClass::Permute,
        OpcodeClass::Reduce,
        OpcodeClass::MemUnit,
        OpcodeClass::MemStrided,
        OpcodeClass::MemIndexed,
    ];

    pub fn index(self) -> usize {
        match self {
            OpcodeClass::Scalar => 0,
            OpcodeClass::SetVl => 1,
            OpcodeClass::Arith => 2,
            OpcodeClass::Fma => 3,
            OpcodeClass::Slide => 4,
            OpcodeClass::Permute => 5,
            OpcodeClass::Reduce => 6,
            OpcodeClass::MemUnit => 7,
            OpcodeClass::MemStrided => 8,
            OpcodeClass::MemIndexed => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpcodeClass::Scalar => "scalar",
            OpcodeClass::SetVl => "setvl",
            OpcodeClass::Arith => "arith",
            OpcodeClass::Fma => "fma",
            OpcodeClass::Slide => "slide",
            OpcodeClass::Permute => "permute",
            OpcodeClass::Reduce => "reduce",
            OpcodeClass::MemUnit => "mem_unit",
            OpcodeClass::MemStrided => "mem_strided",
            OpcodeClass::MemIndexed => "mem_indexed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemAccessKind {
    LoadUnit,
    StoreUnit,
    LoadStrided,
    StoreStrided,
    LoadIndexed,
    StoreIndexed,
}

impl MemAccessKind {
    pub fn is_store(self) -> bool {
        matches!(
            self,
            MemAccessKind::StoreUnit | MemAccessKind::StoreStrided | MemAccessKind::StoreIndexed
        )
    }
}

/// Per-element address shape of a memory event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddressPattern {
    Unit,
    Strided(i64),
    Indexed(Vec<Addr>),
}

/// One traced memory access: `count` fp32 elements starting from `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEvent {
    pub kind: MemAccessKind,
    pub base: Addr,
    pub count: u32,
    pub pattern: AddressPattern,
}

impl MemoryEvent {
    pub fn element_addr(&self, i: usize) -> Addr {
        debug_assert!(i < self.count as usize);
        match &self.pattern {
            AddressPattern::Unit => self.base + i as u64 * ELEM_BYTES,
            AddressPattern::Strided(stride) => (self.base as i64 + i as i64 * stride) as u64,
            AddressPattern::Indexed(addrs) => addrs[i],
        }
    }

    pub fn element_addrs(&self) -> impl Iterator<Item = Addr> + '_ {
        (0..self.count as usize).map(move |i| self.element_addr(i))
    }
}

/// One executed instruction, as seen by the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct InstructionRecord {
    pub class: OpcodeClass,
    pub gvl: u32,
    pub flops: u32,
    pub mem: Option<MemoryEvent>,
}

/// Consumer of the instruction stream.
pub trait TraceSink {
    fn record(&mut self, rec: InstructionRecord);
}

/// Collects the full trace in memory. Intended for small programs and tests.
#[derive(Debug, Default)]
pub struct TraceBuffer {
    pub records: Vec<InstructionRecord>,
}

impl TraceSink for TraceBuffer {
    fn record(&mut self, rec: InstructionRecord) {
        self.records.push(rec);
    }
}

impl TraceBuffer {
    pub fn count_class(&self, class: OpcodeClass) -> usize {
        self.records.iter().filter(|r| r.class == class).count()
    }

    /// Newline-delimited debug dump: `opcode_class gvl address_count`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let n = r.mem.as_ref().map_or(0, |m| m.count);
            out.push_str(&format!("{} {} {}\n", r.class.name(), r.gvl, n));
        }
        out
    }
}

/// Discards all records.
#[derive(Debug, Default)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _rec: InstructionRecord) {}
}

const ALLOC_ALIGN: u64 = 64;

/// The virtual machine: configuration, flat memory, and a trace sink.
///
/// Single-threaded and not shareable; run one instance per experiment.
pub struct VectorMachine<S: TraceSink> {
    cfg: VectorMachineConfig,
    mem: Vec<f32>,
    sink: S,
}

impl<S: TraceSink> VectorMachine<S> {
    pub fn new(cfg: VectorMachineConfig, sink: S) -> Self {
        Self { cfg, mem: Vec::new(), sink }
    }

    pub fn config(&self) -> VectorMachineConfig {
        self.cfg
    }

    pub fn vlmax(&self) -> usize {
        self.cfg.vlmax()
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }

    // ---- memory management (host side, untraced) ----

    /// Bump-allocate `floats` fp32 words, 64-byte aligned, zero-initialized.
    pub fn alloc(&mut self, floats: usize) -> Addr {
        let align = (ALLOC_ALIGN / ELEM_BYTES) as usize;
        let start = (self.mem.len() + align - 1) / align * align;
        self.mem.resize(start + floats, 0.0);
        start as u64 * ELEM_BYTES
    }

    /// Current allocation mark; pair with [`release_to`](Self::release_to).
    pub fn mark(&self) -> usize {
        self.mem.len()
    }

    /// Roll the allocator back to a previous mark, releasing scratch tensors.
    pub fn release_to(&mut self, mark: usize) {
        debug_assert!(mark <= self.mem.len());
        self.mem.truncate(mark);
    }

    fn word_index(&self, addr: Addr) -> Result<usize> {
        if addr % ELEM_BYTES != 0 {
            return Err(VvmError::Misaligned { addr });
        }
        let idx = (addr / ELEM_BYTES) as usize;
        if idx >= self.mem.len() {
            return Err(VvmError::Fault { addr });
        }
        Ok(idx)
    }

    /// Host write, not traced. For pre-existing data (weights, inputs).
    pub fn write_slice(&mut self, addr: Addr, data: &[f32]) {
        let idx = (addr / ELEM_BYTES) as usize;
        assert!(addr % ELEM_BYTES == 0 && idx + data.len() <= self.mem.len());
        self.mem[idx..idx + data.len()].copy_from_slice(data);
    }

    /// Host read, not traced. For extracting results.
    pub fn read_slice(&self, addr: Addr, len: usize) -> &[f32] {
        let idx = (addr / ELEM_BYTES) as usize;
        assert!(addr % ELEM_BYTES == 0 && idx + len <= self.mem.len());
        &self.mem[idx..idx + len]
    }

    pub fn read_word(&self, addr: Addr) -> f32 {
        self.read_slice(addr, 1)[0]
    }

    // ---- instructions ----

    fn emit(&mut self, class: OpcodeClass, gvl: usize, flops: u32, mem: Option<MemoryEvent>) {
        self.sink.record(InstructionRecord { class, gvl: gvl as u32, flops, mem });
    }

    fn check_gvl(&self, gvl: usize) -> Result<()> {
        if gvl > self.cfg.vlmax() {
            return Err(VvmError::BadArgument("gvl exceeds vlmax"));
        }
        Ok(())
    }

    /// Stripmine grant: `min(avl, vlmax)`.
    pub fn set_vector_length(&mut self, avl: usize) -> usize {
        let gvl = avl.min(self.cfg.vlmax());
        self.emit(OpcodeClass::SetVl, gvl, 0, None);
        gvl
    }

    pub fn load_unit(&mut self, addr: Addr, gvl: usize) -> Result<VectorValue> {
        self.check_gvl(gvl)?;
        let mut lanes = Vec::with_capacity(gvl);
        for i in 0..gvl {
            let a = addr + i as u64 * ELEM_BYTES;
            let idx = self.word_index(a)?;
            lanes.push(self.mem[idx]);
        }
        self.emit(
            OpcodeClass::MemUnit,
            gvl,
            0,
            Some(MemoryEvent {
                kind: MemAccessKind::LoadUnit,
                base: addr,
                count: gvl as u32,
                pattern: AddressPattern::Unit,
            }),
        );
        Ok(VectorValue { lanes, active: gvl })
    }

    pub fn store_unit(&mut self, v: &VectorValue, addr: Addr, gvl: usize) -> Result<()> {
        self.check_gvl(gvl)?;
        for i in 0..gvl {
            let a = addr + i as u64 * ELEM_BYTES;
            let idx = self.word_index(a)?;
            self.mem[idx] = v.lane(i);
        }
        self.emit(
            OpcodeClass::MemUnit,
            gvl,
            0,
            Some(MemoryEvent {
                kind: MemAccessKind::StoreUnit,
                base: addr,
                count: gvl as u32,
                pattern: AddressPattern::Unit,
            }),
        );
        Ok(())
    }

    pub fn load_strided(&mut self, addr: Addr, stride: i64, gvl: usize) -> Result<VectorValue> {
        self.check_gvl(gvl)?;
        if stride % ELEM_BYTES as i64 != 0 {
            return Err(VvmError::BadArgument("stride must be a multiple of 4"));
        }
        let mut lanes = Vec::with_capacity(gvl);
        for i in 0..gvl {
            let a = (addr as i64 + i as i64 * stride) as u64;
            let idx = self.word_index(a)?;
            lanes.push(self.mem[idx]);
        }
        self.emit(
            OpcodeClass::MemStrided,
            gvl,
            0,
            Some(MemoryEvent {
                kind: MemAccessKind::LoadStrided,
                base: addr,
                count: gvl as u32,
                pattern: AddressPattern::Strided(stride),
            }),
        );
        Ok(VectorValue { lanes, active: gvl })
    }

    pub fn store_strided(
        &mut self,
        v: &VectorValue,
        addr: Addr,
        stride: i64,
        gvl: usize,
    ) -> Result<()> {
        self.check_gvl(gvl)?;
        if stride % ELEM_BYTES as i64 != 0 {
            return Err(VvmError::BadArgument("stride must be a multiple of 4"));
        }
        if stride == 0 && gvl > 1 {
            return Err(VvmError::WriteCollision);
        }
        for i in 0..gvl {
            let a = (addr as i64 + i as i64 * stride) as u64;
            let idx = self.word_index(a)?;
            self.mem[idx] = v.lane(i);
        }
        self.emit(
            OpcodeClass::MemStrided,
            gvl,
            0,
            Some(MemoryEvent {
                kind: MemAccessKind::StoreStrided,
                base: addr,
                count: gvl as u32,
                pattern: AddressPattern::Strided(stride),
            }),
        );
        Ok(())
    }

    fn indexed_addrs(&self, base: Addr, index: &VectorValue, gvl: usize) -> Result<Vec<Addr>> {
        let mut addrs = Vec::with_capacity(gvl);
        for i in 0..gvl {
            let raw = index.lane(i);
            if raw < 0.0 || raw.fract() != 0.0 || raw >= (1u64 << 24) as f32 {
                return Err(VvmError::BadArgument(
                    "index lanes must hold small non-negative integers",
                ));
            }
            addrs.push(base + raw as u64 * ELEM_BYTES);
        }
        Ok(addrs)
    }

    /// Gather: lane i reads the word at `base + 4 * index[i]`.
    pub fn load_indexed(
        &mut self,
        base: Addr,
        index: &VectorValue,
        gvl: usize,
    ) -> Result<VectorValue> {
        self.check_gvl(gvl)?;
        let addrs = self.indexed_addrs(base, index, gvl)?;
        let mut lanes = Vec::with_capacity(gvl);
        for (i, &a) in addrs.iter().enumerate() {
            let idx = self.word_index(a).map_err(|_| VvmError::FaultLane { lane: i, addr: a })?;
            lanes.push(self.mem[idx]);
        }
        self.emit(
            OpcodeClass::MemIndexed,
            gvl,
            0,
            Some(MemoryEvent {
                kind: MemAccessKind::LoadIndexed,
                base,
                count: gvl as u32,
                pattern: AddressPattern::Indexed(addrs),
            }),
        );
        Ok(VectorValue { lanes, active: gvl })
    }

    /// Scatter: lane i writes the word at `base + 4 * index[i]`.
    pub fn store_indexed(
        &mut self,
        v: &VectorValue,
        base: Addr,
        index: &VectorValue,
        gvl: usize,
    ) -> Result<()> {
        self.check_gvl(gvl)?;
        let addrs = self.indexed_addrs(base, index, gvl)?;
        for (i, &a) in addrs.iter().enumerate() {
            let idx = self.word_index(a).map_err(|_| VvmError::FaultLane { lane: i, addr: a })?;
            self.mem[idx] = v.lane(i);
        }
        self.emit(
            OpcodeClass::MemIndexed,
            gvl,
            0,
            Some(MemoryEvent {
                kind: MemAccessKind::StoreIndexed,
                base,
                count: gvl as u32,
                pattern: AddressPattern::Indexed(addrs),
            }),
        );
        Ok(())
    }

    /// Scalar load through the memory system (a one-element unit access).
    pub fn load_scalar(&mut self, addr: Addr) -> Result<f32> {
        Ok(self.load_unit(addr, 1)?.lane(0))
    }

    /// result[i] = dest[i] for i < offset, src[i - offset] for offset <= i < gvl.
    pub fn slide_up(
        &mut self,
        dest: &VectorValue,
        src: &VectorValue,
        offset: usize,
        gvl: usize,
    ) -> Result<VectorValue> {
        self.check_gvl(gvl)?;
        if offset > gvl {
            return Err(VvmError::BadArgument("slide offset exceeds gvl"));
        }
        let mut lanes = Vec::with_capacity(gvl);
        for i in 0..gvl {
            lanes.push(if i < offset { dest.lane(i) } else { src.lane(i - offset) });
        }
        self.emit(OpcodeClass::Slide, gvl, 0, None);
        Ok(VectorValue { lanes, active: gvl })
    }

    /// result[i] = src[i + offset] for i < gvl - offset, dest[i] above.
    pub fn slide_down(
        &mut self,
        dest: &VectorValue,
        src: &VectorValue,
        offset: usize,
        gvl: usize,
    ) -> Result<VectorValue> {
        self.check_gvl(gvl)?;
        if offset > gvl {
            return Err(VvmError::BadArgument("slide offset exceeds gvl"));
        }
        let mut lanes = Vec::with_capacity(gvl);
        for i in 0..gvl {
            lanes.push(if i + offset < gvl { src.lane(i + offset) } else { dest.lane(i) });
        }
        self.emit(OpcodeClass::Slide, gvl, 0, None);
        Ok(VectorValue { lanes, active: gvl })
    }

    /// Lanewise acc + a * b with a single rounding, 2 flops per active lane.
    pub fn fma(&mut self, acc: &VectorValue, a: &VectorValue, b: &VectorValue, gvl: usize) -> VectorValue {
        debug_assert!(gvl <= self.cfg.vlmax());
        let mut lanes = Vec::with_capacity(gvl);
        for i in 0..gvl {
            lanes.push(a.lane(i).mul_add(b.lane(i), acc.lane(i)));
        }
        self.emit(OpcodeClass::Fma, gvl, 2 * gvl as u32, None);
        VectorValue { lanes, active: gvl }
    }

    /// Vector-scalar fma: acc + s * v.
    pub fn fma_scalar(&mut self, acc: &VectorValue, s: f32, v: &VectorValue, gvl: usize) -> VectorValue {
        debug_assert!(gvl <= self.cfg.vlmax());
        let mut lanes = Vec::with_capacity(gvl);
        for i in 0..gvl {
            lanes.push(v.lane(i).mul_add(s, acc.lane(i)));
        }
        self.emit(OpcodeClass::Fma, gvl, 2 * gvl as u32, None);
        VectorValue { lanes, active: gvl }
    }

    pub fn add(&mut self, a: &VectorValue, b: &VectorValue, gvl: usize) -> VectorValue {
        self.lanewise(a, b, gvl, |x, y| x + y)
    }

    pub fn sub(&mut self, a: &VectorValue, b: &VectorValue, gvl: usize) -> VectorValue {
        self.lanewise(a, b, gvl, |x, y| x - y)
    }

    pub fn mul(&mut self, a: &VectorValue, b: &VectorValue, gvl: usize) -> VectorValue {
        self.lanewise(a, b, gvl, |x, y| x * y)
    }

    fn lanewise(
        &mut self,
        a: &VectorValue,
        b: &VectorValue,
        gvl: usize,
        f: impl Fn(f32, f32) -> f32,
    ) -> VectorValue {
        debug_assert!(gvl <= self.cfg.vlmax());
        let mut lanes = Vec::with_capacity(gvl);
        for i in 0..gvl {
            lanes.push(f(a.lane(i), b.lane(i)));
        }
        self.emit(OpcodeClass::Arith, gvl, gvl as u32, None);
        VectorValue { lanes, active: gvl }
    }

    pub fn scale_by_scalar(&mut self, a: &VectorValue, s: f32, gvl: usize) -> VectorValue {
        debug_assert!(gvl <= self.cfg.vlmax());
        let mut lanes = Vec::with_capacity(gvl);
        for i in 0..gvl {
            lanes.push(a.lane(i) * s);
        }
        self.emit(OpcodeClass::Arith, gvl, gvl as u32, None);
        VectorValue { lanes, active: gvl }
    }

    pub fn broadcast_scalar(&mut self, s: f32, gvl: usize) -> VectorValue {
        debug_assert!(gvl <= self.cfg.vlmax());
        self.emit(OpcodeClass::Arith, gvl, 0, None);
        VectorValue { lanes: vec![s; gvl], active: gvl }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(vlen: u32) -> VectorMachine<TraceBuffer> {
        VectorMachine::new(VectorMachineConfig::new(vlen).unwrap(), TraceBuffer::default())
    }

    #[test]
    fn setvl_grants_min_of_avl_and_vlmax() {
        let mut m = machine(512);
        assert_eq!(m.set_vector_length(100), 16);
        assert_eq!(m.set_vector_length(7), 7);
        let mut m = machine(2048);
        assert_eq!(m.set_vector_length(64), 64);
        assert_eq!(m.set_vector_length(0), 0);
    }

    #[test]
    fn setvl_is_monotone() {
        let mut m = machine(1024);
        let mut prev = 0;
        for avl in 0..100 {
            let g = m.set_vector_length(avl);
            assert!(g >= prev);
            if avl <= m.vlmax() {
                assert_eq!(g, avl);
            }
            prev = g;
        }
    }

    #[test]
    fn unit_load_reads_consecutive_words() {
        let mut m = machine(512);
        let a = m.alloc(16);
        m.write_slice(a, &[1.0, 2.0, 3.0, 4.0]);
        let v = m.load_unit(a, 4).unwrap();
        assert_eq!(v.lanes(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unit_roundtrip_identity() {
        let mut m = machine(512);
        let a = m.alloc(16);
        let data: Vec<f32> = (0..16).map(|i| i as f32 * 0.5 - 3.0).collect();
        let v = VectorValue::from_lanes(data.clone());
        m.store_unit(&v, a, 16).unwrap();
        let r = m.load_unit(a, 16).unwrap();
        assert_eq!(r.lanes(), &data[..]);
    }

    #[test]
    fn zero_gvl_access_is_empty() {
        let mut m = machine(512);
        let a = m.alloc(4);
        let v = m.load_unit(a, 0).unwrap();
        assert_eq!(v.active(), 0);
        let rec = m.into_sink().records.pop().unwrap();
        assert_eq!(rec.mem.unwrap().count, 0);
    }

    #[test]
    fn out_of_bounds_faults() {
        let mut m = machine(512);
        let a = m.alloc(4);
        assert!(matches!(m.load_unit(a, 8), Err(VvmError::Fault { .. })));
        assert!(matches!(m.load_unit(a + 1, 2), Err(VvmError::Misaligned { .. })));
    }

    #[test]
    fn strided_load_picks_every_stride() {
        let mut m = machine(512);
        let a = m.alloc(8);
        m.write_slice(a, &[10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 17.0]);
        let v = m.load_strided(a, 16, 2).unwrap();
        assert_eq!(v.lanes(), &[10.0, 14.0]);
        // stride 4 equals unit-stride semantics, still classed mem_strided
        let v = m.load_strided(a, 4, 4).unwrap();
        assert_eq!(v.lanes(), &[10.0, 11.0, 12.0, 13.0]);
        let strided = m.into_sink().count_class(OpcodeClass::MemStrided);
        assert_eq!(strided, 2);
    }

    #[test]
    fn strided_store_spreads_elements() {
        let mut m = machine(512);
        let a = m.alloc(8);
        let v = VectorValue::from_lanes(vec![9.0, 8.0]);
        m.store_strided(&v, a, 16, 2).unwrap();
        let out = m.read_slice(a, 8);
        assert_eq!(out[0], 9.0);
        assert_eq!(out[4], 8.0);
    }

    #[test]
    fn zero_stride_load_broadcasts_store_rejected() {
        let mut m = machine(512);
        let a = m.alloc(4);
        m.write_slice(a, &[5.0]);
        let v = m.load_strided(a, 0, 4).unwrap();
        assert_eq!(v.lanes(), &[5.0, 5.0, 5.0, 5.0]);
        let err = m.store_strided(&v, a, 0, 4);
        assert!(matches!(err, Err(VvmError::WriteCollision)));
    }

    #[test]
    fn indexed_load_replicates_quadword() {
        let mut m = machine(512);
        let a = m.alloc(4);
        m.write_slice(a, &[1.0, 2.0, 3.0, 4.0]);
        let idx = VectorValue::from_lanes(vec![0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0]);
        let v = m.load_indexed(a, &idx, 8).unwrap();
        assert_eq!(v.lanes(), &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn identity_index_matches_unit_load() {
        let mut m = machine(512);
        let a = m.alloc(16);
        let data: Vec<f32> = (0..16).map(|i| (i * i) as f32).collect();
        m.write_slice(a, &data);
        let idx = VectorValue::from_lanes((0..16).map(|i| i as f32).collect());
        let gathered = m.load_indexed(a, &idx, 16).unwrap();
        let unit = m.load_unit(a, 16).unwrap();
        assert_eq!(gathered.lanes(), unit.lanes());
    }

    #[test]
    fn reversal_index() {
        let mut m = machine(512);
        let a = m.alloc(4);
        m.write_slice(a, &[1.0, 2.0, 3.0, 4.0]);
        let idx = VectorValue::from_lanes(vec![3.0, 2.0, 1.0, 0.0]);
        let v = m.load_indexed(a, &idx, 4).unwrap();
        assert_eq!(v.lanes(), &[4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn indexed_fault_names_lane() {
        let mut m = machine(512);
        let a = m.alloc(4);
        let idx = VectorValue::from_lanes(vec![0.0, 100.0]);
        match m.load_indexed(a, &idx, 2) {
            Err(VvmError::FaultLane { lane, .. }) => assert_eq!(lane, 1),
            other => panic!("expected lane fault, got {other:?}"),
        }
    }

    #[test]
    fn slide_up_replication_loop() {
        let mut m = machine(512);
        let a = m.alloc(4);
        m.write_slice(a, &[1.0, 2.0, 3.0, 4.0]);
        let gvl = 16;
        let mut v = m.load_unit(a, 4).unwrap();
        let mut off = 4;
        while off < gvl {
            v = m.slide_up(&v.clone(), &v, off, gvl).unwrap();
            off *= 2;
        }
        for i in 0..gvl {
            assert_eq!(v.lane(i), (i % 4 + 1) as f32);
        }
    }

    #[test]
    fn slide_replication_matches_indexed_bitwise() {
        let mut m = machine(2048); // 64 lanes, 16 blocks
        let a = m.alloc(4);
        m.write_slice(a, &[0.125, -7.25, 3.5, 9.75]);
        let gvl = m.vlmax();
        let mut v = m.load_unit(a, 4).unwrap();
        let mut off = 4;
        while off < gvl {
            v = m.slide_up(&v.clone(), &v, off, gvl).unwrap();
            off *= 2;
        }
        let idx = VectorValue::from_lanes((0..gvl).map(|i| (i % 4) as f32).collect());
        let g = m.load_indexed(a, &idx, gvl).unwrap();
        assert_eq!(v.lanes(), g.lanes());
    }

    #[test]
    fn slide_edges() {
        let mut m = machine(512);
        let dest = VectorValue::from_lanes(vec![1.0; 8]);
        let src = VectorValue::from_lanes(vec![2.0; 8]);
        let r = m.slide_up(&dest, &src, 0, 8).unwrap();
        assert_eq!(r.lanes(), &[2.0; 8]);
        let r = m.slide_up(&dest, &src, 8, 8).unwrap();
        assert_eq!(r.lanes(), &[1.0; 8]);
        assert!(m.slide_up(&dest, &src, 9, 8).is_err());
    }

    #[test]
    fn fma_examples() {
        let mut m = machine(512);
        let zero = VectorValue::zero(2);
        let a = VectorValue::from_lanes(vec![1.0, 2.0]);
        let b = VectorValue::from_lanes(vec![3.0, 4.0]);
        assert_eq!(m.fma(&zero, &a, &b, 2).lanes(), &[3.0, 8.0]);

        let acc = VectorValue::from_lanes(vec![1.0, 1.0]);
        let a = VectorValue::from_lanes(vec![2.0, 2.0]);
        let b = VectorValue::from_lanes(vec![0.5, -0.5]);
        assert_eq!(m.fma(&acc, &a, &b, 2).lanes(), &[2.0, 0.0]);

        // all-zero multiplier leaves acc unchanged
        let r = m.fma(&acc, &a, &VectorValue::zero(2), 2);
        assert_eq!(r.lanes(), acc.lanes());
    }

    #[test]
    fn elementwise_examples() {
        let mut m = machine(512);
        let a = VectorValue::from_lanes(vec![1.0, 2.0]);
        let b = VectorValue::from_lanes(vec![3.0, 4.0]);
        assert_eq!(m.add(&a, &b, 2).lanes(), &[4.0, 6.0]);
        assert_eq!(m.scale_by_scalar(&a, 0.0, 2).lanes(), &[0.0, 0.0]);
        assert_eq!(m.sub(&a, &a, 2).lanes(), &[0.0, 0.0]);
    }

    #[test]
    fn broadcast_and_scale_agree() {
        let mut m = machine(512);
        assert_eq!(m.broadcast_scalar(0.0, 4).lanes(), &[0.0; 4]);
        assert_eq!(m.broadcast_scalar(1.0, 3).lanes(), &[1.0; 3]);
        let x = VectorValue::from_lanes(vec![1.5, -2.0, 3.25]);
        let s = 2.5;
        let bs = m.broadcast_scalar(s, 3);
        let via_mul = m.mul(&x, &bs, 3);
        let via_scale = m.scale_by_scalar(&x, s, 3);
        assert_eq!(via_mul.lanes(), via_scale.lanes());
    }

    #[test]
    fn flop_accounting_by_class() {
        let mut m = machine(512);
        let a = VectorValue::from_lanes(vec![1.0; 16]);
        m.fma(&a, &a, &a, 16);
        m.add(&a, &a, 16);
        m.broadcast_scalar(2.0, 16);
        let trace = m.into_sink();
        let total: u64 = trace.records.iter().map(|r| r.flops as u64).sum();
        assert_eq!(total, 32 + 16);
        for r in &trace.records {
            match r.class {
                OpcodeClass::Fma => assert_eq!(r.flops, 2 * r.gvl),
                OpcodeClass::Arith => assert!(r.flops == r.gvl || r.flops == 0),
                _ => assert_eq!(r.flops, 0),
            }
        }
    }

    #[test]
    fn trace_is_deterministic() {
        let run = || {
            let mut m = machine(512);
            let a = m.alloc(32);
            let v = m.broadcast_scalar(1.5, 16);
            m.store_unit(&v, a, 16).unwrap();
            let w = m.load_unit(a, 16).unwrap();
            m.fma(&v, &w, &w, 16);
            m.into_sink().dump()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mem_event_present_iff_memory_class() {
        let mut m = machine(512);
        let a = m.alloc(16);
        let v = m.load_unit(a, 8).unwrap();
        m.store_strided(&v, a, 8, 4).unwrap();
        m.add(&v, &v, 8);
        m.set_vector_length(8);
        for r in &m.into_sink().records {
            let is_mem = matches!(
                r.class,
                OpcodeClass::MemUnit | OpcodeClass::MemStrided | OpcodeClass::MemIndexed
            );
            assert_eq!(r.mem.is_some(), is_mem);
        }
    }

    #[test]
    fn release_to_rolls_back_allocations() {
        let mut m = machine(512);
        let _keep = m.alloc(16);
        let mark = m.mark();
        let scratch = m.alloc(1024);
        m.write_slice(scratch, &[1.0]);
        m.release_to(mark);
        assert!(m.load_unit(scratch, 1).is_err());
        let again = m.alloc(16);
        assert_eq!(again, scratch); // arena reuses the space
    }
}
