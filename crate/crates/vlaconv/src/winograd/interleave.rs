//! Transpose of four vectors through memory: out[4j + k] = v_k[j].
//!
//! No cross-register shuffle exists on the machine, so both strategies round
//! trip through a buffer. The gather variant stores the four vectors
//! contiguously and picks the transposed order back with indexed loads; the
//! strided variant writes the interleaving directly with 16-byte-stride
//! stores and reads it back contiguously. Outputs are bit-identical.

use super::{Result, TransposeStrategy};
use crate::vvm::{Addr, TraceSink, VectorMachine, VectorValue};

/// The four gather index vectors for one transpose width. Built with traced
/// scalar stores once per granted length and reused across calls.
#[derive(Debug, Clone)]
pub struct TransposeIndex {
    pub chunks: [VectorValue; 4],
    pub gvl: usize,
}

/// index[4j + k] = k * gvl + j, loaded back as four gvl-wide vectors.
pub fn build_transpose_index<S: TraceSink>(
    m: &mut VectorMachine<S>,
    gvl: usize,
    idxbuf: Addr,
) -> Result<TransposeIndex> {
    for p in 0..4 * gvl {
        let val = ((p % 4) * gvl + p / 4) as f32;
        let v = m.broadcast_scalar(val, 1);
        m.store_unit(&v, idxbuf + p as u64 * 4, 1)?;
    }
    let chunks = [
        m.load_unit(idxbuf, gvl)?,
        m.load_unit(idxbuf + (gvl * 4) as u64, gvl)?,
        m.load_unit(idxbuf + (2 * gvl * 4) as u64, gvl)?,
        m.load_unit(idxbuf + (3 * gvl * 4) as u64, gvl)?,
    ];
    Ok(TransposeIndex { chunks, gvl })
}

/// Interleave four vectors into `out` (4 * gvl fp32) so that
/// out[4j + k] = v_k[j]; returns the four transposed chunk vectors.
///
/// `scratch` must hold 4 * gvl fp32; it is only written by the gather
/// strategy. `index` is required for the gather strategy.
pub fn interleave4<S: TraceSink>(
    m: &mut VectorMachine<S>,
    v: [&VectorValue; 4],
    gvl: usize,
    strategy: TransposeStrategy,
    out: Addr,
    scratch: Addr,
    index: Option<&TransposeIndex>,
) -> Result<[VectorValue; 4]> {
    match strategy {
        TransposeStrategy::Strided => {
            for (k, vk) in v.iter().enumerate() {
                m.store_strided(vk, out + k as u64 * 4, 16, gvl)?;
            }
            Ok([
                m.load_unit(out, gvl)?,
                m.load_unit(out + (gvl * 4) as u64, gvl)?,
                m.load_unit(out + (2 * gvl * 4) as u64, gvl)?,
                m.load_unit(out + (3 * gvl * 4) as u64, gvl)?,
            ])
        }
        TransposeStrategy::Indexed => {
            let index = index.expect("gather transpose requires prebuilt index vectors");
            debug_assert_eq!(index.gvl, gvl);
            for (k, vk) in v.iter().enumerate() {
                m.store_unit(vk, scratch + (k * gvl) as u64 * 4, gvl)?;
            }
            let chunks = [
                m.load_indexed(scratch, &index.chunks[0], gvl)?,
                m.load_indexed(scratch, &index.chunks[1], gvl)?,
                m.load_indexed(scratch, &index.chunks[2], gvl)?,
                m.load_indexed(scratch, &index.chunks[3], gvl)?,
            ];
            for (mc, chunk) in chunks.iter().enumerate() {
                m.store_unit(chunk, out + (mc * gvl) as u64 * 4, gvl)?;
            }
            Ok(chunks)
        }
    }
}
