//! Transformed-domain tuple multiplication:
//! M[f][t][e] = sum_c U[f][c][e] * V[t][c][e].
//!
//! Per (tile, quad): the V quadword is replicated across all blocks once per
//! channel, multiply-accumulated against the unit-stride U vectors with one
//! persistent accumulator per output-channel group, and the results are
//! stored contiguously. Tail groups stripmine with a reduced grant. The two
//! replication strategies are bit-identical in results; only their
//! instruction mix differs.

use super::{MPack, ReplicateStrategy, Result, UPack, VPack, WinogradError};
use crate::vvm::{Addr, TraceSink, VectorMachine, VectorValue};

fn replicate_quad<S: TraceSink>(
    m: &mut VectorMachine<S>,
    quad_addr: Addr,
    gvl: usize,
    strategy: ReplicateStrategy,
    index: Option<&VectorValue>,
) -> Result<VectorValue> {
    match strategy {
        ReplicateStrategy::Indexed => {
            let idx = index.expect("indexed replication requires the i%4 index vector");
            Ok(m.load_indexed(quad_addr, idx, gvl)?)
        }
        ReplicateStrategy::Slide => {
            let mut v = m.load_unit(quad_addr, 4)?;
            let mut off = 4;
            while off < gvl {
                v = m.slide_up(&v.clone(), &v, off, gvl)?;
                off *= 2;
            }
            Ok(v)
        }
    }
}

pub fn tuple_multiply<S: TraceSink>(
    m: &mut VectorMachine<S>,
    vpack: &VPack,
    upack: &UPack,
    tiles: usize,
    strategy: ReplicateStrategy,
) -> Result<MPack> {
    let c = vpack.channels;
    if c == 0 {
        return Err(WinogradError::Shape("tuple multiplication requires C >= 1"));
    }
    if c != upack.channels {
        return Err(WinogradError::Shape("V and U channel counts differ"));
    }
    let blocks = upack.blocks;
    let f = upack.filters;
    let f_groups = upack.f_groups();
    let mpack = MPack {
        addr: m.alloc(MPack::len_floats(f, tiles, blocks)),
        filters: f,
        tiles,
        blocks,
    };
    // replication only needs to cover the widest filter group
    let full = 4 * blocks.min(f);

    // indexed replication uses index[i] = i mod 4, built once with scalar
    // stores and loaded per stripmine grant
    let index = match strategy {
        ReplicateStrategy::Indexed => {
            let idxbuf = m.alloc(full);
            for i in 0..full {
                let v = m.broadcast_scalar((i % 4) as f32, 1);
                m.store_unit(&v, idxbuf + i as u64 * 4, 1)?;
            }
            Some(m.load_unit(idxbuf, full)?)
        }
        ReplicateStrategy::Slide => None,
    };

    let group_gvl = |fg: usize| 4 * blocks.min(f - fg * blocks);
    let tail_gvl = group_gvl(f_groups - 1);

    // q outer, tiles inner: the U slice for one quad position stays cached
    // across tiles while U as a whole streams through only once
    for q in 0..16 {
        for t in 0..tiles {
            let gvl_full = m.set_vector_length(full);
            if tail_gvl != full {
                m.set_vector_length(tail_gvl);
            }
            let mut acc: Vec<VectorValue> =
                (0..f_groups).map(|fg| VectorValue::zero(group_gvl(fg))).collect();
            for ch in 0..c {
                let rep =
                    replicate_quad(m, vpack.quad_addr(t, q, ch), gvl_full, strategy, index.as_ref())?;
                for (fg, a) in acc.iter_mut().enumerate() {
                    let gvl = group_gvl(fg);
                    let u = m.load_unit(upack.row_addr(fg, q, ch), gvl)?;
                    *a = m.fma(a, &rep, &u, gvl);
                }
            }
            for (fg, a) in acc.iter().enumerate() {
                m.store_unit(a, mpack.row_addr(fg, t, q), group_gvl(fg))?;
            }
        }
    }
    Ok(mpack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::winograd::{build_winograd_matrices, filter_transform, input_transform, TileGrid, TransposeStrategy};
    use crate::vvm::{TraceBuffer, VectorMachine, VectorMachineConfig};
    use crate::ConvShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mk_machine(vlen: u32) -> VectorMachine<TraceBuffer> {
        VectorMachine::new(VectorMachineConfig::new(vlen).unwrap(), TraceBuffer::default())
    }

    /// Scalar oracle with the same channel-loop accumulation order and fp32
    /// fused multiply-adds as the kernel.
    fn scalar_tuple(
        u: &dyn Fn(usize, usize, usize) -> f32,
        v: &dyn Fn(usize, usize, usize) -> f32,
        f: usize,
        t: usize,
        c: usize,
    ) -> Vec<f32> {
        let mut out = vec![0.0f32; f * t * 64];
        for fi in 0..f {
            for ti in 0..t {
                for e in 0..64 {
                    let mut acc = 0.0f32;
                    for ci in 0..c {
                        acc = u(fi, ci, e).mul_add(v(ti, ci, e), acc);
                    }
                    out[(fi * t + ti) * 64 + e] = acc;
                }
            }
        }
        out
    }

    fn packs_from_random(
        m: &mut VectorMachine<TraceBuffer>,
        f: usize,
        c: usize,
        tiles: usize,
        seed: u64,
    ) -> (VPack, UPack, Vec<f32>, Vec<f32>) {
        let blocks = m.config().blocks();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vdata: Vec<f32> = (0..tiles * c * 64).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let udata: Vec<f32> = (0..f * c * 64).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let vpack = VPack { addr: m.alloc(VPack::len_floats(tiles, c)), tiles, channels: c };
        let upack =
            UPack { addr: m.alloc(UPack::len_floats(f, c, blocks)), filters: f, channels: c, blocks };
        for t in 0..tiles {
            for ci in 0..c {
                for e in 0..64 {
                    m.write_slice(
                        vpack.quad_addr(t, e / 4, ci) + (e % 4) as u64 * 4,
                        &[vdata[(t * c + ci) * 64 + e]],
                    );
                }
            }
        }
        for fi in 0..f {
            for ci in 0..c {
                for e in 0..64 {
                    m.write_slice(upack.element_addr(fi, ci, e), &[udata[(fi * c + ci) * 64 + e]]);
                }
            }
        }
        (vpack, upack, vdata, udata)
    }

    #[test]
    fn single_channel_is_plain_product() {
        let mut m = mk_machine(512);
        let (vp, up, vdata, udata) = packs_from_random(&mut m, 6, 1, 2, 1);
        let mp = tuple_multiply(&mut m, &vp, &up, 2, ReplicateStrategy::Slide).unwrap();
        for fi in 0..6 {
            for t in 0..2 {
                for e in 0..64 {
                    let expect = udata[fi * 64 + e] * vdata[t * 64 + e];
                    assert_eq!(mp.read_element(&m, fi, t, e), expect);
                }
            }
        }
    }

    #[test]
    fn all_ones_filters_sum_channels() {
        let mut m = mk_machine(512);
        let (f, c, tiles) = (4, 9, 3);
        let (vp, up, vdata, _) = packs_from_random(&mut m, f, c, tiles, 2);
        // overwrite U with ones
        for fi in 0..f {
            for ci in 0..c {
                for e in 0..64 {
                    m.write_slice(up.element_addr(fi, ci, e), &[1.0]);
                }
            }
        }
        let mp = tuple_multiply(&mut m, &vp, &up, tiles, ReplicateStrategy::Slide).unwrap();
        for t in 0..tiles {
            for e in 0..64 {
                let mut expect = 0.0f32;
                for ci in 0..c {
                    expect = 1.0f32.mul_add(vdata[(t * c + ci) * 64 + e], expect);
                }
                for fi in 0..f {
                    assert_eq!(mp.read_element(&m, fi, t, e), expect);
                }
            }
        }
    }

    #[test]
    fn strategies_match_scalar_oracle_bitwise() {
        for vlen in [128u32, 512, 2048, 8192] {
            let (f, c, tiles) = (8, 8, 4);
            let mut results = Vec::new();
            for strategy in [ReplicateStrategy::Indexed, ReplicateStrategy::Slide] {
                let mut m = mk_machine(vlen);
                let (vp, up, vdata, udata) = packs_from_random(&mut m, f, c, tiles, 3);
                let mp = tuple_multiply(&mut m, &vp, &up, tiles, strategy).unwrap();
                let mut got = vec![0.0f32; f * tiles * 64];
                for fi in 0..f {
                    for t in 0..tiles {
                        for e in 0..64 {
                            got[(fi * tiles + t) * 64 + e] = mp.read_element(&m, fi, t, e);
                        }
                    }
                }
                let expect = scalar_tuple(
                    &|fi, ci, e| udata[(fi * c + ci) * 64 + e],
                    &|t, ci, e| vdata[(t * c + ci) * 64 + e],
                    f,
                    tiles,
                    c,
                );
                assert_eq!(got, expect, "vlen {vlen} {strategy:?} vs oracle");
                results.push(got);
            }
            assert_eq!(results[0], results[1], "vlen {vlen} strategies diverge");
        }
    }

    #[test]
    fn zero_channels_is_an_error() {
        let mut m = mk_machine(512);
        let blocks = m.config().blocks();
        let vp = VPack { addr: m.alloc(64), tiles: 1, channels: 0 };
        let up = UPack { addr: m.alloc(256), filters: 1, channels: 0, blocks };
        assert!(tuple_multiply(&mut m, &vp, &up, 1, ReplicateStrategy::Slide).is_err());
    }

    #[test]
    fn tail_filter_group_uses_reduced_grant() {
        // F = 6 with blocks = 4 at vlen 512: one full group + tail of 2
        let mut m = mk_machine(512);
        let (f, c, tiles) = (6, 3, 1);
        let (vp, up, vdata, udata) = packs_from_random(&mut m, f, c, tiles, 5);
        let mp = tuple_multiply(&mut m, &vp, &up, tiles, ReplicateStrategy::Slide).unwrap();
        let expect = scalar_tuple(
            &|fi, ci, e| udata[(fi * c + ci) * 64 + e],
            &|t, ci, e| vdata[(t * c + ci) * 64 + e],
            f,
            tiles,
            c,
        );
        for fi in 0..f {
            for e in 0..64 {
                assert_eq!(mp.read_element(&m, fi, 0, e), expect[fi * 64 + e]);
            }
        }
    }

    #[test]
    fn pipeline_packs_feed_tuple() {
        // exercised against transform-produced packs rather than synthetic
        let mut m = mk_machine(1024);
        let mats = build_winograd_matrices();
        let shape = ConvShape {
            in_channels: 5,
            in_h: 8,
            in_w: 8,
            filters: 3,
            kernel: 3,
            stride: 1,
            pad: 0,
        };
        let grid = TileGrid::new(shape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input: Vec<f32> =
            (0..shape.input_len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let filters: Vec<f32> =
            (0..shape.filters_len()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let ia = m.alloc(shape.input_len());
        m.write_slice(ia, &input);
        let fa = m.alloc(shape.filters_len());
        m.write_slice(fa, &filters);
        let up = filter_transform(&mut m, &mats, fa, 3, 5).unwrap();
        let vp = input_transform(&mut m, &mats, ia, &grid, TransposeStrategy::Strided).unwrap();
        let mp = tuple_multiply(&mut m, &vp, &up, 1, ReplicateStrategy::Slide).unwrap();
        // M must equal the elementwise product summed over channels of the
        // unpacked transform tensors, in the same order
        let u_of = |fi: usize, ci: usize, e: usize| up.read_element(&m, fi, ci, e);
        let v_of = |t: usize, ci: usize, e: usize| vp.read_element(&m, t, ci, e);
        let expect = scalar_tuple(&u_of, &v_of, 3, 1, 5);
        for fi in 0..3 {
            for e in 0..64 {
                assert_eq!(mp.read_element(&m, fi, 0, e), expect[fi * 64 + e]);
            }
        }
    }
}
