//! The three transform stages, each built from the 1-D transform applied
//! along rows and then columns with lane = one (tile, channel) or
//! (filter, channel) entity.
//!
//! Input transform: entities are channels of one tile. Pass 1 combines tile
//! rows lanewise; interleave4 reorients the intermediate into per-entity
//! column quads; pass 2 reads them back with 16-byte-stride loads and packs
//! V quads with a second round of interleave4 straight into the V tensor.
//!
//! Filter transform: entities are filters at a fixed channel. The 8x3
//! intermediate is staged position-major (three columns never need a
//! four-vector transpose) and the packed layout is written with strided
//! stores.
//!
//! Output transform: entities are filters; results land in the output
//! tensor through plane-strided stores with edge-tile cropping.

use super::interleave::{build_transpose_index, interleave4};
use super::{MPack, Result, TileGrid, TransposeStrategy, UPack, VPack, WinogradMatrices};
use crate::lowering::padded_copy;
use crate::vvm::{Addr, TraceSink, VectorMachine, VectorValue};

/// out[i] = sum_r coeffs[i][r] * inputs[r], lanewise. A leading unit
/// coefficient is a register alias; other leading terms are a scalar
/// multiply; subsequent terms fold in as adds, subtracts, or scalar fmas.
fn apply_1d<S: TraceSink, const OUT: usize, const IN: usize>(
    m: &mut VectorMachine<S>,
    coeffs: &[[f32; IN]; OUT],
    inputs: &[VectorValue],
    gvl: usize,
) -> Vec<VectorValue> {
    debug_assert_eq!(inputs.len(), IN);
    let mut outs = Vec::with_capacity(OUT);
    for row in coeffs {
        let mut acc: Option<VectorValue> = None;
        for (r, &c) in row.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            acc = Some(match acc {
                None if c == 1.0 => inputs[r].clone(),
                None => m.scale_by_scalar(&inputs[r], c, gvl),
                Some(a) if c == 1.0 => m.add(&a, &inputs[r], gvl),
                Some(a) if c == -1.0 => m.sub(&a, &inputs[r], gvl),
                Some(a) => m.fma_scalar(&a, c, &inputs[r], gvl),
            });
        }
        outs.push(acc.unwrap_or_else(|| VectorValue::zero(gvl)));
    }
    outs
}

fn bt_coeffs(mats: &WinogradMatrices) -> [[f32; 8]; 8] {
    let mut bt = [[0.0f32; 8]; 8];
    for i in 0..8 {
        for r in 0..8 {
            bt[i][r] = mats.b_f32[r][i];
        }
    }
    bt
}

fn at_coeffs(mats: &WinogradMatrices) -> [[f32; 8]; 6] {
    let mut at = [[0.0f32; 8]; 6];
    for i in 0..6 {
        for r in 0..8 {
            at[i][r] = mats.a_f32[r][i];
        }
    }
    at
}

/// V[t][c] = B^T d B over all tiles, packed per the V layout.
pub fn input_transform<S: TraceSink>(
    m: &mut VectorMachine<S>,
    mats: &WinogradMatrices,
    input: Addr,
    grid: &TileGrid,
    strategy: TransposeStrategy,
) -> Result<VPack> {
    let shape = &grid.shape;
    let (c, h, w, pad) = (shape.in_channels, shape.in_h, shape.in_w, shape.pad);
    let tiles = grid.tiles();
    let vlmax = m.vlmax();
    let bt = bt_coeffs(mats);

    // pad out to the tile cover so every 8x8 window is in bounds
    let cover_h = grid.tiles_y * 6 + 2;
    let cover_w = grid.tiles_x * 6 + 2;
    let (padded, ph, pw) =
        padded_copy(m, input, c, h, w, pad, cover_h - (h + 2 * pad), cover_w - (w + 2 * pad))?;
    let plane_stride = (ph * pw * 4) as i64;

    let vpack = VPack { addr: m.alloc(VPack::len_floats(tiles, c)), tiles, channels: c };
    // intermediate regions (g, j): per-entity column quads of rows 4g..4g+4
    let zq = m.alloc(16 * 4 * vlmax);
    let zq_region = |g: usize, j: usize| zq + ((j * 2 + g) * 4 * vlmax) as u64 * 4;
    let scratch = m.alloc(4 * vlmax);
    let idxbuf = m.alloc(4 * vlmax);

    let mut c0 = 0;
    while c0 < c {
        let e = (c - c0).min(vlmax);
        let gvl = m.set_vector_length(e);
        let index = match strategy {
            TransposeStrategy::Indexed => Some(build_transpose_index(m, gvl, idxbuf)?),
            TransposeStrategy::Strided => None,
        };
        for t in 0..tiles {
            let (ty, tx) = grid.tile_coords(t);
            let base = padded + ((c0 * ph + ty * 6) * pw + tx * 6) as u64 * 4;
            // pass 1: vertical 8-point transform, one tile column at a time
            for j in 0..8 {
                let mut d = Vec::with_capacity(8);
                for r in 0..8 {
                    d.push(m.load_strided(base + (r * pw + j) as u64 * 4, plane_stride, gvl)?);
                }
                let z = apply_1d(m, &bt, &d, gvl);
                interleave4(
                    m,
                    [&z[0], &z[1], &z[2], &z[3]],
                    gvl,
                    strategy,
                    zq_region(0, j),
                    scratch,
                    index.as_ref(),
                )?;
                interleave4(
                    m,
                    [&z[4], &z[5], &z[6], &z[7]],
                    gvl,
                    strategy,
                    zq_region(1, j),
                    scratch,
                    index.as_ref(),
                )?;
            }
            // pass 2: horizontal transform over the reoriented intermediate
            for i in 0..8 {
                let mut row = Vec::with_capacity(8);
                for cc in 0..8 {
                    row.push(m.load_strided(
                        zq_region(i / 4, cc) + (i % 4) as u64 * 4,
                        16,
                        gvl,
                    )?);
                }
                let o = apply_1d(m, &bt, &row, gvl);
                // quads 2i and 2i+1 pack straight into the V tensor
                interleave4(
                    m,
                    [&o[0], &o[1], &o[2], &o[3]],
                    gvl,
                    strategy,
                    vpack.quad_addr(t, 2 * i, c0),
                    scratch,
                    index.as_ref(),
                )?;
                interleave4(
                    m,
                    [&o[4], &o[5], &o[6], &o[7]],
                    gvl,
                    strategy,
                    vpack.quad_addr(t, 2 * i + 1, c0),
                    scratch,
                    index.as_ref(),
                )?;
            }
        }
        c0 += e;
    }
    Ok(vpack)
}

/// U[f][c] = G g G^T over the filter bank, packed per the U layout.
pub fn filter_transform<S: TraceSink>(
    m: &mut VectorMachine<S>,
    mats: &WinogradMatrices,
    filters: Addr,
    f: usize,
    c: usize,
) -> Result<UPack> {
    let vlmax = m.vlmax();
    let blocks = m.config().blocks();
    let upack = UPack {
        addr: m.alloc(UPack::len_floats(f, c, blocks)),
        filters: f,
        channels: c,
        blocks,
    };
    let g = mats.g_f32;
    // position-major staging for the 8x3 intermediate
    let zf = m.alloc(24 * vlmax);
    let zf_plane = |i: usize, j: usize| zf + ((i * 3 + j) * vlmax) as u64 * 4;
    let filter_stride = (c * 9 * 4) as i64;

    let mut f0 = 0;
    while f0 < f {
        let e = (f - f0).min(vlmax);
        let gvl = m.set_vector_length(e);
        for ch in 0..c {
            // pass 1: combine the three filter rows per column
            for j in 0..3 {
                let mut d = Vec::with_capacity(3);
                for r in 0..3 {
                    let base = filters + ((f0 * c + ch) * 9 + r * 3 + j) as u64 * 4;
                    d.push(m.load_strided(base, filter_stride, gvl)?);
                }
                let z = apply_1d(m, &g, &d, gvl);
                for (i, zi) in z.iter().enumerate() {
                    m.store_unit(zi, zf_plane(i, j), gvl)?;
                }
            }
            // pass 2: combine intermediate columns, pack with strided stores
            for i in 0..8 {
                let mut row = Vec::with_capacity(3);
                for cc in 0..3 {
                    row.push(m.load_unit(zf_plane(i, cc), gvl)?);
                }
                let o = apply_1d(m, &g, &row, gvl);
                for (jo, oj) in o.iter().enumerate() {
                    let e_idx = 8 * i + jo;
                    m.store_strided(oj, upack.element_addr(f0, ch, e_idx), 16, gvl)?;
                }
            }
        }
        f0 += e;
    }
    Ok(upack)
}

/// Y[f][t] = A^T M A with edge-tile cropping into the output tensor.
pub fn output_transform<S: TraceSink>(
    m: &mut VectorMachine<S>,
    mats: &WinogradMatrices,
    mpack: &MPack,
    grid: &TileGrid,
    out: Addr,
) -> Result<()> {
    let shape = &grid.shape;
    let (f, h_out, w_out) = (shape.filters, shape.out_h(), shape.out_w());
    debug_assert_eq!(mpack.filters, f);
    let vlmax = m.vlmax();
    let at = at_coeffs(mats);
    let yb = m.alloc(48 * vlmax);
    let yb_plane = |i: usize, j: usize| yb + ((i * 8 + j) * vlmax) as u64 * 4;
    let out_plane_stride = (h_out * w_out * 4) as i64;

    let mut f0 = 0;
    while f0 < f {
        let e = (f - f0).min(vlmax);
        let gvl = m.set_vector_length(e);
        for t in 0..mpack.tiles {
            let (ty, tx) = grid.tile_coords(t);
            // pass 1: vertical 6-of-8 combination per tile column
            for j in 0..8 {
                let mut col = Vec::with_capacity(8);
                for r in 0..8 {
                    col.push(m.load_strided(mpack.element_addr(f0, t, 8 * r + j), 16, gvl)?);
                }
                let y = apply_1d(m, &at, &col, gvl);
                for (i, yi) in y.iter().enumerate() {
                    m.store_unit(yi, yb_plane(i, j), gvl)?;
                }
            }
            // pass 2: horizontal combination, cropped plane-strided stores
            for i in 0..6 {
                let y = ty * 6 + i;
                if y >= h_out {
                    continue;
                }
                let mut row = Vec::with_capacity(8);
                for cc in 0..8 {
                    row.push(m.load_unit(yb_plane(i, cc), gvl)?);
                }
                let o = apply_1d(m, &at, &row, gvl);
                for (jo, oj) in o.iter().enumerate() {
                    let x = tx * 6 + jo;
                    if x >= w_out {
                        continue;
                    }
                    let dst = out + ((f0 * h_out + y) * w_out + x) as u64 * 4;
                    m.store_strided(oj, dst, out_plane_stride, gvl)?;
                }
            }
        }
        f0 += e;
    }
    Ok(())
}
