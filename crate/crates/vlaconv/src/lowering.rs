//! The im2col + GEMM convolution path and the fp64 direct-convolution
//! oracle used as ground truth by every equivalence test.

use crate::vvm::{Addr, Result, TraceSink, VectorMachine, VectorValue};
use crate::ConvShape;

/// Column matrix produced by im2col: rows = C*k*k, cols = H_out*W_out,
/// row-major in simulated memory.
#[derive(Debug, Clone, Copy)]
pub struct ColMatrix {
    pub addr: Addr,
    pub rows: usize,
    pub cols: usize,
}

/// Copy a C x H x W tensor into a zero-padded C x (H+2p+extra) x (W+2p+extra)
/// tensor. `extra` rows/cols of zeros beyond the nominal padding keep edge
/// tile windows in bounds for the tile-based kernels.
pub fn padded_copy<S: TraceSink>(
    m: &mut VectorMachine<S>,
    input: Addr,
    c: usize,
    h: usize,
    w: usize,
    pad: usize,
    extra_h: usize,
    extra_w: usize,
) -> Result<(Addr, usize, usize)> {
    let ph = h + 2 * pad + extra_h;
    let pw = w + 2 * pad + extra_w;
    let out = m.alloc(c * ph * pw);
    // zero fill
    let total = c * ph * pw;
    let mut i = 0;
    while i < total {
        let gvl = m.set_vector_length(total - i);
        let z = m.broadcast_scalar(0.0, gvl);
        m.store_unit(&z, out + (i as u64) * 4, gvl)?;
        i += gvl;
    }
    // copy interior rows
    for ch in 0..c {
        for row in 0..h {
            let src = input + ((ch * h + row) * w) as u64 * 4;
            let dst = out + ((ch * ph + row + pad) * pw + pad) as u64 * 4;
            let mut x = 0;
            while x < w {
                let gvl = m.set_vector_length(w - x);
                let v = m.load_unit(src + x as u64 * 4, gvl)?;
                m.store_unit(&v, dst + x as u64 * 4, gvl)?;
                x += gvl;
            }
        }
    }
    Ok((out, ph, pw))
}

/// Build the column matrix. Unit-stride loads along x when stride is 1,
/// strided loads otherwise.
pub fn im2col<S: TraceSink>(
    m: &mut VectorMachine<S>,
    input: Addr,
    shape: &ConvShape,
) -> Result<ColMatrix> {
    let (c, k, stride, pad) = (shape.in_channels, shape.kernel, shape.stride, shape.pad);
    let (h_out, w_out) = (shape.out_h(), shape.out_w());
    let (padded, _ph, pw) = padded_copy(m, input, c, shape.in_h, shape.in_w, pad, 0, 0)?;
    let rows = c * k * k;
    let cols = h_out * w_out;
    let out = m.alloc(rows * cols);
    for ch in 0..c {
        for di in 0..k {
            for dj in 0..k {
                let row_idx = ch * k * k + di * k + dj;
                for y in 0..h_out {
                    let src_row = y * stride + di;
                    let src = padded + ((ch * _ph + src_row) * pw + dj) as u64 * 4;
                    let dst = out + (row_idx * cols + y * w_out) as u64 * 4;
                    let mut x = 0;
                    while x < w_out {
                        let gvl = m.set_vector_length(w_out - x);
                        let v = if stride == 1 {
                            m.load_unit(src + x as u64 * 4, gvl)?
                        } else {
                            m.load_strided(
                                src + (x * stride) as u64 * 4,
                                stride as i64 * 4,
                                gvl,
                            )?
                        };
                        m.store_unit(&v, dst + x as u64 * 4, gvl)?;
                        x += gvl;
                    }
                }
            }
        }
    }
    Ok(ColMatrix { addr: out, rows, cols })
}

/// C = A * B for row-major A (f x k) and B (k x n), vectorized along n with
/// single-level register blocking along N: per column strip, each B row is
/// loaded unit-stride once and folded into every output row's accumulator
/// with a broadcast A element; accumulation runs in k-loop order. The
/// machine does not model register-file pressure, so the full set of output
/// accumulators stays register-resident.
pub fn gemm<S: TraceSink>(
    m: &mut VectorMachine<S>,
    a: Addr,
    f: usize,
    k: usize,
    b: Addr,
    n: usize,
    out: Addr,
) -> Result<()> {
    let mut n0 = 0;
    while n0 < n {
        let gvl = m.set_vector_length(n - n0);
        let mut acc: Vec<VectorValue> = (0..f).map(|_| VectorValue::zero(gvl)).collect();
        for ki in 0..k {
            let b_row = m.load_unit(b + (ki * n + n0) as u64 * 4, gvl)?;
            for (fi, ac) in acc.iter_mut().enumerate() {
                let a_val = m.load_scalar(a + (fi * k + ki) as u64 * 4)?;
                let a_vec = m.broadcast_scalar(a_val, gvl);
                *ac = m.fma(ac, &a_vec, &b_row, gvl);
            }
        }
        for (fi, ac) in acc.iter().enumerate() {
            m.store_unit(ac, out + (fi * n + n0) as u64 * 4, gvl)?;
        }
        n0 += gvl;
    }
    Ok(())
}

/// Full im2col + GEMM convolution into `out` (preallocated, F x H_out x
/// W_out). Filters are stored F x C x k x k, which is already the row-major
/// F x (C*k*k) operand the GEMM needs.
pub fn conv_im2col_gemm<S: TraceSink>(
    m: &mut VectorMachine<S>,
    input: Addr,
    filters: Addr,
    shape: &ConvShape,
    out: Addr,
) -> Result<()> {
    let col = im2col(m, input, shape)?;
    gemm(m, filters, shape.filters, col.rows, col.addr, col.cols, out)?;
    Ok(())
}

/// Naive 7-loop cross-correlation in fp64 on host data; the ground truth.
pub fn direct_conv_oracle(input: &[f32], filters: &[f32], shape: &ConvShape) -> Vec<f64> {
    let (c, h, w) = (shape.in_channels, shape.in_h, shape.in_w);
    let (f, k, stride, pad) = (shape.filters, shape.kernel, shape.stride, shape.pad);
    let (h_out, w_out) = (shape.out_h(), shape.out_w());
    let mut out = vec![0.0f64; f * h_out * w_out];
    for fi in 0..f {
        for y in 0..h_out {
            for x in 0..w_out {
                let mut acc = 0.0f64;
                for ch in 0..c {
                    for dy in 0..k {
                        for dx in 0..k {
                            let iy = (y * stride + dy) as isize - pad as isize;
                            let ix = (x * stride + dx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let iv = input[(ch * h + iy as usize) * w + ix as usize] as f64;
                            let fv =
                                filters[((fi * c + ch) * k + dy) * k + dx] as f64;
                            acc += iv * fv;
                        }
                    }
                }
                out[(fi * h_out + y) * w_out + x] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peak_relative_error;
    use crate::vvm::{TraceBuffer, VectorMachineConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mk_machine(vlen: u32) -> VectorMachine<TraceBuffer> {
        VectorMachine::new(VectorMachineConfig::new(vlen).unwrap(), TraceBuffer::default())
    }

    fn fill_random(m: &mut VectorMachine<TraceBuffer>, addr: Addr, len: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.write_slice(addr, &data);
        data
    }

    #[test]
    fn im2col_1x1_is_a_copy() {
        let mut m = mk_machine(512);
        let shape = ConvShape {
            in_channels: 2,
            in_h: 3,
            in_w: 4,
            filters: 1,
            kernel: 1,
            stride: 1,
            pad: 0,
        };
        let input = m.alloc(shape.input_len());
        let data = fill_random(&mut m, input, shape.input_len(), 1);
        let col = im2col(&mut m, input, &shape).unwrap();
        assert_eq!((col.rows, col.cols), (2, 12));
        assert_eq!(m.read_slice(col.addr, 24), &data[..]);
    }

    #[test]
    fn im2col_center_pixel_column() {
        // 3x3 kernel, stride 1, pad 1 on a 1x3x3 input of 1..9: the column
        // for the center output pixel is 1..9.
        let mut m = mk_machine(512);
        let shape = ConvShape {
            in_channels: 1,
            in_h: 3,
            in_w: 3,
            filters: 1,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let input = m.alloc(9);
        m.write_slice(input, &(1..=9).map(|v| v as f32).collect::<Vec<_>>());
        let col = im2col(&mut m, input, &shape).unwrap();
        // center pixel is output (1,1) -> column index 4 of 9
        let center: Vec<f32> = (0..9).map(|r| m.read_word(col.addr + (r * 9 + 4) * 4)).collect();
        assert_eq!(center, (1..=9).map(|v| v as f32).collect::<Vec<_>>());
    }

    #[test]
    fn im2col_zero_input_zero_matrix() {
        let mut m = mk_machine(512);
        let shape = ConvShape {
            in_channels: 3,
            in_h: 6,
            in_w: 5,
            filters: 1,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let input = m.alloc(shape.input_len());
        let col = im2col(&mut m, input, &shape).unwrap();
        assert!(m.read_slice(col.addr, col.rows * col.cols).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gemm_identity_is_bitexact() {
        let mut m = mk_machine(512);
        let k = 8;
        let n = 24;
        let a = m.alloc(k * k);
        for i in 0..k {
            m.write_slice(a + (i * k + i) as u64 * 4, &[1.0]);
        }
        let b = m.alloc(k * n);
        let data = fill_random(&mut m, b, k * n, 7);
        let out = m.alloc(k * n);
        gemm(&mut m, a, k, k, b, n, out).unwrap();
        assert_eq!(m.read_slice(out, k * n), &data[..]);
    }

    #[test]
    fn gemm_2x2_hand_value() {
        let mut m = mk_machine(512);
        let a = m.alloc(4);
        m.write_slice(a, &[1.0, 2.0, 3.0, 4.0]);
        let b = m.alloc(4);
        m.write_slice(b, &[5.0, 6.0, 7.0, 8.0]);
        let out = m.alloc(4);
        gemm(&mut m, a, 2, 2, b, 2, out).unwrap();
        assert_eq!(m.read_slice(out, 4), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn gemm_matches_fp64_triple_loop() {
        let mut m = mk_machine(512);
        let (f, k, n) = (8, 16, 32);
        let a = m.alloc(f * k);
        let b = m.alloc(k * n);
        let av = fill_random(&mut m, a, f * k, 11);
        let bv = fill_random(&mut m, b, k * n, 12);
        let out = m.alloc(f * n);
        gemm(&mut m, a, f, k, b, n, out).unwrap();
        let mut expect = vec![0.0f64; f * n];
        for fi in 0..f {
            for ki in 0..k {
                for ni in 0..n {
                    expect[fi * n + ni] += av[fi * k + ki] as f64 * bv[ki * n + ni] as f64;
                }
            }
        }
        let err = peak_relative_error(m.read_slice(out, f * n), &expect);
        assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn gemm_flops_exact() {
        let mut m = mk_machine(512);
        let (f, k, n) = (4, 8, 40);
        let a = m.alloc(f * k);
        let b = m.alloc(k * n);
        let out = m.alloc(f * n);
        gemm(&mut m, a, f, k, b, n, out).unwrap();
        let flops: u64 = m.into_sink().records.iter().map(|r| r.flops as u64).sum();
        assert_eq!(flops, (2 * f * k * n) as u64);
    }

    #[test]
    fn conv_1x1_identity_mixes_channels() {
        let mut m = mk_machine(512);
        let shape = ConvShape {
            in_channels: 3,
            in_h: 4,
            in_w: 4,
            filters: 3,
            kernel: 1,
            stride: 1,
            pad: 0,
        };
        let input = m.alloc(shape.input_len());
        let data = fill_random(&mut m, input, shape.input_len(), 3);
        let filters = m.alloc(shape.filters_len());
        for i in 0..3 {
            m.write_slice(filters + (i * 3 + i) as u64 * 4, &[1.0]);
        }
        let out = m.alloc(shape.output_len());
        conv_im2col_gemm(&mut m, input, filters, &shape, out).unwrap();
        assert_eq!(m.read_slice(out, shape.output_len()), &data[..]);
    }

    #[test]
    fn conv_matches_oracle_stride_1_and_2() {
        for (stride, tol) in [(1usize, 1e-4f64), (2, 1e-4)] {
            let mut m = mk_machine(1024);
            let shape = ConvShape {
                in_channels: 5,
                in_h: 11,
                in_w: 9,
                filters: 4,
                kernel: 3,
                stride,
                pad: 1,
            };
            let input = m.alloc(shape.input_len());
            let iv = fill_random(&mut m, input, shape.input_len(), 21);
            let filters = m.alloc(shape.filters_len());
            let fv = fill_random(&mut m, filters, shape.filters_len(), 22);
            let out = m.alloc(shape.output_len());
            conv_im2col_gemm(&mut m, input, filters, &shape, out).unwrap();
            let oracle = direct_conv_oracle(&iv, &fv, &shape);
            let err = peak_relative_error(m.read_slice(out, shape.output_len()), &oracle);
            assert!(err < tol, "stride {stride} err {err}");
        }
    }

    #[test]
    fn oracle_basics() {
        let shape = ConvShape {
            in_channels: 1,
            in_h: 5,
            in_w: 5,
            filters: 1,
            kernel: 3,
            stride: 1,
            pad: 0,
        };
        let zero = vec![0.0f32; shape.input_len()];
        let filt = vec![0.5f32; 9];
        assert!(direct_conv_oracle(&zero, &filt, &shape).iter().all(|&v| v == 0.0));

        // center-impulse filter crops the interior
        let input: Vec<f32> = (0..25).map(|v| v as f32).collect();
        let mut imp = vec![0.0f32; 9];
        imp[4] = 1.0;
        let out = direct_conv_oracle(&input, &imp, &shape);
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(out[y * 3 + x], input[(y + 1) * 5 + (x + 1)] as f64);
            }
        }

        // linearity under input scaling
        let scaled: Vec<f32> = input.iter().map(|v| v * 2.0).collect();
        let a = direct_conv_oracle(&input, &filt, &shape);
        let b = direct_conv_oracle(&scaled, &filt, &shape);
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }
}
