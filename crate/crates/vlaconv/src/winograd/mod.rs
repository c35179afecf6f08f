//! Winograd F(6x6, 3x3) convolution vectorized in a vector-length-agnostic
//! way: 8x8 input tiles against 3x3 filters produce 6x6 output tiles via the
//! B/G/A transforms, with the transformed-domain tuple multiplication packed
//! so that one vector spans `blocks = vlmax/4` quadword blocks.
//!
//! Two selectable strategy axes mirror the kernels' interesting choices:
//! quadword replication by indexed load vs slide-up doubling, and vector
//! transposition by gather vs strided store. Both members of each pair are
//! bit-identical in results; only their instruction mix differs.

pub mod interleave;
pub mod matrices;
pub mod transforms;
pub mod tuple;

pub use interleave::{build_transpose_index, interleave4, TransposeIndex};
pub use matrices::{build_winograd_matrices, direct_tile_correlation, WinogradMatrices};
pub use transforms::{filter_transform, input_transform, output_transform};
pub use tuple::tuple_multiply;

use crate::vvm::{Addr, TraceSink, VectorMachine, VvmError};
use crate::ConvShape;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WinogradError {
    #[error("layer not eligible for winograd: {0}")]
    Dispatch(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error(transparent)]
    Vvm(#[from] VvmError),
}

pub type Result<T> = std::result::Result<T, WinogradError>;

/// Quadword replication strategy for the tuple-multiplication kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplicateStrategy {
    /// One indexed load with index[i] = i mod 4 per quadword.
    Indexed,
    /// One quad load plus slide-up instructions with doubling offsets.
    #[default]
    Slide,
}

/// Four-vector transpose strategy used by the transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransposeStrategy {
    /// Unit-stride stores to scratch, then indexed (gather) loads.
    Indexed,
    /// Strided stores that interleave in place, then unit-stride loads.
    #[default]
    Strided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StrategyConfig {
    pub replicate: ReplicateStrategy,
    pub transpose: TransposeStrategy,
}

/// Tile decomposition of one layer: 6x6 output tiles from 8x8 input windows
/// advancing by 6, zero-padded at the borders and cropped on output.
#[derive(Debug, Clone, Copy)]
pub struct TileGrid {
    pub shape: ConvShape,
    pub tiles_y: usize,
    pub tiles_x: usize,
}

impl TileGrid {
    pub fn new(shape: ConvShape) -> Result<Self> {
        if shape.kernel != 3 || shape.stride != 1 {
            return Err(WinogradError::Dispatch("requires 3x3 kernel with stride 1"));
        }
        let tiles_y = shape.out_h().div_ceil(6);
        let tiles_x = shape.out_w().div_ceil(6);
        Ok(Self { shape, tiles_y, tiles_x })
    }

    pub fn tiles(&self) -> usize {
        self.tiles_y * self.tiles_x
    }

    pub fn tile_coords(&self, t: usize) -> (usize, usize) {
        (t / self.tiles_x, t % self.tiles_x)
    }
}

/// Transformed input, packed for the tuple kernel. The quadword for
/// (tile, channel, quad) is contiguous; one vector at (t, q) spans
/// consecutive channels x 4 elements.
#[derive(Debug, Clone, Copy)]
pub struct VPack {
    pub addr: Addr,
    pub tiles: usize,
    pub channels: usize,
}

impl VPack {
    pub fn len_floats(tiles: usize, channels: usize) -> usize {
        tiles * 16 * channels * 4
    }

    /// Address of the 4-element quad (t, q, c).
    pub fn quad_addr(&self, t: usize, q: usize, c: usize) -> Addr {
        self.addr + (((t * 16 + q) * self.channels + c) * 4) as u64 * 4
    }

    /// Host-side unpack of element e (0..64, row-major 8x8) for tests.
    pub fn read_element<S: TraceSink>(
        &self,
        m: &VectorMachine<S>,
        t: usize,
        c: usize,
        e: usize,
    ) -> f32 {
        m.read_word(self.quad_addr(t, e / 4, c) + (e % 4) as u64 * 4)
    }
}

/// Transformed filters, packed so one unit-stride load at (f_group, q, c)
/// yields lane (f_rel, s) = U[f_base + f_rel][c][4q + s].
#[derive(Debug, Clone, Copy)]
pub struct UPack {
    pub addr: Addr,
    pub filters: usize,
    pub channels: usize,
    pub blocks: usize,
}

impl UPack {
    pub fn f_groups(&self) -> usize {
        self.filters.div_ceil(self.blocks)
    }

    pub fn f_padded(&self) -> usize {
        self.f_groups() * self.blocks
    }

    pub fn len_floats(filters: usize, channels: usize, blocks: usize) -> usize {
        let fpad = filters.div_ceil(blocks) * blocks;
        16 * channels * fpad * 4
    }

    /// Address of the vector row (f_group, q, c).
    pub fn row_addr(&self, fg: usize, q: usize, c: usize) -> Addr {
        let fpad = self.f_padded();
        self.addr + (((q * self.channels + c) * fpad + fg * self.blocks) * 4) as u64 * 4
    }

    /// Address of element (f, c, e) for packing and host unpacking.
    pub fn element_addr(&self, f: usize, c: usize, e: usize) -> Addr {
        let fpad = self.f_padded();
        self.addr + ((((e / 4) * self.channels + c) * fpad + f) * 4 + e % 4) as u64 * 4
    }

    pub fn read_element<S: TraceSink>(
        &self,
        m: &VectorMachine<S>,
        f: usize,
        c: usize,
        e: usize,
    ) -> f32 {
        m.read_word(self.element_addr(f, c, e))
    }
}

/// Product domain, same lane shape as UPack rows: the vector at
/// (f_group, t, q) holds lane (f_rel, s) = M[f_base + f_rel][t][4q + s].
#[derive(Debug, Clone, Copy)]
pub struct MPack {
    pub addr: Addr,
    pub filters: usize,
    pub tiles: usize,
    pub blocks: usize,
}

impl MPack {
    pub fn f_groups(&self) -> usize {
        self.filters.div_ceil(self.blocks)
    }

    pub fn f_padded(&self) -> usize {
        self.f_groups() * self.blocks
    }

    pub fn len_floats(filters: usize, tiles: usize, blocks: usize) -> usize {
        let fpad = filters.div_ceil(blocks) * blocks;
        tiles * 16 * fpad * 4
    }

    pub fn row_addr(&self, fg: usize, t: usize, q: usize) -> Addr {
        let fpad = self.f_padded();
        self.addr + (((t * 16 + q) * fpad + fg * self.blocks) * 4) as u64 * 4
    }

    pub fn element_addr(&self, f: usize, t: usize, e: usize) -> Addr {
        let fpad = self.f_padded();
        self.addr + (((t * 16 + e / 4) * fpad + f) * 4 + e % 4) as u64 * 4
    }

    pub fn read_element<S: TraceSink>(
        &self,
        m: &VectorMachine<S>,
        f: usize,
        t: usize,
        e: usize,
    ) -> f32 {
        m.read_word(self.element_addr(f, t, e))
    }
}

/// Full pipeline: filter transform, input transform, tuple multiplication,
/// output transform into `out` (F x H_out x W_out, preallocated).
///
/// Dispatch preconditions are enforced here and never silently relaxed.
pub fn conv_winograd<S: TraceSink>(
    m: &mut VectorMachine<S>,
    mats: &WinogradMatrices,
    input: Addr,
    filters: Addr,
    shape: &ConvShape,
    strategy: StrategyConfig,
    out: Addr,
) -> Result<()> {
    if shape.kernel != 3 || shape.stride != 1 {
        return Err(WinogradError::Dispatch("requires 3x3 kernel with stride 1"));
    }
    if shape.in_channels < 4 {
        return Err(WinogradError::Dispatch("requires at least 4 input channels"));
    }
    let grid = TileGrid::new(*shape)?;
    let upack = filter_transform(m, mats, filters, shape.filters, shape.in_channels)?;
    let vpack = input_transform(m, mats, input, &grid, strategy.transpose)?;
    let mpack = tuple_multiply(m, &vpack, &upack, grid.tiles(), strategy.replicate)?;
    output_transform(m, mats, &mpack, &grid, out)?;
    Ok(())
}
