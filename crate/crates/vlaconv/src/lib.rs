//! Vector-length-agnostic convolution kernels on a traced virtual vector
//! machine, with a two-level cache model, network-level dispatch, and
//! co-design sweep tooling.

pub mod bench;
pub mod lowering;
pub mod memsim;
pub mod network;
pub mod vvm;
pub mod winograd;

/// Geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn filters_len(&self) -> usize {
        self.filters * self.in_channels * self.kernel * self.kernel
    }

    pub fn output_len(&self) -> usize {
        self.filters * self.out_h() * self.out_w()
    }
}

/// Max |a - b| normalized by the peak magnitude of the reference. Robust to
/// near-zero elements produced by cancellation.
pub fn peak_relative_error(result: &[f32], reference: &[f64]) -> f64 {
    assert_eq!(result.len(), reference.len());
    let scale = reference.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-30);
    result
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (&a, &b)| m.max((a as f64 - b).abs()))
        / scale
}
