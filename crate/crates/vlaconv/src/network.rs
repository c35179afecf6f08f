//! Network-level modeling: Darknet-style cfg parsing, per-layer algorithm
//! dispatch, and whole-network inference on one machine with one shared
//! cache hierarchy.
//!
//! Weights and input activations are synthetic (seeded uniform in [-1, 1]):
//! what is under test is compute and memory behavior plus algorithm
//! equivalence, not model accuracy. Non-convolutional layers propagate
//! shapes and values but contribute no modeled compute, except shortcut
//! layers whose elementwise add runs on the vector machine and is counted.

use crate::lowering::conv_im2col_gemm;
use crate::memsim::{CacheConfig, CostModel, ExecStats, Replayer};
use crate::vvm::{Addr, VectorMachine, VectorMachineConfig};
use crate::winograd::{build_winograd_matrices, conv_winograd, StrategyConfig, WinogradError};
use crate::ConvShape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cfg parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("inference error in layer {layer}: {msg}")]
    Run { layer: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Convolutional,
    Shortcut,
    Maxpool,
    Upsample,
    Route,
    Other,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Convolutional => "convolutional",
            LayerKind::Shortcut => "shortcut",
            LayerKind::Maxpool => "maxpool",
            LayerKind::Upsample => "upsample",
            LayerKind::Route => "route",
            LayerKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Winograd,
    Im2colGemm,
    None,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Winograd => "winograd",
            Algorithm::Im2colGemm => "im2col_gemm",
            Algorithm::None => "none",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerDescriptor {
    pub index: usize,
    pub kind: LayerKind,
    pub filters: usize,
    pub size: usize,
    pub stride: usize,
    pub pad: usize,
    /// Source layer index for shortcut, sources for route.
    pub from: Vec<usize>,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub algorithm: Algorithm,
}

impl LayerDescriptor {
    pub fn conv_shape(&self) -> ConvShape {
        ConvShape {
            in_channels: self.in_c,
            in_h: self.in_h,
            in_w: self.in_w,
            filters: self.filters,
            kernel: self.size,
            stride: self.stride,
            pad: self.pad,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub layers: Vec<LayerDescriptor>,
    pub warnings: Vec<String>,
}

impl NetworkModel {
    pub fn conv_layers(&self) -> impl Iterator<Item = &LayerDescriptor> {
        self.layers.iter().filter(|l| l.kind == LayerKind::Convolutional)
    }

    pub fn truncated(&self, layers: usize) -> NetworkModel {
        let mut m = self.clone();
        m.layers.truncate(layers);
        m
    }
}

/// WINOGRAD for 3x3 stride-1 convolutions with at least 4 input channels,
/// IM2COL_GEMM for every other convolution, NONE otherwise.
pub fn dispatch_layer(layer: &LayerDescriptor) -> Algorithm {
    if layer.kind != LayerKind::Convolutional {
        return Algorithm::None;
    }
    if layer.size == 3 && layer.stride == 1 && layer.in_c >= 4 {
        Algorithm::Winograd
    } else {
        Algorithm::Im2colGemm
    }
}

/// Bundled model configurations.
pub fn builtin_cfg(name: &str) -> Option<&'static str> {
    match name {
        "vgg16" => Some(include_str!("../cfg/vgg16.cfg")),
        "yolov3-first20" => Some(include_str!("../cfg/yolov3-first20.cfg")),
        _ => None,
    }
}

struct Section {
    name: String,
    line: usize,
    keys: Vec<(String, String, usize)>,
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(NetworkError::Parse {
                    line: lineno + 1,
                    msg: format!("malformed section header: {line}"),
                });
            }
            sections.push(Section {
                name: line[1..line.len() - 1].to_string(),
                line: lineno + 1,
                keys: Vec::new(),
            });
        } else {
            let (k, v) = line.split_once('=').ok_or_else(|| NetworkError::Parse {
                line: lineno + 1,
                msg: format!("expected key=value, got: {line}"),
            })?;
            let section = sections.last_mut().ok_or_else(|| NetworkError::Parse {
                line: lineno + 1,
                msg: "key=value before any [section]".to_string(),
            })?;
            section.keys.push((k.trim().to_string(), v.trim().to_string(), lineno + 1));
        }
    }
    Ok(sections)
}

fn get_int(section: &Section, key: &str, default: Option<i64>) -> Result<i64> {
    for (k, v, lineno) in &section.keys {
        if k == key {
            return v.parse().map_err(|_| NetworkError::Parse {
                line: *lineno,
                msg: format!("{key} is not an integer: {v}"),
            });
        }
    }
    default.ok_or_else(|| NetworkError::Parse {
        line: section.line,
        msg: format!("[{}] is missing required key {key}", section.name),
    })
}

/// Parse a Darknet-style cfg into a shape-resolved model. `pad=1` means
/// size/2 padding as in Darknet; an explicit `padding=` overrides it.
pub fn parse_cfg(text: &str, name: &str) -> Result<NetworkModel> {
    let sections = split_sections(text)?;
    let mut iter = sections.iter();
    let net = iter.next().filter(|s| s.name == "net").ok_or_else(|| NetworkError::Parse {
        line: 1,
        msg: "cfg must start with a [net] section".to_string(),
    })?;
    let width = get_int(net, "width", None)? as usize;
    let height = get_int(net, "height", None)? as usize;
    let channels = get_int(net, "channels", None)? as usize;

    let known_conv_keys =
        ["filters", "size", "stride", "pad", "padding", "activation", "batch_normalize", "groups"];
    let mut warnings = Vec::new();
    let mut layers: Vec<LayerDescriptor> = Vec::new();
    let (mut c, mut h, mut w) = (channels, height, width);

    for section in iter {
        let index = layers.len();
        let mut layer = LayerDescriptor {
            index,
            kind: LayerKind::Other,
            filters: 0,
            size: 0,
            stride: 1,
            pad: 0,
            from: Vec::new(),
            in_c: c,
            in_h: h,
            in_w: w,
            out_c: c,
            out_h: h,
            out_w: w,
            algorithm: Algorithm::None,
        };
        match section.name.as_str() {
            "convolutional" => {
                layer.kind = LayerKind::Convolutional;
                layer.filters = get_int(section, "filters", Some(1))? as usize;
                layer.size = get_int(section, "size", Some(1))? as usize;
                layer.stride = get_int(section, "stride", Some(1))? as usize;
                let pad_flag = get_int(section, "pad", Some(0))?;
                let padding = get_int(section, "padding", Some(-1))?;
                layer.pad = if padding >= 0 {
                    padding as usize
                } else if pad_flag != 0 {
                    layer.size / 2
                } else {
                    0
                };
                for (k, _, lineno) in &section.keys {
                    if !known_conv_keys.contains(&k.as_str()) {
                        warnings.push(format!("line {lineno}: ignoring unknown key {k}"));
                    }
                }
                if layer.size == 0 || layer.stride == 0 {
                    return Err(NetworkError::Parse {
                        line: section.line,
                        msg: "size and stride must be positive".to_string(),
                    });
                }
                if h + 2 * layer.pad < layer.size || w + 2 * layer.pad < layer.size {
                    return Err(NetworkError::Parse {
                        line: section.line,
                        msg: format!("kernel {} too large for {h}x{w} input", layer.size),
                    });
                }
                layer.out_c = layer.filters;
                layer.out_h = (h + 2 * layer.pad - layer.size) / layer.stride + 1;
                layer.out_w = (w + 2 * layer.pad - layer.size) / layer.stride + 1;
            }
            "shortcut" => {
                layer.kind = LayerKind::Shortcut;
                let from = get_int(section, "from", None)?;
                let src = if from < 0 { index as i64 + from } else { from };
                if src < 0 || src as usize >= index {
                    return Err(NetworkError::Parse {
                        line: section.line,
                        msg: format!("shortcut from={from} resolves outside the network"),
                    });
                }
                let src = src as usize;
                let s = &layers[src];
                if (s.out_c, s.out_h, s.out_w) != (c, h, w) {
                    return Err(NetworkError::Parse {
                        line: section.line,
                        msg: format!(
                            "shortcut shape mismatch: layer {src} gives {}x{}x{}, expected {c}x{h}x{w}",
                            s.out_c, s.out_h, s.out_w
                        ),
                    });
                }
                layer.from = vec![src];
            }
            "maxpool" => {
                layer.kind = LayerKind::Maxpool;
                layer.size = get_int(section, "size", Some(2))? as usize;
                layer.stride = get_int(section, "stride", Some(layer.size as i64))? as usize;
                // darknet default padding keeps ceil(h/stride)
                layer.out_h = (h - 1) / layer.stride + 1;
                layer.out_w = (w - 1) / layer.stride + 1;
            }
            "upsample" => {
                layer.kind = LayerKind::Upsample;
                layer.stride = get_int(section, "stride", Some(2))? as usize;
                layer.out_h = h * layer.stride;
                layer.out_w = w * layer.stride;
            }
            "route" => {
                layer.kind = LayerKind::Route;
                let mut out_c = 0;
                for (k, v, lineno) in &section.keys {
                    if k != "layers" {
                        continue;
                    }
                    for part in v.split(',') {
                        let n: i64 = part.trim().parse().map_err(|_| NetworkError::Parse {
                            line: *lineno,
                            msg: format!("route layer index not an integer: {part}"),
                        })?;
                        let src = if n < 0 { index as i64 + n } else { n };
                        if src < 0 || src as usize >= index {
                            return Err(NetworkError::Parse {
                                line: *lineno,
                                msg: format!("route layers={n} resolves outside the network"),
                            });
                        }
                        layer.from.push(src as usize);
                        out_c += layers[src as usize].out_c;
                    }
                }
                if layer.from.is_empty() {
                    return Err(NetworkError::Parse {
                        line: section.line,
                        msg: "route requires layers=".to_string(),
                    });
                }
                let first = &layers[layer.from[0]];
                layer.out_c = out_c;
                layer.out_h = first.out_h;
                layer.out_w = first.out_w;
            }
            other => {
                warnings
                    .push(format!("line {}: section [{other}] treated as passthrough", section.line));
            }
        }
        layer.algorithm = dispatch_layer(&layer);
        (c, h, w) = (layer.out_c, layer.out_h, layer.out_w);
        layers.push(layer);
    }
    Ok(NetworkModel { name: name.to_string(), width, height, channels, layers, warnings })
}

/// How convolutional layers are implemented for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Every convolution through im2col + GEMM.
    PureIm2col,
    /// Per-layer dispatch.
    Hybrid,
    /// Winograd wherever structurally possible (3x3 stride-1, C >= 4).
    WinogradAll,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::PureIm2col => "pure",
            RunMode::Hybrid => "hybrid",
            RunMode::WinogradAll => "winograd-all",
        }
    }
}

fn effective_algorithm(layer: &LayerDescriptor, mode: RunMode) -> Algorithm {
    match (layer.kind, mode) {
        (LayerKind::Convolutional, RunMode::PureIm2col) => Algorithm::Im2colGemm,
        (LayerKind::Convolutional, RunMode::Hybrid) => layer.algorithm,
        (LayerKind::Convolutional, RunMode::WinogradAll) => {
            if layer.size == 3 && layer.stride == 1 && layer.in_c >= 4 {
                Algorithm::Winograd
            } else {
                Algorithm::Im2colGemm
            }
        }
        _ => Algorithm::None,
    }
}

#[derive(Debug, Clone)]
pub struct LayerRun {
    pub index: usize,
    pub kind: LayerKind,
    pub algorithm: Algorithm,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stats: ExecStats,
}

#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub layers: Vec<LayerRun>,
    pub total: ExecStats,
    /// Final activation tensor, host copy.
    pub output: Vec<f32>,
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(layer as u64 + 1)
}

/// Run inference over all (or the first `layer_limit`) layers with seeded
/// synthetic weights and input, on a fresh machine per call but one cache
/// hierarchy shared across the whole run.
#[allow(clippy::too_many_arguments)]
pub fn run_network_inference(
    model: &NetworkModel,
    vlen_bits: u32,
    cache: &CacheConfig,
    cost: CostModel,
    mode: RunMode,
    strategy: StrategyConfig,
    seed: u64,
    layer_limit: Option<usize>,
) -> Result<NetworkRun> {
    let mcfg = VectorMachineConfig::new(vlen_bits)
        .map_err(|e| NetworkError::Run { layer: 0, msg: e.to_string() })?;
    let mut m = VectorMachine::new(mcfg, Replayer::new(cache, cost));
    let mats = build_winograd_matrices();
    let n_layers = layer_limit.map_or(model.layers.len(), |n| n.min(model.layers.len()));

    // network input
    let in_len = model.channels * model.height * model.width;
    let input0 = m.alloc(in_len);
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..in_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.write_slice(input0, &data);
    }

    let mut act: Vec<Addr> = Vec::with_capacity(n_layers); // per-layer outputs
    let mut runs: Vec<LayerRun> = Vec::with_capacity(n_layers);
    let mut prev_stats = ExecStats::default();

    for layer in &model.layers[..n_layers] {
        let idx = layer.index;
        let input = if idx == 0 { input0 } else { act[idx - 1] };
        let out_len = layer.out_c * layer.out_h * layer.out_w;
        let out = m.alloc(out_len);
        let scratch_mark = m.mark();
        let run_err = |msg: String| NetworkError::Run { layer: idx, msg };

        let algorithm = effective_algorithm(layer, mode);
        match layer.kind {
            LayerKind::Convolutional => {
                let shape = layer.conv_shape();
                let weights = m.alloc(shape.filters_len());
                {
                    let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(seed, idx));
                    let data: Vec<f32> =
                        (0..shape.filters_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    m.write_slice(weights, &data);
                }
                match algorithm {
                    Algorithm::Winograd => {
                        conv_winograd(&mut m, &mats, input, weights, &shape, strategy, out)
                            .map_err(|e: WinogradError| run_err(e.to_string()))?;
                    }
                    Algorithm::Im2colGemm => {
                        conv_im2col_gemm(&mut m, input, weights, &shape, out)
                            .map_err(|e| run_err(e.to_string()))?;
                    }
                    Algorithm::None => unreachable!(),
                }
            }
            LayerKind::Shortcut => {
                let other = act[layer.from[0]];
                let mut i = 0;
                while i < out_len {
                    let gvl = m.set_vector_length(out_len - i);
                    let off = i as u64 * 4;
                    let a = m.load_unit(input + off, gvl).map_err(|e| run_err(e.to_string()))?;
                    let b = m.load_unit(other + off, gvl).map_err(|e| run_err(e.to_string()))?;
                    let s = m.add(&a, &b, gvl);
                    m.store_unit(&s, out + off, gvl).map_err(|e| run_err(e.to_string()))?;
                    i += gvl;
                }
            }
            // shape/value propagation only; no modeled compute
            LayerKind::Maxpool => {
                let (c, ih, iw) = (layer.in_c, layer.in_h, layer.in_w);
                let (oh, ow, k, s) = (layer.out_h, layer.out_w, layer.size, layer.stride);
                let src = m.read_slice(input, c * ih * iw).to_vec();
                let mut dst = vec![0.0f32; out_len];
                for ch in 0..c {
                    for y in 0..oh {
                        for x in 0..ow {
                            let mut best = f32::NEG_INFINITY;
                            for dy in 0..k {
                                for dx in 0..k {
                                    let (iy, ix) = (y * s + dy, x * s + dx);
                                    if iy < ih && ix < iw {
                                        best = best.max(src[(ch * ih + iy) * iw + ix]);
                                    }
                                }
                            }
                            dst[(ch * oh + y) * ow + x] = best;
                        }
                    }
                }
                m.write_slice(out, &dst);
            }
            LayerKind::Upsample => {
                let (c, ih, iw, s) = (layer.in_c, layer.in_h, layer.in_w, layer.stride);
                let src = m.read_slice(input, c * ih * iw).to_vec();
                let mut dst = vec![0.0f32; out_len];
                for ch in 0..c {
                    for y in 0..layer.out_h {
                        for x in 0..layer.out_w {
                            dst[(ch * layer.out_h + y) * layer.out_w + x] =
                                src[(ch * ih + y / s) * iw + x / s];
                        }
                    }
                }
                m.write_slice(out, &dst);
            }
            LayerKind::Route => {
                let mut off = 0u64;
                for &src in &layer.from {
                    let s = &model.layers[src];
                    let len = s.out_c * s.out_h * s.out_w;
                    let data = m.read_slice(act[src], len).to_vec();
                    m.write_slice(out + off, &data);
                    off += len as u64 * 4;
                }
            }
            LayerKind::Other => {
                let data = m.read_slice(input, out_len).to_vec();
                m.write_slice(out, &data);
            }
        }

        m.release_to(scratch_mark);
        let now = m.sink_mut().stats();
        runs.push(LayerRun {
            index: idx,
            kind: layer.kind,
            algorithm,
            out_c: layer.out_c,
            out_h: layer.out_h,
            out_w: layer.out_w,
            stats: now.delta_since(&prev_stats),
        });
        prev_stats = now;
        act.push(out);
    }

    let output = match act.last() {
        Some(&a) => {
            let l = &model.layers[n_layers - 1];
            m.read_slice(a, l.out_c * l.out_h * l.out_w).to_vec()
        }
        None => Vec::new(),
    };
    Ok(NetworkRun { layers: runs, total: m.sink_mut().stats(), output })
}
