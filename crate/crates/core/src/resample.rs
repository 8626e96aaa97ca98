//! Multi-channel grid operators used by multi-scale saliency networks:
//! bilinear resizing, transposed and sub-pixel upsampling, channel
//! concatenation, and the readout head that projects features to a single
//! saliency channel.

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::DensityMap;

/// Channel-major `channels x height x width` grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::InvalidGrid(format!(
                "{} values for {channels}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn from_map(map: &DensityMap) -> Self {
        Self {
            channels: 1,
            height: map.height(),
            width: map.width(),
            data: map.values().to_vec(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Channels `start..end` as a new grid.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<FeatureGrid> {
        if start >= end || end > self.channels {
            return Err(Error::InvalidGrid(format!(
                "channel range {start}..{end} outside 0..{}",
                self.channels
            )));
        }
        let plane = self.height * self.width;
        Self::new(
            end - start,
            self.height,
            self.width,
            self.data[start * plane..end * plane].to_vec(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<FeatureGrid> {
        Self::new(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn same_shape(&self, other: &FeatureGrid) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Elementwise sum of two grids of identical shape.
    pub fn add(&self, other: &FeatureGrid) -> Result<FeatureGrid> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch {
                expected: self.shape_string(),
                actual: other.shape_string(),
            });
        }
        Self::new(
            self.channels,
            self.height,
            self.width,
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.channels, self.height, self.width)
    }

    /// Single-channel grid as a density map; negative values are rejected.
    pub fn to_density_map(&self) -> Result<DensityMap> {
        if self.channels != 1 {
            return Err(Error::ShapeMismatch {
                expected: "1 channel".into(),
                actual: format!("{} channels", self.channels),
            });
        }
        DensityMap::new(self.width, self.height, self.data.clone())
    }
}

/// Stacks `a` over `b` along the channel axis.
pub fn concat_channels(a: &FeatureGrid, b: &FeatureGrid) -> Result<FeatureGrid> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} spatial", a.height, a.width),
            actual: format!("{}x{} spatial", b.height, b.width),
        });
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    FeatureGrid::new(a.channels + b.channels, a.height, a.width, data)
}

/// Bilinear resampling with half-pixel centers, `src = (dst + 0.5) * scale - 0.5`,
/// clamped at the edges.
pub fn bilinear_resize(g: &FeatureGrid, out_h: usize, out_w: usize) -> Result<FeatureGrid> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidGrid(format!(
            "output size must be positive, got {out_h}x{out_w}"
        )));
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|d| {
                let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = taps(out_h, g.height);
    let xs = taps(out_w, g.width);
    let mut data = Vec::with_capacity(g.channels * out_h * out_w);
    for c in 0..g.channels {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = g.get(c, y0, x0) * (1.0 - fx) + g.get(c, y0, x1) * fx;
                let bottom = g.get(c, y1, x0) * (1.0 - fx) + g.get(c, y1, x1) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    FeatureGrid::new(g.channels, out_h, out_w, data)
}

/// Resizes the half-scale path to the full path's size and appends its
/// channels after the full path's.
pub fn concat_multiscale(full: &FeatureGrid, half: &FeatureGrid) -> Result<FeatureGrid> {
    let resized = if half.height == full.height && half.width == full.width {
        half.clone()
    } else {
        bilinear_resize(half, full.height, full.width)?
    };
    concat_channels(full, &resized)
}

/// Square stride-1 convolution with zero "same" padding, weights laid out
/// `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub size: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        size: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::KernelShapeMismatch(format!(
                "same-padded convolution needs an odd size, got {size}"
            )));
        }
        if weights.len() != out_channels * in_channels * size * size || bias.len() != out_channels {
            return Err(Error::KernelShapeMismatch(format!(
                "{} weights / {} biases for {out_channels}x{in_channels}x{size}x{size}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            size,
            weights,
            bias,
        })
    }

    pub fn random(in_channels: usize, out_channels: usize, size: usize, rng: &mut impl Rng) -> Self {
        let n = out_channels * in_channels * size * size;
        let scale = 1.0 / ((in_channels * size * size) as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            size,
            weights: (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
            bias: (0..out_channels).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        }
    }

    pub fn zeros(in_channels: usize, out_channels: usize, size: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            size,
            weights: vec![0.0; out_channels * in_channels * size * size],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.size + ky) * self.size + kx]
    }

    pub fn forward(&self, g: &FeatureGrid) -> Result<FeatureGrid> {
        if g.channels != self.in_channels {
            return Err(Error::KernelShapeMismatch(format!(
                "kernel expects {} input channels, grid has {}",
                self.in_channels, g.channels
            )));
        }
        let (h, w) = (g.height, g.width);
        let r = (self.size / 2) as isize;
        let mut out = vec![0.0; self.out_channels * h * w];
        for o in 0..self.out_channels {
            let base = o * h * w;
            out[base..base + h * w].fill(self.bias[o]);
            for i in 0..self.in_channels {
                for ky in 0..self.size {
                    for kx in 0..self.size {
                        let wgt = self.weight(o, i, ky, kx);
                        if wgt == 0.0 {
                            continue;
                        }
                        let dy = ky as isize - r;
                        let dx = kx as isize - r;
                        for y in 0..h {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for x in 0..w {
                                let sx = x as isize + dx;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                out[base + y * w + x] += wgt * g.get(i, sy as usize, sx as usize);
                            }
                        }
                    }
                }
            }
        }
        FeatureGrid::new(self.out_channels, h, w, out)
    }
}

/// Transposed convolution weights laid out `[in][out][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub size: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Kernel side of the deconvolution upsampling layers.
pub const DECONV_KERNEL: usize = 4;

impl ConvTranspose2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        size: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != in_channels * out_channels * size * size || bias.len() != out_channels {
            return Err(Error::KernelShapeMismatch(format!(
                "{} weights / {} biases for {in_channels}x{out_channels}x{size}x{size}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            size,
            weights,
            bias,
        })
    }

    pub fn random(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let size = DECONV_KERNEL;
        let n = in_channels * out_channels * size * size;
        let scale = 1.0 / ((in_channels * size * size) as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            size,
            weights: (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
            bias: (0..out_channels).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        }
    }

    #[inline]
    pub fn weight(&self, i: usize, o: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((i * self.out_channels + o) * self.size + ky) * self.size + kx]
    }
}

/// Transposed convolution with explicit stride and padding:
/// `H_out = (H - 1) * stride - 2 * pad + size`.
pub fn transposed_conv2d_with(
    g: &FeatureGrid,
    kernel: &ConvTranspose2d,
    stride: usize,
    pad: usize,
) -> Result<FeatureGrid> {
    if g.channels != kernel.in_channels {
        return Err(Error::KernelShapeMismatch(format!(
            "kernel expects {} input channels, grid has {}",
            kernel.in_channels, g.channels
        )));
    }
    if stride == 0 {
        return Err(Error::KernelShapeMismatch("stride must be positive".into()));
    }
    let full_h = (g.height - 1) * stride + kernel.size;
    let full_w = (g.width - 1) * stride + kernel.size;
    if full_h <= 2 * pad || full_w <= 2 * pad {
        return Err(Error::KernelShapeMismatch(format!(
            "padding {pad} removes the whole output"
        )));
    }
    let (oh, ow) = (full_h - 2 * pad, full_w - 2 * pad);
    let mut out = vec![0.0; kernel.out_channels * oh * ow];
    for o in 0..kernel.out_channels {
        out[o * oh * ow..(o + 1) * oh * ow].fill(kernel.bias[o]);
    }
    for i in 0..g.channels {
        for y in 0..g.height {
            for x in 0..g.width {
                let v = g.get(i, y, x);
                if v == 0.0 {
                    continue;
                }
                for o in 0..kernel.out_channels {
                    for ky in 0..kernel.size {
                        let Some(oy) = (y * stride + ky).checked_sub(pad).filter(|&r| r < oh) else {
                            continue;
                        };
                        for kx in 0..kernel.size {
                            let Some(ox) = (x * stride + kx).checked_sub(pad).filter(|&c| c < ow)
                            else {
                                continue;
                            };
                            out[(o * oh + oy) * ow + ox] += v * kernel.weight(i, o, ky, kx);
                        }
                    }
                }
            }
        }
    }
    FeatureGrid::new(kernel.out_channels, oh, ow, out)
}

/// 4x4 deconvolution with stride 2 and padding 1, doubling both sides.
pub fn transposed_conv2d(g: &FeatureGrid, kernel: &ConvTranspose2d) -> Result<FeatureGrid> {
    if kernel.size != DECONV_KERNEL {
        return Err(Error::KernelShapeMismatch(format!(
            "deconvolution kernel must be {DECONV_KERNEL}x{DECONV_KERNEL}, got {0}x{0}",
            kernel.size
        )));
    }
    transposed_conv2d_with(g, kernel, 2, 1)
}

/// Depth-to-space: `out(c, r*y + dy, r*x + dx) = in(c*r*r + r*dy + dx, y, x)`.
pub fn subpixel_shuffle(g: &FeatureGrid, factor: usize) -> Result<FeatureGrid> {
    let group = factor * factor;
    if factor == 0 || g.channels % group != 0 {
        return Err(Error::ChannelNotDivisible {
            channels: g.channels,
            divisor: group,
        });
    }
    let (oc, oh, ow) = (g.channels / group, g.height * factor, g.width * factor);
    let mut out = vec![0.0; g.data.len()];
    for c in 0..oc {
        for dy in 0..factor {
            for dx in 0..factor {
                let src_c = c * group + factor * dy + dx;
                for y in 0..g.height {
                    for x in 0..g.width {
                        out[(c * oh + factor * y + dy) * ow + factor * x + dx] = g.get(src_c, y, x);
                    }
                }
            }
        }
    }
    FeatureGrid::new(oc, oh, ow, out)
}

/// Space-to-depth, the inverse gather of [`subpixel_shuffle`].
pub fn subpixel_unshuffle(g: &FeatureGrid, factor: usize) -> Result<FeatureGrid> {
    if factor == 0 || g.height % factor != 0 || g.width % factor != 0 {
        return Err(Error::InvalidGrid(format!(
            "{}x{} not divisible by {factor}",
            g.height, g.width
        )));
    }
    let group = factor * factor;
    let (oc, oh, ow) = (g.channels * group, g.height / factor, g.width / factor);
    let mut out = vec![0.0; g.data.len()];
    for c in 0..oc {
        let (base, rem) = (c / group, c % group);
        let (dy, dx) = (rem / factor, rem % factor);
        for y in 0..oh {
            for x in 0..ow {
                out[(c * oh + y) * ow + x] = g.get(base, factor * y + dy, factor * x + dx);
            }
        }
    }
    FeatureGrid::new(oc, oh, ow, out)
}

#[inline]
pub fn leaky_relu(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        slope * v
    }
}

#[inline]
pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Upsampling flavour of the readout head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpsampleKind {
    /// Bilinear interpolation.
    Bi,
    /// Deconvolution (transposed convolution).
    Dc,
    /// Sub-pixel convolution.
    Spc,
    None,
}

impl UpsampleKind {
    pub const UPSAMPLING: [UpsampleKind; 3] = [UpsampleKind::Bi, UpsampleKind::Dc, UpsampleKind::Spc];
}

/// Output widths of the successive deconvolution layers.
pub const DECONV_WIDTHS: [usize; 3] = [128, 64, 32];

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutSpec {
    pub upsample_kind: UpsampleKind,
    pub n_layers: usize,
    pub leaky_slope: f64,
}

impl ReadoutSpec {
    pub fn new(upsample_kind: UpsampleKind, n_layers: usize) -> Result<Self> {
        let spec = Self {
            upsample_kind,
            n_layers,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A bare 1x1 projection.
    pub fn projection_only() -> Self {
        Self {
            upsample_kind: UpsampleKind::None,
            n_layers: 0,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers > 3 {
            return Err(Error::InvalidSpec(format!(
                "at most 3 upsampling layers, got {}",
                self.n_layers
            )));
        }
        if (self.n_layers == 0) != (self.upsample_kind == UpsampleKind::None) {
            return Err(Error::InvalidSpec(format!(
                "{:?} readout with {} layers",
                self.upsample_kind, self.n_layers
            )));
        }
        Ok(())
    }

    /// Output side length relative to the input: `2^N`.
    pub fn scale(&self) -> usize {
        1 << self.n_layers
    }
}

/// The final 1x1 convolution down to one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Projection {
    pub fn apply(&self, g: &FeatureGrid) -> Result<FeatureGrid> {
        if self.weights.len() != g.channels {
            return Err(Error::WeightShapeMismatch(format!(
                "projection has {} weights for {} channels",
                self.weights.len(),
                g.channels
            )));
        }
        let plane = g.height * g.width;
        let mut out = vec![self.bias; plane];
        for (c, &w) in self.weights.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(g.channel(c)) {
                *o += w * v;
            }
        }
        FeatureGrid::new(1, g.height, g.width, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpsampleLayer {
    /// 4x4 stride-2 deconvolution, then ReLU.
    Deconv(ConvTranspose2d),
    /// x2 pixel shuffle, then a 3x3 convolution and ReLU.
    SubPixel(Conv2d),
}

/// Caller-supplied readout parameters. Bilinear heads carry no layer weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub layers: Vec<UpsampleLayer>,
    pub projection: Projection,
}

impl ReadoutWeights {
    /// Random weights whose layer widths follow the standard plan: deconv
    /// layers narrow to 128, 64 and 32 channels; sub-pixel layers quarter the
    /// width and keep it through their 3x3 convolution.
    pub fn random(spec: &ReadoutSpec, in_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut width = in_channels;
        let mut layers = Vec::new();
        match spec.upsample_kind {
            UpsampleKind::Dc => {
                for &next in &DECONV_WIDTHS[..spec.n_layers] {
                    layers.push(UpsampleLayer::Deconv(ConvTranspose2d::random(width, next, rng)));
                    width = next;
                }
            }
            UpsampleKind::Spc => {
                for _ in 0..spec.n_layers {
                    if width % 4 != 0 {
                        return Err(Error::ChannelNotDivisible {
                            channels: width,
                            divisor: 4,
                        });
                    }
                    width /= 4;
                    layers.push(UpsampleLayer::SubPixel(Conv2d::random(width, width, 3, rng)));
                }
            }
            UpsampleKind::Bi | UpsampleKind::None => {}
        }
        let projection = Projection {
            weights: (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bias: rng.gen_range(-0.1..0.1),
        };
        Ok(Self { layers, projection })
    }
}

/// Runs the readout head and returns the single-channel output.
///
/// Bilinear heads project first and then upsample, which is equivalent to
/// upsampling every channel because both steps are linear. Leaky ReLU is
/// applied last, so the output may hold small negative values.
pub fn readout(g: &FeatureGrid, spec: &ReadoutSpec, weights: &ReadoutWeights) -> Result<FeatureGrid> {
    spec.validate()?;
    let expected_layers = match spec.upsample_kind {
        UpsampleKind::Dc | UpsampleKind::Spc => spec.n_layers,
        UpsampleKind::Bi | UpsampleKind::None => 0,
    };
    if weights.layers.len() != expected_layers {
        return Err(Error::WeightShapeMismatch(format!(
            "{:?} readout with {} layers needs {expected_layers} layer weights, got {}",
            spec.upsample_kind,
            spec.n_layers,
            weights.layers.len()
        )));
    }

    let projected = match spec.upsample_kind {
        UpsampleKind::None => weights.projection.apply(g)?,
        UpsampleKind::Bi => {
            let mut x = weights.projection.apply(g)?;
            for _ in 0..spec.n_layers {
                x = bilinear_resize(&x, x.height * 2, x.width * 2)?;
            }
            x
        }
        UpsampleKind::Dc | UpsampleKind::Spc => {
            let mut x = g.clone();
            for layer in &weights.layers {
                x = match (spec.upsample_kind, layer) {
                    (UpsampleKind::Dc, UpsampleLayer::Deconv(k)) => {
                        transposed_conv2d(&x, k)?.map(relu)?
                    }
                    (UpsampleKind::Spc, UpsampleLayer::SubPixel(conv)) => {
                        conv.forward(&subpixel_shuffle(&x, 2)?)?.map(relu)?
                    }
                    _ => {
                        return Err(Error::WeightShapeMismatch(format!(
                            "layer weights do not match {:?} readout",
                            spec.upsample_kind
                        )))
                    }
                };
            }
            weights.projection.apply(&x)?
        }
    };
    let slope = spec.leaky_slope;
    projected.map(|v| leaky_relu(v, slope))
}
