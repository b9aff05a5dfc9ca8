//! Dense channel-last float tensors and the handful of operators the
//! pipeline is built from.
//!
//! Every operator is a pure function: it borrows its inputs and returns a
//! freshly allocated tensor. Spatial reductions accumulate in `f64` and the
//! accumulation order is fixed, so results are bitwise reproducible.

use crate::{Error, Result};

/// `height × width × channels` array of `f32`, stored row-major with the
/// channel index varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Tensor {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::config(format!(
                "tensor data has {} values, {height}x{width}x{channels} needs {}",
                data.len(),
                height * width * channels
            )));
        }
        Ok(Tensor {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(row, col, channel)` at every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Tensor {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) {
        let i = self.index(row, col, ch);
        self.data[i] = value;
    }

    /// All channel values of one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Position `(row, col)` of the largest value in channel `ch`; the first
    /// occurrence in raster order wins ties.
    pub fn argmax(&self, ch: usize) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f32::NEG_INFINITY;
        for r in 0..self.height {
            for c in 0..self.width {
                let v = self.at(r, c, ch);
                if v > best_v {
                    best_v = v;
                    best = (r, c);
                }
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::config(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Multiplies by a `1×1×C` gate broadcast over space.
    pub fn mul_channel_gate(&self, gate: &Tensor) -> Result<Tensor> {
        if gate.height != 1 || gate.width != 1 || gate.channels != self.channels {
            return Err(Error::config(format!(
                "channel gate {:?} does not broadcast over {:?}",
                gate.shape(),
                self.shape()
            )));
        }
        let mut out = self.clone();
        for px in out.data.chunks_exact_mut(self.channels) {
            for (v, g) in px.iter_mut().zip(&gate.data) {
                *v *= g;
            }
        }
        Ok(out)
    }

    /// Multiplies by an `H×W×1` gate broadcast over channels.
    pub fn mul_spatial_gate(&self, gate: &Tensor) -> Result<Tensor> {
        if gate.height != self.height || gate.width != self.width || gate.channels != 1 {
            return Err(Error::config(format!(
                "spatial gate {:?} does not broadcast over {:?}",
                gate.shape(),
                self.shape()
            )));
        }
        let mut out = self.clone();
        for (px, g) in out.data.chunks_exact_mut(self.channels).zip(&gate.data) {
            for v in px {
                *v *= g;
            }
        }
        Ok(out)
    }

    /// Copies channels `start..end` into a new tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > self.channels {
            return Err(Error::config(format!(
                "channel range {start}..{end} out of bounds for {} channels",
                self.channels
            )));
        }
        let n = end - start;
        let mut data = Vec::with_capacity(self.height * self.width * n);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[start..end]);
        }
        Ok(Tensor {
            height: self.height,
            width: self.width,
            channels: n,
            data,
        })
    }

    /// Repeats a single-channel tensor along the channel axis.
    pub fn repeat_channels(&self, times: usize) -> Result<Tensor> {
        if self.channels != 1 {
            return Err(Error::config(format!(
                "repeat_channels needs a single-channel tensor, got {}",
                self.channels
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() * times);
        for &v in &self.data {
            data.extend(std::iter::repeat_n(v, times));
        }
        Ok(Tensor {
            height: self.height,
            width: self.width,
            channels: times,
            data,
        })
    }

    pub fn flip_horizontal(&self) -> Tensor {
        let mut out = Tensor::zeros(self.height, self.width, self.channels);
        for r in 0..self.height {
            for c in 0..self.width {
                let src = self.index(r, self.width - 1 - c, 0);
                let dst = out.index(r, c, 0);
                out.data[dst..dst + self.channels].copy_from_slice(&self.data[src..src + self.channels]);
            }
        }
        out
    }

    /// Per-pixel mean over channels, `H×W×1`.
    pub fn channel_mean(&self) -> Tensor {
        let n = self.channels as f64;
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| (px.iter().map(|&v| v as f64).sum::<f64>() / n) as f32)
            .collect();
        Tensor {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Per-pixel maximum over channels, `H×W×1`.
    pub fn channel_max(&self) -> Tensor {
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().copied().fold(f32::NEG_INFINITY, f32::max))
            .collect();
        Tensor {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }
}

/// How a [`ConvKernel`] maps input channels to output channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvMode {
    /// Dense `k×k` kernel over all input channels; weights `[out][in][ky][kx]`.
    General,
    /// One `k×k` plane per channel; weights `[ch][ky][kx]`.
    Depthwise,
    /// `1×1` channel mixing; weights `[out][in]`.
    Pointwise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    k: usize,
    in_channels: usize,
    out_channels: usize,
    mode: ConvMode,
    weights: Vec<f32>,
    bias: Option<Vec<f32>>,
}

impl ConvKernel {
    pub fn general(
        k: usize,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        Self::new(k, in_channels, out_channels, ConvMode::General, weights, bias)
    }

    pub fn depthwise(k: usize, channels: usize, weights: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        Self::new(k, channels, channels, ConvMode::Depthwise, weights, bias)
    }

    pub fn pointwise(
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        Self::new(1, in_channels, out_channels, ConvMode::Pointwise, weights, bias)
    }

    pub fn new(
        k: usize,
        in_channels: usize,
        out_channels: usize,
        mode: ConvMode,
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::config(format!("kernel side must be odd, got {k}")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::config("kernel needs at least one channel"));
        }
        let expected = match mode {
            ConvMode::General => out_channels * in_channels * k * k,
            ConvMode::Depthwise => {
                if in_channels != out_channels {
                    return Err(Error::config(format!(
                        "depthwise kernel maps {in_channels} channels to {out_channels}"
                    )));
                }
                in_channels * k * k
            }
            ConvMode::Pointwise => {
                if k != 1 {
                    return Err(Error::config(format!("pointwise kernel with side {k}")));
                }
                out_channels * in_channels
            }
        };
        if weights.len() != expected {
            return Err(Error::config(format!(
                "{mode:?} kernel {k}x{k} {in_channels}->{out_channels} needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != out_channels {
                return Err(Error::config(format!(
                    "bias has {} entries for {out_channels} output channels",
                    b.len()
                )));
            }
        }
        Ok(ConvKernel {
            k,
            in_channels,
            out_channels,
            mode,
            weights,
            bias,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn mode(&self) -> ConvMode {
        self.mode
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    /// Weight connecting input channel `i` to output channel `o` at tap
    /// `(ky, kx)`; zero for off-diagonal depthwise pairs.
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        let k = self.k;
        match self.mode {
            ConvMode::General => self.weights[((o * self.in_channels + i) * k + ky) * k + kx],
            ConvMode::Depthwise if o == i => self.weights[(o * k + ky) * k + kx],
            ConvMode::Depthwise => 0.0,
            ConvMode::Pointwise => self.weights[o * self.in_channels + i],
        }
    }
}

/// Border handling for [`conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Pad with zeros.
    Zero(usize),
    /// Repeat the nearest edge pixel.
    Replicate(usize),
}

impl Padding {
    /// Zero padding that keeps the spatial size for an odd kernel side.
    pub fn same(k: usize) -> Padding {
        Padding::Zero(k / 2)
    }

    fn amount(self) -> usize {
        match self {
            Padding::Zero(p) | Padding::Replicate(p) => p,
        }
    }
}

/// Tap visiting order: mirrored pairs `(t, n-1-t)` followed by the centre.
///
/// Each pair is summed before it enters the accumulator, so a point-symmetric
/// or antisymmetric kernel over a locally constant input cancels exactly.
fn paired_taps(k: usize) -> Vec<(usize, usize)> {
    let n = k * k;
    (0..n / 2).map(|t| (t, n - 1 - t)).collect()
}

/// Stride-1 cross-correlation (no kernel flip).
pub fn conv2d(input: &Tensor, kernel: &ConvKernel, padding: Padding) -> Result<Tensor> {
    if input.channels != kernel.in_channels {
        return Err(Error::config(format!(
            "conv expects {} input channels, tensor has {}",
            kernel.in_channels, input.channels
        )));
    }
    let k = kernel.k;
    let p = padding.amount();
    if input.height + 2 * p < k || input.width + 2 * p < k {
        return Err(Error::config(format!(
            "{k}x{k} kernel does not fit {}x{} input with padding {p}",
            input.height, input.width
        )));
    }
    let out_h = input.height + 2 * p - k + 1;
    let out_w = input.width + 2 * p - k + 1;
    let out_c = kernel.out_channels;
    let mut out = Tensor::zeros(out_h, out_w, out_c);

    match kernel.mode {
        ConvMode::Pointwise => pointwise(input, kernel, &mut out),
        ConvMode::Depthwise => depthwise(input, kernel, padding, &mut out),
        ConvMode::General => general(input, kernel, padding, &mut out),
    }
    Ok(out)
}

/// Source pixel for output `(oy, ox)` and tap `t`, or `None` when it falls
/// into zero padding.
#[inline]
fn source(input: &Tensor, k: usize, padding: Padding, oy: usize, ox: usize, t: usize) -> Option<(usize, usize)> {
    let (ky, kx) = (t / k, t % k);
    let p = padding.amount() as isize;
    let y = oy as isize + ky as isize - p;
    let x = ox as isize + kx as isize - p;
    let (h, w) = (input.height as isize, input.width as isize);
    match padding {
        Padding::Zero(_) => {
            if y < 0 || x < 0 || y >= h || x >= w {
                None
            } else {
                Some((y as usize, x as usize))
            }
        }
        Padding::Replicate(_) => Some((y.clamp(0, h - 1) as usize, x.clamp(0, w - 1) as usize)),
    }
}

fn pointwise(input: &Tensor, kernel: &ConvKernel, out: &mut Tensor) {
    let (ci, co) = (kernel.in_channels, kernel.out_channels);
    let w: Vec<f64> = kernel.weights.iter().map(|&v| v as f64).collect();
    for (src, dst) in input.data.chunks_exact(ci).zip(out.data.chunks_exact_mut(co)) {
        for (o, d) in dst.iter_mut().enumerate() {
            let mut acc = kernel.bias.as_ref().map_or(0.0, |b| b[o] as f64);
            for (wi, &x) in w[o * ci..(o + 1) * ci].iter().zip(src) {
                acc += wi * x as f64;
            }
            *d = acc as f32;
        }
    }
}

fn depthwise(input: &Tensor, kernel: &ConvKernel, padding: Padding, out: &mut Tensor) {
    let k = kernel.k;
    let c = kernel.in_channels;
    let taps = paired_taps(k);
    let centre = k * k / 2;
    // [tap][ch]
    let mut w = vec![0.0f64; k * k * c];
    for ch in 0..c {
        for t in 0..k * k {
            w[t * c + ch] = kernel.weights[ch * k * k + t] as f64;
        }
    }
    let zeros = vec![0.0f32; c];
    let mut acc = vec![0.0f64; c];
    for oy in 0..out.height {
        for ox in 0..out.width {
            match &kernel.bias {
                Some(b) => acc.iter_mut().zip(b).for_each(|(a, &b)| *a = b as f64),
                None => acc.fill(0.0),
            }
            let fetch = |t: usize| match source(input, k, padding, oy, ox, t) {
                Some((y, x)) => input.pixel(y, x),
                None => &zeros[..],
            };
            for &(ta, tb) in &taps {
                let (xa, xb) = (fetch(ta), fetch(tb));
                let (wa, wb) = (&w[ta * c..(ta + 1) * c], &w[tb * c..(tb + 1) * c]);
                for ch in 0..c {
                    acc[ch] += wa[ch] * xa[ch] as f64 + wb[ch] * xb[ch] as f64;
                }
            }
            let xc = fetch(centre);
            let wc = &w[centre * c..(centre + 1) * c];
            let dst = out.index(oy, ox, 0);
            for ch in 0..c {
                out.data[dst + ch] = (acc[ch] + wc[ch] * xc[ch] as f64) as f32;
            }
        }
    }
}

fn general(input: &Tensor, kernel: &ConvKernel, padding: Padding, out: &mut Tensor) {
    let k = kernel.k;
    let (ci, co) = (kernel.in_channels, kernel.out_channels);
    let taps = paired_taps(k);
    let centre = k * k / 2;
    // [tap][out][in]
    let mut w = vec![0.0f64; k * k * co * ci];
    for o in 0..co {
        for i in 0..ci {
            for t in 0..k * k {
                w[(t * co + o) * ci + i] = kernel.weights[(o * ci + i) * k * k + t] as f64;
            }
        }
    }
    let zeros = vec![0.0f32; ci];
    let mut acc = vec![0.0f64; co];
    for oy in 0..out.height {
        for ox in 0..out.width {
            match &kernel.bias {
                Some(b) => acc.iter_mut().zip(b).for_each(|(a, &b)| *a = b as f64),
                None => acc.fill(0.0),
            }
            let fetch = |t: usize| source(input, k, padding, oy, ox, t).map(|(y, x)| input.pixel(y, x));
            for &(ta, tb) in &taps {
                let (xa, xb) = (fetch(ta), fetch(tb));
                if xa.is_none() && xb.is_none() {
                    continue;
                }
                let xa = xa.unwrap_or(&zeros);
                let xb = xb.unwrap_or(&zeros);
                for (o, a) in acc.iter_mut().enumerate() {
                    let wa = &w[(ta * co + o) * ci..(ta * co + o + 1) * ci];
                    let wb = &w[(tb * co + o) * ci..(tb * co + o + 1) * ci];
                    let mut s = 0.0f64;
                    for i in 0..ci {
                        s += wa[i] * xa[i] as f64 + wb[i] * xb[i] as f64;
                    }
                    *a += s;
                }
            }
            let dst = out.index(oy, ox, 0);
            if let Some(xc) = fetch(centre) {
                for (o, a) in acc.iter().enumerate() {
                    let wc = &w[(centre * co + o) * ci..(centre * co + o + 1) * ci];
                    let s: f64 = wc.iter().zip(xc).map(|(w, &x)| w * x as f64).sum();
                    out.data[dst + o] = (a + s) as f32;
                }
            } else {
                for (o, a) in acc.iter().enumerate() {
                    out.data[dst + o] = *a as f32;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    /// 2×2 window, stride 2.
    Max2,
    /// 2×2 window, stride 2.
    Avg2,
    GlobalAvg,
    GlobalMax,
}

pub fn pool(input: &Tensor, kind: PoolKind) -> Result<Tensor> {
    let c = input.channels;
    match kind {
        PoolKind::Max2 | PoolKind::Avg2 => {
            if !input.height.is_multiple_of(2) || !input.width.is_multiple_of(2) {
                return Err(Error::config(format!(
                    "2x2 pooling needs even dims, got {}x{}",
                    input.height, input.width
                )));
            }
            let (h, w) = (input.height / 2, input.width / 2);
            let mut out = Tensor::zeros(h, w, c);
            for r in 0..h {
                for col in 0..w {
                    for ch in 0..c {
                        let vals = [
                            input.at(2 * r, 2 * col, ch),
                            input.at(2 * r, 2 * col + 1, ch),
                            input.at(2 * r + 1, 2 * col, ch),
                            input.at(2 * r + 1, 2 * col + 1, ch),
                        ];
                        let v = if kind == PoolKind::Max2 {
                            vals.into_iter().fold(f32::NEG_INFINITY, f32::max)
                        } else {
                            (vals.iter().map(|&v| v as f64).sum::<f64>() / 4.0) as f32
                        };
                        out.set(r, col, ch, v);
                    }
                }
            }
            Ok(out)
        }
        PoolKind::GlobalAvg => {
            let mut sums = vec![0.0f64; c];
            for px in input.data.chunks_exact(c) {
                for (s, &v) in sums.iter_mut().zip(px) {
                    *s += v as f64;
                }
            }
            let n = (input.height * input.width) as f64;
            Tensor::from_vec(1, 1, c, sums.into_iter().map(|s| (s / n) as f32).collect())
        }
        PoolKind::GlobalMax => {
            let mut maxes = vec![f32::NEG_INFINITY; c];
            for px in input.data.chunks_exact(c) {
                for (m, &v) in maxes.iter_mut().zip(px) {
                    *m = m.max(v);
                }
            }
            Tensor::from_vec(1, 1, c, maxes)
        }
    }
}

/// Source coordinate and interpolation weight along one axis for output
/// index `i` (half-pixel centres, align-corners disabled).
#[inline]
fn bilinear_axis(i: usize, factor: usize, n: usize) -> (usize, usize, f64) {
    let src = ((i as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, src - i0 as f64)
}

pub fn upsample_bilinear(input: &Tensor, factor: usize) -> Result<Tensor> {
    if !matches!(factor, 2 | 4 | 8) {
        return Err(Error::config(format!(
            "upsampling factor must be 2, 4 or 8, got {factor}"
        )));
    }
    let (h, w, c) = input.shape();
    let mut out = Tensor::zeros(h * factor, w * factor, c);
    let cols: Vec<_> = (0..w * factor).map(|x| bilinear_axis(x, factor, w)).collect();
    for y in 0..h * factor {
        let (y0, y1, ly) = bilinear_axis(y, factor, h);
        for (x, &(x0, x1, lx)) in cols.iter().enumerate() {
            for ch in 0..c {
                let a = input.at(y0, x0, ch) as f64;
                let b = input.at(y0, x1, ch) as f64;
                let cc = input.at(y1, x0, ch) as f64;
                let d = input.at(y1, x1, ch) as f64;
                let top = a + lx * (b - a);
                let bot = cc + lx * (d - cc);
                out.set(y, x, ch, (top + ly * (bot - top)) as f32);
            }
        }
    }
    Ok(out)
}

/// Inference-mode batch normalisation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f32,
}

pub const BN_EPSILON: f32 = 1e-5;

impl BatchNorm {
    /// gamma 1, beta 0, mean 0, var 1.
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(Error::config("batch-norm parameter arrays differ in length"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config(format!("batch-norm epsilon {}", self.epsilon)));
        }
        if let Some(v) = self
            .running_var
            .iter()
            .find(|&&v| !(v >= 0.0) || !(v + self.epsilon > 0.0))
        {
            return Err(Error::config(format!(
                "batch-norm variance {v} with epsilon {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

pub fn bn_infer(input: &Tensor, p: &BatchNorm) -> Result<Tensor> {
    p.validate()?;
    if p.channels() != input.channels {
        return Err(Error::config(format!(
            "batch-norm has {} channels, tensor has {}",
            p.channels(),
            input.channels
        )));
    }
    let denom: Vec<f32> = p.running_var.iter().map(|&v| (v + p.epsilon).sqrt()).collect();
    let mut out = input.clone();
    for px in out.data.chunks_exact_mut(input.channels) {
        for (ch, v) in px.iter_mut().enumerate() {
            *v = p.gamma[ch] * (*v - p.running_mean[ch]) / denom[ch] + p.beta[ch];
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Largest `f32` below one.
const ONE_MINUS_ULP: f32 = 1.0 - f32::EPSILON / 2.0;

/// Logistic function kept strictly inside `(0, 1)` in `f32`.
#[inline]
pub fn sigmoid(x: f32) -> f32 {
    let x = x as f64;
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    (s as f32).clamp(f32::MIN_POSITIVE, ONE_MINUS_ULP)
}

pub fn activate(input: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => input.map(|v| v.max(0.0)),
        Activation::Sigmoid => input.map(sigmoid),
    }
}

pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::config("concat of zero tensors"))?;
    let (h, w) = (first.height, first.width);
    if let Some(bad) = parts.iter().find(|t| t.height != h || t.width != w) {
        return Err(Error::config(format!(
            "concat spatial mismatch {}x{} vs {}x{}",
            h, w, bad.height, bad.width
        )));
    }
    let total: usize = parts.iter().map(|t| t.channels).sum();
    let mut data = Vec::with_capacity(h * w * total);
    for p in 0..h * w {
        for t in parts {
            data.extend_from_slice(&t.data[p * t.channels..(p + 1) * t.channels]);
        }
    }
    Tensor::from_vec(h, w, total, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_output() {
        let input = Tensor::zeros(5, 5, 1);
        let k = ConvKernel::general(3, 1, 1, (1..=9).map(|v| v as f32).collect(), None).unwrap();
        let out = conv2d(&input, &k, Padding::same(3)).unwrap();
        assert_eq!(out.shape(), (5, 5, 1));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_pointwise() {
        let input = Tensor::filled(1, 1, 1, 3.0);
        let k = ConvKernel::pointwise(1, 1, vec![0.5], Some(vec![0.25])).unwrap();
        let out = conv2d(&input, &k, Padding::Zero(0)).unwrap();
        assert_eq!(out.data(), &[3.0 * 0.5 + 0.25]);
    }

    #[test]
    fn kernel_validation() {
        assert!(matches!(
            ConvKernel::general(2, 1, 1, vec![0.0; 4], None),
            Err(Error::Config(_))
        ));
        assert!(ConvKernel::depthwise(3, 2, vec![0.0; 9], None).is_err());
        assert!(ConvKernel::new(3, 1, 1, ConvMode::Pointwise, vec![0.0; 9], None).is_err());
        let k = ConvKernel::general(3, 2, 1, vec![0.0; 18], None).unwrap();
        assert!(matches!(
            conv2d(&Tensor::zeros(4, 4, 3), &k, Padding::same(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn replicate_padding_keeps_constants() {
        let input = Tensor::filled(6, 6, 1, 0.7);
        // antisymmetric kernel
        let w = vec![0.3, -0.1, 0.2, 0.5, 0.0, -0.5, -0.2, 0.1, -0.3];
        let k = ConvKernel::depthwise(3, 1, w, None).unwrap();
        let out = conv2d(&input, &k, Padding::Replicate(1)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pooling_single_window() {
        let t = Tensor::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool(&t, PoolKind::Max2).unwrap().data(), &[4.0]);
        assert_eq!(pool(&t, PoolKind::Avg2).unwrap().data(), &[2.5]);
        assert_eq!(pool(&t, PoolKind::GlobalMax).unwrap().data(), &[4.0]);
        assert!(pool(&Tensor::zeros(3, 2, 1), PoolKind::Max2).is_err());
    }

    #[test]
    fn global_avg_of_constant() {
        let t = Tensor::filled(7, 5, 3, 0.3);
        let g = pool(&t, PoolKind::GlobalAvg).unwrap();
        assert_eq!(g.shape(), (1, 1, 3));
        assert!(g.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn upsample_constant_and_single_pixel() {
        let t = Tensor::filled(3, 2, 2, 0.6);
        let up = upsample_bilinear(&t, 4).unwrap();
        assert_eq!(up.shape(), (12, 8, 2));
        assert!(up.data().iter().all(|&v| v == 0.6));

        let one = Tensor::from_vec(1, 1, 2, vec![1.5, -2.0]).unwrap();
        let up = upsample_bilinear(&one, 8).unwrap();
        assert_eq!(up.shape(), (8, 8, 2));
        for px in up.data().chunks_exact(2) {
            assert_eq!(px, &[1.5, -2.0]);
        }
        assert!(upsample_bilinear(&one, 3).is_err());
    }

    #[test]
    fn bn_identity_is_bitwise() {
        let t = Tensor::from_fn(3, 3, 2, |r, c, ch| (r as f32 - 1.3) * (c as f32 + 0.7) + ch as f32);
        let mut bn = BatchNorm::identity(2);
        bn.epsilon = 0.0;
        assert_eq!(bn_infer(&t, &bn).unwrap(), t);
    }

    #[test]
    fn bn_centered_input_gives_beta() {
        let bn = BatchNorm {
            gamma: vec![1.7, -0.4],
            beta: vec![0.25, -3.0],
            running_mean: vec![0.3, 0.9],
            running_var: vec![2.0, 0.5],
            epsilon: 1e-5,
        };
        let t = Tensor::from_fn(2, 3, 2, |_, _, ch| bn.running_mean[ch]);
        let out = bn_infer(&t, &bn).unwrap();
        for px in out.data().chunks_exact(2) {
            assert_eq!(px, &[0.25, -3.0]);
        }
        let mut bad = bn.clone();
        bad.running_var[0] = -1.0;
        assert!(bn_infer(&t, &bad).is_err());
        assert!(bn_infer(&Tensor::zeros(1, 1, 3), &bn).is_err());
    }

    #[test]
    fn activations() {
        let z = activate(&Tensor::zeros(2, 2, 1), Activation::Sigmoid);
        assert!(z.data().iter().all(|&v| v == 0.5));
        let neg = Tensor::filled(2, 2, 2, -1.5);
        assert!(activate(&neg, Activation::Relu).data().iter().all(|&v| v == 0.0));
        for x in [-1e4f32, -50.0, -17.0, 17.0, 50.0, 1e4] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
        }
        assert!(sigmoid(-1.0) < sigmoid(0.0) && sigmoid(0.0) < sigmoid(2.0));
    }

    #[test]
    fn concat_bookkeeping() {
        let parts: Vec<Tensor> = [16, 32, 48, 64]
            .iter()
            .enumerate()
            .map(|(i, &c)| Tensor::filled(4, 4, c, i as f32))
            .collect();
        let refs: Vec<&Tensor> = parts.iter().collect();
        let cat = concat_channels(&refs).unwrap();
        assert_eq!(cat.channels(), 160);
        let mut start = 0;
        for p in &parts {
            let end = start + p.channels();
            assert_eq!(&cat.slice_channels(start, end).unwrap(), p);
            start = end;
        }
        let odd = Tensor::zeros(3, 4, 1);
        assert!(concat_channels(&[&parts[0], &odd]).is_err());
    }

    #[test]
    fn gates_broadcast() {
        let t = Tensor::filled(2, 3, 2, 2.0);
        let cg = Tensor::from_vec(1, 1, 2, vec![0.5, 0.25]).unwrap();
        let out = t.mul_channel_gate(&cg).unwrap();
        assert_eq!(out.pixel(1, 2), &[1.0, 0.5]);
        let sg = Tensor::from_fn(2, 3, 1, |r, c, _| (r * 3 + c) as f32);
        let out = t.mul_spatial_gate(&sg).unwrap();
        assert_eq!(out.pixel(1, 1), &[8.0, 8.0]);
        assert!(t.mul_spatial_gate(&cg).is_err());
    }
}
