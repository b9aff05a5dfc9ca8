//! Surround-convergent prior extraction.
//!
//! A frozen bank of first-order Gaussian-derivative kernels at three scales
//! and 24 orientations measures squared gradient magnitude through pairs of
//! orthogonal directional derivatives. The 72 magnitude channels feed two
//! extractors:
//!
//! - CP1, a training-free single-channel saliency map (uniform channel mean,
//!   then per-image min-max normalisation);
//! - CP2, a four-level pyramid from a learnable stack of depthwise-separable
//!   convolutions with 2×2 max-pooling between levels.
//!
//! The magnitude convolutions replicate edge pixels rather than zero-pad, so
//! a flat image produces an exactly zero magnitude field and image borders do
//! not register as edges.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::tensor::{
    activate, bn_infer, concat_channels, conv2d, pool, Activation, BatchNorm, ConvKernel, ConvMode, Padding, PoolKind,
    Tensor,
};
use crate::weights::{ParamBuilder, ParamTensor, WeightStore};
use crate::{Error, Result};

pub const KERNEL_SIZES: [usize; 3] = [3, 5, 7];
pub const ORIENTATIONS: usize = 24;

/// A sampled first-order Gaussian-derivative kernel
/// `-G(x, y, σ) / σ² · (x cos θ + y sin θ)` with
/// `G = exp(-(x² + y²) / 2σ²) / sqrt(2πσ²)`.
///
/// `x` runs along columns and `y` along rows, both centred on the middle tap.
#[derive(Clone, Debug, PartialEq)]
pub struct GdKernel {
    k: usize,
    sigma: f32,
    theta: f64,
    grid: Vec<f32>,
}

impl GdKernel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sigma(&self) -> f32 {
        self.sigma
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Row-major `k×k` samples.
    pub fn grid(&self) -> &[f32] {
        &self.grid
    }

    /// Sample at offset `(x, y)` from the centre.
    pub fn at(&self, x: isize, y: isize) -> f32 {
        let r = (self.k / 2) as isize;
        self.grid[((y + r) * self.k as isize + (x + r)) as usize]
    }
}

pub fn build_gd_kernel(k: usize, sigma: f32, theta: f64) -> Result<GdKernel> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(Error::config(format!(
            "Gaussian-derivative kernel side must be odd and >= 3, got {k}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::config(format!("kernel scale must be positive, got {sigma}")));
    }
    let s = sigma as f64;
    let norm = 1.0 / (2.0 * PI * s * s).sqrt();
    let (sin, cos) = theta.sin_cos();
    let r = (k / 2) as isize;
    let mut grid = Vec::with_capacity(k * k);
    for y in -r..=r {
        for x in -r..=r {
            let (xf, yf) = (x as f64, y as f64);
            let g = norm * (-(xf * xf + yf * yf) / (2.0 * s * s)).exp();
            grid.push((-g / (s * s) * (xf * cos + yf * sin)) as f32);
        }
    }
    Ok(GdKernel { k, sigma, theta, grid })
}

/// How the Gaussian scale is chosen for each kernel side `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaRule {
    /// `σ = fraction · (k − 1)`; the default 0.25 puts ±2σ on the support edge.
    SupportFraction(f32),
    /// Same σ for every side.
    Fixed(f32),
}

impl Default for SigmaRule {
    fn default() -> Self {
        SigmaRule::SupportFraction(0.25)
    }
}

impl SigmaRule {
    pub fn sigma(self, k: usize) -> f32 {
        match self {
            SigmaRule::SupportFraction(f) => f * (k - 1) as f32,
            SigmaRule::Fixed(s) => s,
        }
    }
}

impl fmt::Display for SigmaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaRule::SupportFraction(v) => write!(f, "support:{v}"),
            SigmaRule::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for SigmaRule {
    type Err = Error;

    /// `support:<fraction>` or `fixed:<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("sigma rule `{s}`: expected support:<f> or fixed:<s>"));
        let (kind, value) = s.trim().split_once(':').ok_or_else(bad)?;
        let v: f32 = value.trim().parse().map_err(|_| bad())?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(bad());
        }
        match kind.trim() {
            "support" => Ok(SigmaRule::SupportFraction(v)),
            "fixed" => Ok(SigmaRule::Fixed(v)),
            _ => Err(bad()),
        }
    }
}

/// Frozen kernel bank: for every scale and orientation `θ_o = o · 360°/n`,
/// a primary kernel at `θ_o` and its partner at `θ_o + 90°`.
///
/// There are no mutating methods; share it freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct GdKernelBank {
    sizes: Vec<usize>,
    orientations: usize,
    rule: SigmaRule,
    primary: Vec<GdKernel>,
    partner: Vec<GdKernel>,
    /// Per scale: (primary, partner) as depthwise kernels over `orientations` channels.
    depthwise: Vec<(ConvKernel, ConvKernel)>,
}

impl GdKernelBank {
    /// Three scales (3, 5, 7) × 24 orientations.
    pub fn standard(rule: SigmaRule) -> Result<Self> {
        Self::new(&KERNEL_SIZES, ORIENTATIONS, rule)
    }

    pub fn new(sizes: &[usize], orientations: usize, rule: SigmaRule) -> Result<Self> {
        if sizes.is_empty() || orientations == 0 {
            return Err(Error::config("kernel bank needs at least one scale and orientation"));
        }
        let step = 2.0 * PI / orientations as f64;
        let mut primary = Vec::with_capacity(sizes.len() * orientations);
        let mut partner = Vec::with_capacity(sizes.len() * orientations);
        for &k in sizes {
            let sigma = rule.sigma(k);
            for o in 0..orientations {
                let theta = o as f64 * step;
                primary.push(build_gd_kernel(k, sigma, theta)?);
                partner.push(build_gd_kernel(k, sigma, theta + PI / 2.0)?);
            }
        }
        Self::assemble(sizes.to_vec(), orientations, rule, primary, partner)
    }

    fn assemble(
        sizes: Vec<usize>,
        orientations: usize,
        rule: SigmaRule,
        primary: Vec<GdKernel>,
        partner: Vec<GdKernel>,
    ) -> Result<Self> {
        let mut depthwise = Vec::with_capacity(sizes.len());
        for (s, &k) in sizes.iter().enumerate() {
            let planes = |set: &[GdKernel]| -> Vec<f32> {
                set[s * orientations..(s + 1) * orientations]
                    .iter()
                    .flat_map(|g| g.grid.iter().copied())
                    .collect()
            };
            depthwise.push((
                ConvKernel::depthwise(k, orientations, planes(&primary), None)?,
                ConvKernel::depthwise(k, orientations, planes(&partner), None)?,
            ));
        }
        Ok(GdKernelBank {
            sizes,
            orientations,
            rule,
            primary,
            partner,
            depthwise,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn scales(&self) -> usize {
        self.sizes.len()
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    pub fn sigma_rule(&self) -> SigmaRule {
        self.rule
    }

    pub fn primary(&self, scale: usize, orientation: usize) -> &GdKernel {
        &self.primary[scale * self.orientations + orientation]
    }

    pub fn partner(&self, scale: usize, orientation: usize) -> &GdKernel {
        &self.partner[scale * self.orientations + orientation]
    }

    pub fn kernels(&self) -> impl Iterator<Item = &GdKernel> {
        self.primary.iter().chain(&self.partner)
    }

    fn name(scale: usize, orientation: usize) -> String {
        format!("gdbank/s{scale}/o{orientation}")
    }

    /// Exports every kernel as a `[k, k]` entry named `gdbank/s{scale}/o{orient}`
    /// (primary) and `gdbank/s{scale}/o{orient}/partner`.
    pub fn to_store(&self) -> WeightStore {
        let mut store = WeightStore::new();
        for s in 0..self.scales() {
            let k = self.sizes[s];
            for o in 0..self.orientations {
                let base = Self::name(s, o);
                let p = ParamTensor::new(vec![k, k], self.primary(s, o).grid.clone()).unwrap();
                let q = ParamTensor::new(vec![k, k], self.partner(s, o).grid.clone()).unwrap();
                store.insert(base.clone(), p).unwrap();
                store.insert(format!("{base}/partner"), q).unwrap();
            }
        }
        store
    }

    /// Rebuilds a bank from exported grids. Orientation count and sizes are
    /// read from the names and dims; `rule` is recorded as metadata only.
    pub fn from_store(store: &WeightStore, rule: SigmaRule) -> Result<Self> {
        let mut sizes = Vec::new();
        while let Some(t) = store.get(&Self::name(sizes.len(), 0)) {
            sizes.push(t.dims()[0]);
        }
        let mut orientations = 0;
        while store.get(&Self::name(0, orientations)).is_some() {
            orientations += 1;
        }
        if sizes.is_empty() {
            return Err(Error::MissingWeight(Self::name(0, 0)));
        }
        let step = 2.0 * PI / orientations as f64;
        let mut primary = Vec::new();
        let mut partner = Vec::new();
        let mut seen = HashSet::new();
        for (s, &k) in sizes.iter().enumerate() {
            for o in 0..orientations {
                let theta = o as f64 * step;
                for (name, theta, set) in [
                    (Self::name(s, o), theta, &mut primary),
                    (format!("{}/partner", Self::name(s, o)), theta + PI / 2.0, &mut partner),
                ] {
                    let t = store.get(&name).ok_or_else(|| Error::MissingWeight(name.clone()))?;
                    if t.dims() != [k, k] {
                        return Err(Error::WeightShape {
                            name,
                            expected: vec![k, k],
                            found: t.dims().to_vec(),
                        });
                    }
                    set.push(GdKernel {
                        k,
                        sigma: rule.sigma(k),
                        theta,
                        grid: t.data().to_vec(),
                    });
                    seen.insert(name);
                }
            }
        }
        if let Some(extra) = store.names().find(|n| !seen.contains(*n)) {
            return Err(Error::UnexpectedWeight(extra.to_string()));
        }
        Self::assemble(sizes, orientations, rule, primary, partner)
    }
}

fn require_single_channel(image: &Tensor) -> Result<()> {
    if image.channels() != 1 {
        return Err(Error::config(format!(
            "expected a single-channel image, got {} channels",
            image.channels()
        )));
    }
    Ok(())
}

/// Squared orthogonal-pair responses at one scale: channel `o` holds
/// `(GD_θo ⋆ I)² + (GD_θo+90° ⋆ I)²`, computed as two depthwise
/// convolutions over the image replicated to one channel per orientation.
pub fn gradient_magnitude(image: &Tensor, bank: &GdKernelBank, scale: usize) -> Result<Tensor> {
    require_single_channel(image)?;
    let (primary, partner) = bank
        .depthwise
        .get(scale)
        .ok_or_else(|| Error::config(format!("scale index {scale} out of range")))?;
    let stacked = image.repeat_channels(bank.orientations)?;
    let pad = Padding::Replicate(primary.k() / 2);
    let a = conv2d(&stacked, primary, pad)?;
    let b = conv2d(&stacked, partner, pad)?;
    a.zip_map(&b, |a, b| {
        let (a, b) = (a as f64, b as f64);
        (a * a + b * b) as f32
    })
}

/// All scales concatenated along channels (`scales × orientations` channels).
pub fn magnitude_stack(image: &Tensor, bank: &GdKernelBank) -> Result<Tensor> {
    let parts = (0..bank.scales())
        .map(|s| gradient_magnitude(image, bank, s))
        .collect::<Result<Vec<_>>>()?;
    concat_channels(&parts.iter().collect::<Vec<_>>())
}

/// Maps values affinely onto `[0, 1]`; a constant tensor becomes all zeros.
pub fn min_max_normalize(t: &Tensor) -> Tensor {
    let (lo, hi) = (t.min_value() as f64, t.max_value() as f64);
    if !(hi > lo) {
        return Tensor::zeros(t.height(), t.width(), t.channels());
    }
    let span = hi - lo;
    t.map(|v| ((v as f64 - lo) / span) as f32)
}

/// CP1 from a precomputed magnitude stack: frozen uniform pointwise
/// reduction to one channel, then min-max normalisation.
pub fn cp1_from_magnitudes(magnitudes: &Tensor) -> Result<Tensor> {
    let n = magnitudes.channels();
    let reduce = ConvKernel::pointwise(n, 1, vec![1.0 / n as f32; n], None)?;
    let mean = conv2d(magnitudes, &reduce, Padding::Zero(0))?;
    Ok(min_max_normalize(&mean))
}

pub fn extract_cp1(image: &Tensor, bank: &GdKernelBank) -> Result<Tensor> {
    cp1_from_magnitudes(&magnitude_stack(image, bank)?)
}

/// One depthwise-separable stage: DW 3×3 → PW → BN → ReLU.
#[derive(Clone, Debug)]
pub struct SeparableBlock {
    pub dw: ConvKernel,
    pub pw: ConvKernel,
    pub bn: BatchNorm,
}

impl SeparableBlock {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = conv2d(x, &self.dw, Padding::same(3))?;
        let y = conv2d(&y, &self.pw, Padding::Zero(0))?;
        Ok(activate(&bn_infer(&y, &self.bn)?, Activation::Relu))
    }
}

/// Learnable CP2 extractor. Level 0 maps the magnitude stack to `C`
/// channels; level `i` pools and maps `i·C` to `(i+1)·C`.
#[derive(Clone, Debug)]
pub struct Pke2Params {
    pub levels: Vec<SeparableBlock>,
}

impl Pke2Params {
    pub(crate) fn build(pb: &mut ParamBuilder<'_>, magnitude_channels: usize, base_channels: usize) -> Result<Self> {
        let mut levels = Vec::with_capacity(4);
        for i in 0..4 {
            let cin = if i == 0 { magnitude_channels } else { i * base_channels };
            let cout = (i + 1) * base_channels;
            let p = format!("pke2/l{i}");
            levels.push(SeparableBlock {
                dw: pb.conv(&format!("{p}/dw"), ConvMode::Depthwise, 3, cin, cin, true)?,
                pw: pb.conv(&format!("{p}/pw"), ConvMode::Pointwise, 1, cin, cout, true)?,
                bn: pb.bn(&format!("{p}/bn"), cout)?,
            });
        }
        Ok(Pke2Params { levels })
    }

    /// Reads the `pke2/…` entries of a store (other entries are ignored).
    pub fn from_store(store: &WeightStore, base_channels: usize) -> Result<Self> {
        let mut pb = ParamBuilder::reader(store);
        Self::build(&mut pb, KERNEL_SIZES.len() * ORIENTATIONS, base_channels)
    }
}

pub fn cp2_from_magnitudes(magnitudes: &Tensor, params: &Pke2Params) -> Result<Vec<Tensor>> {
    let mut levels: Vec<Tensor> = Vec::with_capacity(params.levels.len());
    for (i, block) in params.levels.iter().enumerate() {
        let input = match levels.last() {
            None => magnitudes.clone(),
            Some(prev) => pool(prev, PoolKind::Max2)?,
        };
        if i == 0 && input.channels() != block.dw.in_channels() {
            return Err(Error::config(format!(
                "CP2 extractor expects {} magnitude channels, got {}",
                block.dw.in_channels(),
                input.channels()
            )));
        }
        levels.push(block.forward(&input)?);
    }
    Ok(levels)
}

pub fn extract_cp2(image: &Tensor, bank: &GdKernelBank, params: &Pke2Params) -> Result<Vec<Tensor>> {
    cp2_from_magnitudes(&magnitude_stack(image, bank)?, params)
}

/// CP1 saliency map plus the CP2 pyramid.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorPack {
    pub cp1: Tensor,
    pub cp2: Vec<Tensor>,
}

/// Computes both priors from one shared magnitude stack.
pub fn extract_priors(image: &Tensor, bank: &GdKernelBank, params: &Pke2Params) -> Result<PriorPack> {
    let m = magnitude_stack(image, bank)?;
    Ok(PriorPack {
        cp1: cp1_from_magnitudes(&m)?,
        cp2: cp2_from_magnitudes(&m, params)?,
    })
}
