//! Classical single-frame saliency maps: white Top-hat and the multiscale
//! patch-based contrast measure (MPCM). Both return `[0, 1]` maps with the
//! same min-max rule as CP1, so they drop into the same evaluation harness.

use crate::scpem::min_max_normalize;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeShape {
    Square,
    Disk,
}

/// Flat structuring element on a `(2r+1)×(2r+1)` grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
    shape: SeShape,
    footprint: Vec<bool>,
}

pub const DEFAULT_TOP_HAT_RADIUS: usize = 4;
pub const DEFAULT_MPCM_SCALES: [usize; 3] = [3, 5, 7];

impl StructuringElement {
    pub fn new(shape: SeShape, radius: usize) -> Self {
        let k = 2 * radius + 1;
        let r = radius as isize;
        let footprint = (0..k * k)
            .map(|i| {
                let (dy, dx) = ((i / k) as isize - r, (i % k) as isize - r);
                match shape {
                    SeShape::Square => true,
                    SeShape::Disk => dy * dy + dx * dx <= r * r,
                }
            })
            .collect();
        StructuringElement {
            radius,
            shape,
            footprint,
        }
    }

    pub fn disk(radius: usize) -> Self {
        Self::new(SeShape::Disk, radius)
    }

    pub fn square(radius: usize) -> Self {
        Self::new(SeShape::Square, radius)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn shape(&self) -> SeShape {
        self.shape
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    /// Row-major `size × size` footprint.
    pub fn footprint(&self) -> &[bool] {
        &self.footprint
    }

    /// Offsets `(dy, dx)` covered by the footprint.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let k = self.size();
        let r = self.radius as isize;
        (0..k * k)
            .filter(|&i| self.footprint[i])
            .map(|i| ((i / k) as isize - r, (i % k) as isize - r))
            .collect()
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self::disk(DEFAULT_TOP_HAT_RADIUS)
    }
}

fn require_gray(image: &Tensor) -> Result<()> {
    if image.channels() != 1 || image.height() == 0 || image.width() == 0 {
        return Err(Error::config(format!(
            "expected a non-empty single-channel image, got {:?}",
            image.shape()
        )));
    }
    Ok(())
}

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

fn rank_filter(image: &Tensor, offsets: &[(isize, isize)], take_max: bool) -> Tensor {
    let (h, w) = (image.height(), image.width());
    Tensor::from_fn(h, w, 1, |r, c, _| {
        let values = offsets
            .iter()
            .map(|&(dy, dx)| image.at(clamp_index(r as isize + dy, h), clamp_index(c as isize + dx, w), 0));
        if take_max {
            values.fold(f32::NEG_INFINITY, f32::max)
        } else {
            values.fold(f32::INFINITY, f32::min)
        }
    })
}

/// Grey-level erosion with edge replication.
pub fn erode(image: &Tensor, se: &StructuringElement) -> Tensor {
    rank_filter(image, &se.offsets(), false)
}

/// Grey-level dilation with edge replication.
pub fn dilate(image: &Tensor, se: &StructuringElement) -> Tensor {
    rank_filter(image, &se.offsets(), true)
}

pub fn opening(image: &Tensor, se: &StructuringElement) -> Tensor {
    dilate(&erode(image, se), se)
}

/// `max(image − opening, 0)` before normalisation.
pub fn top_hat_raw(image: &Tensor, se: &StructuringElement) -> Result<Tensor> {
    require_gray(image)?;
    if 2 * se.radius() >= image.height().min(image.width()) {
        return Err(Error::config(format!(
            "structuring element radius {} too large for {}x{} image",
            se.radius(),
            image.height(),
            image.width()
        )));
    }
    image.zip_map(&opening(image, se), |v, o| (v - o).max(0.0))
}

pub fn top_hat(image: &Tensor, se: &StructuringElement) -> Result<Tensor> {
    Ok(min_max_normalize(&top_hat_raw(image, se)?))
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(image: &Tensor) -> Self {
        let (h, w) = (image.height(), image.width());
        let mut sums = vec![0.0; (h + 1) * (w + 1)];
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += image.at(r, c, 0) as f64;
                sums[(r + 1) * (w + 1) + c + 1] = sums[r * (w + 1) + c + 1] + row;
            }
        }
        Integral { w: w + 1, sums }
    }

    /// Sum over rows `r0..r1`, cols `c0..c1`.
    fn rect(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
        self.sums[r1 * self.w + c1] + self.sums[r0 * self.w + c0]
            - self.sums[r0 * self.w + c1]
            - self.sums[r1 * self.w + c0]
    }
}

/// Cell offsets (in cells) of the surround, clockwise from top-left, so that
/// cell `i` and cell `i + 4` are on opposite sides of the centre.
pub const MPCM_CELLS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)];

/// Mean of the `s×s` cell whose top-left corner is at `(r0, c0)`, reading
/// out-of-image pixels from the nearest edge.
fn cell_mean(image: &Tensor, integral: &Integral, r0: isize, c0: isize, s: usize) -> f64 {
    let (h, w) = (image.height() as isize, image.width() as isize);
    let s_i = s as isize;
    if r0 >= 0 && c0 >= 0 && r0 + s_i <= h && c0 + s_i <= w {
        let (r0, c0) = (r0 as usize, c0 as usize);
        return integral.rect(r0, c0, r0 + s, c0 + s) / (s * s) as f64;
    }
    let mut sum = 0.0;
    for dy in 0..s_i {
        for dx in 0..s_i {
            sum += image.at(clamp_index(r0 + dy, h as usize), clamp_index(c0 + dx, w as usize), 0) as f64;
        }
    }
    sum / (s * s) as f64
}

/// Contrast at one scale: `min_i (m0 − m_i)(m0 − m_{i+4})` over the four
/// opposing pairs of the 3×3 cell grid with cell side `s`.
pub fn mpcm_scale(image: &Tensor, s: usize) -> Result<Tensor> {
    require_gray(image)?;
    if s == 0 || s.is_multiple_of(2) {
        return Err(Error::config(format!("patch size {s} must be odd and positive")));
    }
    let integral = Integral::new(image);
    let half = (s / 2) as isize;
    let s_i = s as isize;
    Ok(Tensor::from_fn(image.height(), image.width(), 1, |r, c, _| {
        let (r0, c0) = (r as isize - half, c as isize - half);
        let m0 = cell_mean(image, &integral, r0, c0, s);
        let m: Vec<f64> = MPCM_CELLS
            .iter()
            .map(|&(dy, dx)| cell_mean(image, &integral, r0 + dy * s_i, c0 + dx * s_i, s))
            .collect();
        (0..4)
            .map(|i| (m0 - m[i]) * (m0 - m[i + 4]))
            .fold(f64::INFINITY, f64::min) as f32
    }))
}

/// Max over scales, negatives clamped to 0, before normalisation.
pub fn mpcm_raw(image: &Tensor, scales: &[usize]) -> Result<Tensor> {
    if scales.is_empty() {
        return Err(Error::config("at least one patch size is required"));
    }
    let mut out = Tensor::zeros(image.height(), image.width(), 1);
    for &s in scales {
        let d = mpcm_scale(image, s)?;
        out = out.zip_map(&d, f32::max)?;
    }
    Ok(out)
}

pub fn mpcm(image: &Tensor, scales: &[usize]) -> Result<Tensor> {
    Ok(min_max_normalize(&mpcm_raw(image, scales)?))
}
