//! Pixel-level and target-level detection metrics and ROC sweeps.
//!
//! Pixel metrics come from a confusion count. Target metrics label 8-connected
//! components, match predicted to ground-truth components by centroid
//! distance (greedy, nearest pair first) and count false-alarm pixels.
//! Dataset aggregates always sum numerators and denominators; they are never
//! means of per-image ratios.

use std::collections::VecDeque;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Row-major boolean image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::input(format!(
                "mask data has {} entries for {height}x{width}",
                bits.len()
            )));
        }
        Ok(Mask { height, width, bits })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Mask { height, width, bits }
    }

    /// `score >= threshold` on channel 0.
    pub fn threshold(score: &Tensor, threshold: f64) -> Self {
        Mask::from_fn(score.height(), score.width(), |r, c| {
            score.at(r, c, 0) as f64 >= threshold
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn same_dims(&self, other: &Mask) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::input(format!(
                "mask dims differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts> {
    pred.same_dims(gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits.iter().zip(&gt.bits) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelMetrics {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// IoU, precision, recall and F1. When prediction and ground truth are both
/// empty everything is 1; otherwise any `0/0` is 0.
pub fn pixel_metrics(c: &ConfusionCounts) -> PixelMetrics {
    if c.tp + c.fp + c.fn_ == 0 {
        return PixelMetrics {
            iou: 1.0,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PixelMetrics {
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
        precision,
        recall,
        f1,
    }
}

/// One 8-connected component.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    /// Pixels in raster order.
    pub pixels: Vec<(usize, usize)>,
    /// Mean `(row, col)`.
    pub centroid: (f64, f64),
}

/// Components ordered by their first pixel in raster order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TargetSet {
    pub components: Vec<Component>,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// 8-connected component labelling with float centroids.
pub fn detect_targets(mask: &Mask) -> TargetSet {
    let (h, w) = (mask.height, mask.width);
    let mut label = vec![false; h * w];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.bits[start] || label[start] {
            continue;
        }
        label[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / w, p % w);
            pixels.push((r, c));
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if mask.bits[q] && !label[q] {
                        label[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        pixels.sort_unstable();
        let n = pixels.len() as f64;
        let (sr, sc) = pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
        components.push(Component {
            pixels,
            centroid: (sr / n, sc / n),
        });
    }
    TargetSet { components }
}

/// Raw counts behind Pd and Fa; add them up across images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdFaCounts {
    /// Ground-truth targets matched by a prediction.
    pub correct: u64,
    /// Ground-truth targets.
    pub total: u64,
    /// Pixels predicted positive where the ground truth is negative.
    pub false_pixels: u64,
    pub all_pixels: u64,
}

/// A detection rate together with a flag telling whether it is vacuous
/// (no ground-truth targets at all, reported as 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRate {
    pub value: f64,
    pub vacuous: bool,
}

impl PdFaCounts {
    pub fn pd(&self) -> DetectionRate {
        if self.total == 0 {
            DetectionRate {
                value: 1.0,
                vacuous: true,
            }
        } else {
            DetectionRate {
                value: self.correct as f64 / self.total as f64,
                vacuous: false,
            }
        }
    }

    pub fn fa(&self) -> f64 {
        ratio(self.false_pixels, self.all_pixels)
    }
}

impl Add for PdFaCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        PdFaCounts {
            correct: self.correct + o.correct,
            total: self.total + o.total,
            false_pixels: self.false_pixels + o.false_pixels,
            all_pixels: self.all_pixels + o.all_pixels,
        }
    }
}

impl AddAssign for PdFaCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

pub const DEFAULT_MATCH_RADIUS: f64 = 3.0;

/// Greedy one-to-one matching: all `(gt, pred)` pairs within `radius`,
/// visited by increasing distance, ties broken by the ground-truth centroid
/// (smaller row, then col) and then the predicted centroid likewise.
/// Returns one flag per ground-truth component.
pub fn match_targets(gt: &TargetSet, pred: &TargetSet, radius: f64) -> Vec<bool> {
    let mut pairs = Vec::new();
    for (gi, g) in gt.components.iter().enumerate() {
        for (pi, p) in pred.components.iter().enumerate() {
            let d = ((g.centroid.0 - p.centroid.0).powi(2) + (g.centroid.1 - p.centroid.1).powi(2)).sqrt();
            if d <= radius {
                pairs.push((d, gi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| {
        let (ga, pa) = (&gt.components[a.1].centroid, &pred.components[a.2].centroid);
        let (gb, pb) = (&gt.components[b.1].centroid, &pred.components[b.2].centroid);
        a.0.total_cmp(&b.0)
            .then(ga.0.total_cmp(&gb.0))
            .then(ga.1.total_cmp(&gb.1))
            .then(pa.0.total_cmp(&pb.0))
            .then(pa.1.total_cmp(&pb.1))
    });
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    for (_, gi, pi) in pairs {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
        }
    }
    gt_used
}

fn false_pixels(pred: &Mask, gt: &Mask) -> u64 {
    pred.bits.iter().zip(&gt.bits).filter(|&(&p, &g)| p && !g).count() as u64
}

/// Target-level counts for one image.
pub fn pd_fa(pred: &Mask, gt: &Mask, radius: f64) -> Result<PdFaCounts> {
    pred.same_dims(gt)?;
    let gt_t = detect_targets(gt);
    let matched = match_targets(&gt_t, &detect_targets(pred), radius);
    Ok(PdFaCounts {
        correct: matched.iter().filter(|&&m| m).count() as u64,
        total: gt_t.len() as u64,
        false_pixels: false_pixels(pred, gt),
        all_pixels: pred.len() as u64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocSample {
    pub threshold: f64,
    pub pd: f64,
    pub fa: f64,
    /// Set when the dataset has no ground-truth targets.
    pub pd_vacuous: bool,
}

/// Samples ordered by strictly decreasing threshold; Pd and Fa are
/// non-decreasing along the list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub samples: Vec<RocSample>,
}

impl RocCurve {
    /// Largest Pd among operating points with `fa <= max_fa` (0 if none).
    pub fn pd_at_fa(&self, max_fa: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.fa <= max_fa)
            .map(|s| s.pd)
            .fold(0.0, f64::max)
    }

    pub fn is_monotone(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[0].threshold > w[1].threshold && w[0].pd <= w[1].pd && w[0].fa <= w[1].fa)
    }
}

/// `count` evenly spaced thresholds from 1 down to 0 inclusive.
pub fn threshold_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let steps = (count - 1) as f64;
            (0..count).map(|i| (count - 1 - i) as f64 / steps).collect()
        }
    }
}

/// Per-image counts for every threshold of a descending sweep.
///
/// A ground-truth target counts as detected at threshold `t` once it has
/// been matched at `t` or at any stricter threshold earlier in the sweep.
/// Without this latch a target can drop out at a looser threshold when its
/// component merges with clutter and the merged centroid drifts away, which
/// would make the curve non-monotone.
pub fn sweep_image(score: &Tensor, gt: &Mask, thresholds: &[f64], radius: f64) -> Result<Vec<PdFaCounts>> {
    if score.height() != gt.height || score.width() != gt.width || score.channels() != 1 {
        return Err(Error::input(format!(
            "score map {:?} does not match {}x{} mask",
            score.shape(),
            gt.height,
            gt.width
        )));
    }
    let gt_t = detect_targets(gt);
    let mut detected = vec![false; gt_t.len()];
    let mut out = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let pred = Mask::threshold(score, t);
        let matched = match_targets(&gt_t, &detect_targets(&pred), radius);
        for (d, m) in detected.iter_mut().zip(matched) {
            *d |= m;
        }
        out.push(PdFaCounts {
            correct: detected.iter().filter(|&&d| d).count() as u64,
            total: gt_t.len() as u64,
            false_pixels: false_pixels(&pred, gt),
            all_pixels: pred.len() as u64,
        });
    }
    Ok(out)
}

/// Sums per-image sweeps (in the given order) into a curve.
pub fn curve_from_sweeps(thresholds: &[f64], sweeps: &[Vec<PdFaCounts>]) -> RocCurve {
    let samples = thresholds
        .iter()
        .enumerate()
        .map(|(k, &threshold)| {
            let total = sweeps.iter().fold(PdFaCounts::default(), |acc, s| acc + s[k]);
            let pd = total.pd();
            RocSample {
                threshold,
                pd: pd.value,
                fa: total.fa(),
                pd_vacuous: pd.vacuous,
            }
        })
        .collect();
    RocCurve { samples }
}

pub fn roc_curve(scores: &[Tensor], gts: &[Mask], thresholds: &[f64], radius: f64) -> Result<RocCurve> {
    if scores.len() != gts.len() {
        return Err(Error::input(format!(
            "{} score maps for {} masks",
            scores.len(),
            gts.len()
        )));
    }
    let sweeps = scores
        .iter()
        .zip(gts)
        .map(|(s, g)| sweep_image(s, g, thresholds, radius))
        .collect::<Result<Vec<_>>>()?;
    Ok(curve_from_sweeps(thresholds, &sweeps))
}
