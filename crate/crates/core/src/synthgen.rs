//! Seeded synthetic infrared scenes with exact ground truth.
//!
//! A scene is rendered in `f64` as
//!
//! ```text
//! base + ramp_row·r + ramp_col·c + Σ clutter + Σ targets + noise
//! ```
//!
//! then clamped to `[0, 1]` and stored as `f32`. Targets are Gaussian domes
//! (or the max of two anisotropic lobes); clutter blobs are broad Gaussians
//! whose positions and parameters are drawn from the scene seed. The mask
//! holds every pixel where some target's own profile reaches half its
//! amplitude.
//!
//! # Random numbers
//!
//! All randomness comes from PCG32 (`rand_pcg::Pcg32`, the XSH-RR output
//! function over a 64-bit LCG with multiplier `6364136223846793005`). A
//! generator is created with `Pcg32::new(seed, stream)`, which fixes both the
//! state and the increment, so scenes are identical on every platform.
//! Gaussian noise uses the ziggurat sampler of `rand_distr::StandardNormal`.
//! Clutter is drawn before noise from the same generator.

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};

use crate::metrics::Mask;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Stream (increment selector) used for scene rendering.
pub const SCENE_STREAM: u64 = 0x0a02_bdbf_7bb3_c0a7;
/// Stream used to draw per-scene parameters inside a suite.
pub const SUITE_STREAM: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TargetShape {
    Isotropic,
    /// Two axis-aligned anisotropic lobes at `center ± offset / 2`, combined
    /// by pointwise max. `sigma` of the target is unused.
    TwoLobe {
        offset: (f64, f64),
        sigma_row: f64,
        sigma_col: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// `(row, col)` in pixel coordinates.
    pub center: (f64, f64),
    pub amplitude: f64,
    pub sigma: f64,
    pub shape: TargetShape,
}

impl TargetSpec {
    pub fn isotropic(center: (f64, f64), amplitude: f64, sigma: f64) -> Self {
        TargetSpec {
            center,
            amplitude,
            sigma,
            shape: TargetShape::Isotropic,
        }
    }

    /// Profile divided by amplitude, in `[0, 1]`.
    fn unit_profile(&self, r: f64, c: f64) -> f64 {
        let (cr, cc) = self.center;
        match self.shape {
            TargetShape::Isotropic => {
                let d2 = (r - cr).powi(2) + (c - cc).powi(2);
                (-d2 / (2.0 * self.sigma * self.sigma)).exp()
            }
            TargetShape::TwoLobe {
                offset,
                sigma_row,
                sigma_col,
            } => {
                let lobe = |sign: f64| {
                    let (lr, lc) = (cr + sign * offset.0 / 2.0, cc + sign * offset.1 / 2.0);
                    (-(r - lr).powi(2) / (2.0 * sigma_row * sigma_row)
                        - (c - lc).powi(2) / (2.0 * sigma_col * sigma_col))
                        .exp()
                };
                lobe(-1.0).max(lobe(1.0))
            }
        }
    }

    /// Whether pixel `(r, c)` belongs to the half-amplitude mask.
    fn covers(&self, r: f64, c: f64) -> bool {
        match self.shape {
            TargetShape::Isotropic => {
                let d2 = (r - self.center.0).powi(2) + (c - self.center.1).powi(2);
                d2 <= 2.0 * std::f64::consts::LN_2 * self.sigma * self.sigma
            }
            TargetShape::TwoLobe { .. } => self.unit_profile(r, c) >= 0.5,
        }
    }

    /// Largest distance from `center` at which the profile can reach half
    /// amplitude.
    pub fn half_extent(&self) -> f64 {
        let hw = (2.0 * std::f64::consts::LN_2).sqrt();
        match self.shape {
            TargetShape::Isotropic => hw * self.sigma,
            TargetShape::TwoLobe {
                offset,
                sigma_row,
                sigma_col,
            } => (offset.0.powi(2) + offset.1.powi(2)).sqrt() / 2.0 + hw * sigma_row.max(sigma_col),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub base: f64,
    /// Intensity change per row and per column.
    pub ramp: (f64, f64),
}

/// Broad Gaussian blobs at uniformly random positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClutterSpec {
    pub count: usize,
    pub amplitude: (f64, f64),
    pub sigma: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub targets: Vec<TargetSpec>,
    pub background: Background,
    pub clutter: ClutterSpec,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Flat scene without targets, clutter or noise.
    pub fn flat(height: usize, width: usize, base: f64) -> Self {
        SceneSpec {
            height,
            width,
            targets: Vec::new(),
            background: Background { base, ramp: (0.0, 0.0) },
            clutter: ClutterSpec::default(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("scene must be non-empty"));
        }
        let b = &self.background;
        if !(0.0..1.0).contains(&b.base) || !b.ramp.0.is_finite() || !b.ramp.1.is_finite() {
            return Err(Error::config(format!("invalid background {b:?}")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!("invalid noise sigma {}", self.noise_sigma)));
        }
        let cl = &self.clutter;
        if cl.count > 0 && !(cl.amplitude.0 <= cl.amplitude.1 && cl.sigma.0 > 0.0 && cl.sigma.0 <= cl.sigma.1) {
            return Err(Error::config(format!("invalid clutter ranges {cl:?}")));
        }
        for (i, t) in self.targets.iter().enumerate() {
            let (r, c) = t.center;
            if !(r >= 0.0 && c >= 0.0 && r < self.height as f64 && c < self.width as f64) {
                return Err(Error::config(format!(
                    "target {i} at ({r}, {c}) is outside the {}x{} image",
                    self.height, self.width
                )));
            }
            if !(t.amplitude > 0.0 && t.amplitude <= 1.0) {
                return Err(Error::config(format!(
                    "target {i} amplitude {} not in (0, 1]",
                    t.amplitude
                )));
            }
            let sigmas_ok = match t.shape {
                TargetShape::Isotropic => t.sigma > 0.0,
                TargetShape::TwoLobe {
                    sigma_row,
                    sigma_col,
                    offset,
                } => sigma_row > 0.0 && sigma_col > 0.0 && offset.0.is_finite() && offset.1.is_finite(),
            };
            if !sigmas_ok {
                return Err(Error::config(format!("target {i} has a non-positive sigma")));
            }
        }
        Ok(())
    }

    /// Smallest target amplitude over the noise level; infinite without
    /// noise, `None` without targets.
    pub fn snr(&self) -> Option<f64> {
        let a = self.targets.iter().map(|t| t.amplitude).reduce(f64::min)?;
        Some(if self.noise_sigma > 0.0 {
            a / self.noise_sigma
        } else {
            f64::INFINITY
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScene {
    pub image: Tensor,
    pub mask: Mask,
}

pub fn render_scene(spec: &SceneSpec) -> Result<LabeledScene> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = Pcg32::new(spec.seed, SCENE_STREAM);
    let cl = &spec.clutter;
    let clutter: Vec<(f64, f64, f64, f64)> = (0..cl.count)
        .map(|_| {
            let r = rng.random::<f64>() * h as f64;
            let c = rng.random::<f64>() * w as f64;
            let a = cl.amplitude.0 + rng.random::<f64>() * (cl.amplitude.1 - cl.amplitude.0);
            let s = cl.sigma.0 + rng.random::<f64>() * (cl.sigma.1 - cl.sigma.0);
            (r, c, a, s)
        })
        .collect();

    let bg = &spec.background;
    let mut data = Vec::with_capacity(h * w);
    let mut bits = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            let mut v = bg.base + bg.ramp.0 * rf + bg.ramp.1 * cf;
            for &(cr, cc, a, s) in &clutter {
                v += a * (-((rf - cr).powi(2) + (cf - cc).powi(2)) / (2.0 * s * s)).exp();
            }
            for t in &spec.targets {
                v += t.amplitude * t.unit_profile(rf, cf);
            }
            if spec.noise_sigma > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                v += spec.noise_sigma * n;
            }
            data.push(v.clamp(0.0, 1.0) as f32);
            bits.push(spec.targets.iter().any(|t| t.covers(rf, cf)));
        }
    }
    Ok(LabeledScene {
        image: Tensor::from_vec(h, w, 1, data)?,
        mask: Mask::from_bits(h, w, bits)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    /// 64×64, one isotropic target at an integer position at least 12 px
    /// from every edge, σ ~ U(1, 2), amplitude ~ U(0.3, 0.6), base ~
    /// U(0.1, 0.3), ramp components ~ U(−0.001, 0.001) per pixel, two clutter
    /// blobs (amplitude U(0.05, 0.15), σ U(4, 8)), SNR ~ U(4, 10).
    Localization,
    /// 64×64, one to three isotropic targets (σ ~ U(0.8, 2), amplitude ~
    /// U(0.2, 0.6)) at least 12 px apart and 6 px from the edges, base ~
    /// U(0.1, 0.3), four clutter blobs (amplitude U(0.05, 0.2), σ U(3, 8)),
    /// SNR ~ U(3, 8).
    Roc,
    /// 64×64, two to five targets at least 14 px apart and 6 px from the
    /// edges; each is isotropic or, with probability 1/2, two lobes with
    /// σ_row, σ_col ~ U(0.8, 1.6) and offset length ~ U(1, 2)·min σ in a
    /// random direction. Amplitude ~ U(0.3, 0.7), base ~ U(0.1, 0.3), two
    /// clutter blobs as in `Localization`, SNR ~ U(5, 10).
    MultiTarget,
}

impl std::str::FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "localization" => Ok(SuiteKind::Localization),
            "roc" => Ok(SuiteKind::Roc),
            "multi-target" | "multiTarget" | "multitarget" => Ok(SuiteKind::MultiTarget),
            _ => Err(Error::config(format!("unknown suite kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteScene {
    pub spec: SceneSpec,
    pub scene: LabeledScene,
    /// See [`SceneSpec::snr`].
    pub snr: f64,
}

pub const SUITE_SIZE: usize = 64;

fn uniform(rng: &mut Pcg32, lo: f64, hi: f64) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

/// Integer centers at least `margin` from the edges and `min_dist` apart.
fn place(rng: &mut Pcg32, n: usize, margin: usize, min_dist: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
    while out.len() < n {
        let r = rng.random_range(margin..SUITE_SIZE - margin) as f64;
        let c = rng.random_range(margin..SUITE_SIZE - margin) as f64;
        if out
            .iter()
            .all(|&(pr, pc)| ((pr - r).powi(2) + (pc - c).powi(2)).sqrt() >= min_dist)
        {
            out.push((r, c));
        }
    }
    out
}

fn suite_spec(kind: SuiteKind, rng: &mut Pcg32) -> SceneSpec {
    let seed = rng.next_u64();
    let base = uniform(rng, 0.1, 0.3);
    let (targets, ramp, clutter, snr) = match kind {
        SuiteKind::Localization => {
            let center = place(rng, 1, 12, 0.0)[0];
            let t = TargetSpec::isotropic(center, uniform(rng, 0.3, 0.6), uniform(rng, 1.0, 2.0));
            let ramp = (uniform(rng, -0.001, 0.001), uniform(rng, -0.001, 0.001));
            let clutter = ClutterSpec {
                count: 2,
                amplitude: (0.05, 0.15),
                sigma: (4.0, 8.0),
            };
            (vec![t], ramp, clutter, uniform(rng, 4.0, 10.0))
        }
        SuiteKind::Roc => {
            let n = rng.random_range(1..=3);
            let targets = place(rng, n, 6, 12.0)
                .into_iter()
                .map(|c| TargetSpec::isotropic(c, uniform(rng, 0.2, 0.6), uniform(rng, 0.8, 2.0)))
                .collect();
            let clutter = ClutterSpec {
                count: 4,
                amplitude: (0.05, 0.2),
                sigma: (3.0, 8.0),
            };
            (targets, (0.0, 0.0), clutter, uniform(rng, 3.0, 8.0))
        }
        SuiteKind::MultiTarget => {
            let n = rng.random_range(2..=5);
            let targets = place(rng, n, 6, 14.0)
                .into_iter()
                .map(|center| {
                    let amplitude = uniform(rng, 0.3, 0.7);
                    if rng.random::<bool>() {
                        let (sr, sc) = (uniform(rng, 0.8, 1.6), uniform(rng, 0.8, 1.6));
                        let len = uniform(rng, 1.0, 2.0) * sr.min(sc);
                        let angle = uniform(rng, 0.0, std::f64::consts::PI);
                        TargetSpec {
                            center,
                            amplitude,
                            sigma: sr.max(sc),
                            shape: TargetShape::TwoLobe {
                                offset: (len * angle.sin(), len * angle.cos()),
                                sigma_row: sr,
                                sigma_col: sc,
                            },
                        }
                    } else {
                        TargetSpec::isotropic(center, amplitude, uniform(rng, 0.8, 1.6))
                    }
                })
                .collect();
            let clutter = ClutterSpec {
                count: 2,
                amplitude: (0.05, 0.15),
                sigma: (4.0, 8.0),
            };
            (targets, (0.0, 0.0), clutter, uniform(rng, 5.0, 10.0))
        }
    };
    let min_amp = targets
        .iter()
        .map(|t: &TargetSpec| t.amplitude)
        .fold(f64::INFINITY, f64::min);
    SceneSpec {
        height: SUITE_SIZE,
        width: SUITE_SIZE,
        targets,
        background: Background { base, ramp },
        clutter,
        noise_sigma: min_amp / snr,
        seed,
    }
}

/// `n` scenes of one family; the same `(kind, n, seed)` always yields the
/// same suite, and a prefix of a longer suite equals the shorter suite.
pub fn make_suite(kind: SuiteKind, n: usize, seed: u64) -> Result<Vec<SuiteScene>> {
    if n == 0 {
        return Err(Error::config("suite size must be at least 1"));
    }
    let mut rng = Pcg32::new(seed, SUITE_STREAM);
    (0..n)
        .map(|_| {
            let spec = suite_spec(kind, &mut rng);
            let scene = render_scene(&spec)?;
            let snr = spec.snr().unwrap_or(f64::INFINITY);
            Ok(SuiteScene { spec, scene, snr })
        })
        .collect()
}
