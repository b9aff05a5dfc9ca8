//! Full forward pass: priors, nested backbone, prior fusion and the
//! attention-guided head.
//!
//! ```text
//! image ──► magnitudes ──► CP1 ─┐
//!   │            └──► CP2_0..3  │
//!   └───────── concat ◄─────────┘
//!                │
//!              DNIM ──► f_0..f_3 ──► CHKIM(f_i, CP2_i) ──► k_0..k_3 ──► AGFEM ──► F
//! ```
//!
//! All learnable parameters live in a [`WeightStore`]; [`NetConfig::layout`]
//! lists every required name. Level `i` of every pyramid has spatial size
//! `H/2^i × W/2^i` and `(i+1)·C` channels.

mod agfem;
mod chkim;
mod dnim;

pub use agfem::{agfem, dafwm, AgfemParams, DafwmParams};
pub use chkim::{bottom_up_gate, chkim_fuse, embed, top_down_gate, BottomUpParams, ChkimParams, TopDownParams};
pub use dnim::{dnim_forward, DnimParams, DoubleConv};

use crate::scpem::{extract_priors, GdKernelBank, Pke2Params, PriorPack, KERNEL_SIZES, ORIENTATIONS};
use crate::tensor::{concat_channels, Tensor};
use crate::weights::{ParamBuilder, ParamSpec, WeightStore};
use crate::{Error, Result};

pub const LEVELS: usize = 4;

/// Channel reductions of the gating blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModulationConfig {
    /// Reduction of the top-down (global) gate's hidden layer.
    pub r_top_down: usize,
    /// Reduction of the channel-attention MLP in the head.
    pub r_dafwm: usize,
    /// Bottom-up gate bottleneck is fixed at a quarter of the channels; when
    /// false it uses `r_top_down` instead.
    pub bottom_up_quarter: bool,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        ModulationConfig {
            r_top_down: 4,
            r_dafwm: 4,
            bottom_up_quarter: true,
        }
    }
}

impl ModulationConfig {
    pub fn bottom_up_ratio(&self) -> usize {
        if self.bottom_up_quarter {
            4
        } else {
            self.r_top_down
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub base_channels: usize,
    pub modulation: ModulationConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig::new(16)
    }
}

impl NetConfig {
    pub fn new(base_channels: usize) -> Self {
        NetConfig {
            base_channels,
            modulation: ModulationConfig::default(),
        }
    }

    /// Channels at pyramid level `i`.
    pub fn level_channels(&self, i: usize) -> usize {
        (i + 1) * self.base_channels
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.modulation;
        if self.base_channels == 0 || m.r_top_down == 0 || m.r_dafwm == 0 {
            return Err(Error::config("channel counts and ratios must be positive"));
        }
        for i in 0..LEVELS {
            let c = self.level_channels(i);
            if c < m.bottom_up_ratio() {
                return Err(Error::config(format!(
                    "level {i} has {c} channels, bottom-up bottleneck needs at least {}",
                    m.bottom_up_ratio()
                )));
            }
            for (what, r) in [("top-down", m.r_top_down), ("bottom-up", m.bottom_up_ratio())] {
                if !c.is_multiple_of(r) {
                    return Err(Error::config(format!(
                        "{what} reduction {r} does not divide {c} channels at level {i}"
                    )));
                }
            }
        }
        if !self.base_channels.is_multiple_of(m.r_dafwm) {
            return Err(Error::config(format!(
                "attention reduction {} does not divide {} channels",
                m.r_dafwm, self.base_channels
            )));
        }
        Ok(())
    }

    /// Every parameter the network reads, in file order.
    pub fn layout(&self) -> Result<Vec<ParamSpec>> {
        let mut pb = ParamBuilder::recorder();
        CspeNet::build(&mut pb, *self)?;
        Ok(pb.into_layout())
    }

    /// Recovers channel counts and ratios from parameter dims.
    pub fn infer(store: &WeightStore) -> Result<NetConfig> {
        let dim0 = |name: &str| {
            store
                .get(name)
                .map(|t| t.dims()[0])
                .ok_or_else(|| Error::MissingWeight(name.to_string()))
        };
        let c = dim0("dnim/n0_0/conv0/w")?;
        let td = dim0("chkim/l0/td/fc1/w")?;
        let bu = dim0("chkim/l0/bu/pw1/w")?;
        let ca = dim0("agfem/dafwm/fc1/w")?;
        if c == 0 || td == 0 || bu == 0 || ca == 0 || c % td != 0 || c % ca != 0 || c % bu != 0 {
            return Err(Error::config("weight dims do not describe a valid network"));
        }
        let r_top_down = c / td;
        let bottom_up_quarter = c / bu == 4;
        if !bottom_up_quarter && c / bu != r_top_down {
            return Err(Error::config(format!(
                "bottom-up bottleneck {bu} is neither C/4 nor C/r for C = {c}"
            )));
        }
        let cfg = NetConfig {
            base_channels: c,
            modulation: ModulationConfig {
                r_top_down,
                r_dafwm: c / ca,
                bottom_up_quarter,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Decoder features `f_i` and fused features `k_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub f: Vec<Tensor>,
    pub k: Vec<Tensor>,
}

/// Everything the forward pass produced, for inspection and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub priors: PriorPack,
    pub features: FeatureSet,
    pub output: Tensor,
}

/// Typed parameters of the whole network.
#[derive(Clone, Debug)]
pub struct CspeNet {
    cfg: NetConfig,
    pub pke2: Pke2Params,
    pub dnim: DnimParams,
    pub chkim: Vec<ChkimParams>,
    pub agfem: AgfemParams,
}

impl CspeNet {
    fn build(pb: &mut ParamBuilder<'_>, cfg: NetConfig) -> Result<Self> {
        cfg.validate()?;
        let pke2 = Pke2Params::build(pb, KERNEL_SIZES.len() * ORIENTATIONS, cfg.base_channels)?;
        let dnim = DnimParams::build(pb, 2, cfg.base_channels)?;
        let chkim = (0..LEVELS)
            .map(|i| ChkimParams::build(pb, i, cfg.level_channels(i), &cfg.modulation))
            .collect::<Result<Vec<_>>>()?;
        let agfem = AgfemParams::build(pb, cfg.base_channels, cfg.modulation.r_dafwm)?;
        Ok(CspeNet {
            cfg,
            pke2,
            dnim,
            chkim,
            agfem,
        })
    }

    /// Loads every parameter; missing, misshapen or unknown entries are errors.
    pub fn from_store(store: &WeightStore, cfg: NetConfig) -> Result<Self> {
        let mut pb = ParamBuilder::reader(store);
        let net = Self::build(&mut pb, cfg)?;
        pb.finish(&[])?;
        Ok(net)
    }

    /// Like [`CspeNet::from_store`] with the configuration read off the dims.
    pub fn from_store_inferred(store: &WeightStore) -> Result<Self> {
        Self::from_store(store, NetConfig::infer(store)?)
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn forward(&self, image: &Tensor, bank: &GdKernelBank) -> Result<Tensor> {
        Ok(self.forward_trace(image, bank)?.output)
    }

    pub fn forward_trace(&self, image: &Tensor, bank: &GdKernelBank) -> Result<ForwardTrace> {
        if image.channels() != 1 {
            return Err(Error::config(format!(
                "network input must be single-channel, got {}",
                image.channels()
            )));
        }
        check_divisible(image)?;
        let priors = extract_priors(image, bank, &self.pke2)?;
        let stacked = concat_channels(&[image, &priors.cp1])?;
        let f = dnim_forward(&stacked, &self.dnim)?;
        let k = f
            .iter()
            .zip(&priors.cp2)
            .zip(&self.chkim)
            .map(|((f, cp2), p)| chkim_fuse(f, cp2, p))
            .collect::<Result<Vec<_>>>()?;
        let output = agfem(&k, &self.agfem)?;
        Ok(ForwardTrace {
            priors,
            features: FeatureSet { f, k },
            output,
        })
    }
}

pub(crate) fn check_divisible(t: &Tensor) -> Result<()> {
    let div = 1 << (LEVELS - 1);
    if !t.height().is_multiple_of(div) || !t.width().is_multiple_of(div) || t.height() == 0 || t.width() == 0 {
        return Err(Error::config(format!(
            "input {}x{} is not divisible by {div}",
            t.height(),
            t.width()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scpem::SigmaRule;

    #[test]
    fn config_validation() {
        assert!(NetConfig::new(16).validate().is_ok());
        assert!(NetConfig::new(8).validate().is_ok());
        assert!(NetConfig::new(2).validate().is_err());
        let mut cfg = NetConfig::new(6);
        assert!(cfg.validate().is_err());
        cfg.modulation.r_top_down = 3;
        cfg.modulation.bottom_up_quarter = false;
        cfg.modulation.r_dafwm = 2;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn layout_names_are_unique_and_follow_scheme() {
        let layout = NetConfig::new(8).layout().unwrap();
        let mut names: Vec<_> = layout.iter().map(|s| s.name.clone()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        for want in [
            "dnim/n0_0/conv0/w",
            "dnim/n1_2/bn1/var",
            "dnim/n3_0/conv1/b",
            "chkim/l3/td/fc1/w",
            "chkim/l0/bu/bn2/gamma",
            "pke2/l2/pw/w",
            "agfem/head/b",
        ] {
            assert!(names.iter().any(|s| s == want), "{want}");
        }
        assert!(!names.iter().any(|s| s.starts_with("dnim/n1_3")));
    }

    #[test]
    fn infer_recovers_config() {
        for cfg in [NetConfig::new(8), NetConfig::new(16)] {
            let store = WeightStore::zeros(&cfg.layout().unwrap());
            assert_eq!(NetConfig::infer(&store).unwrap(), cfg);
        }
    }

    #[test]
    fn rejects_indivisible_input() {
        let cfg = NetConfig::new(8);
        let net = CspeNet::from_store(&WeightStore::zeros(&cfg.layout().unwrap()), cfg).unwrap();
        let bank = GdKernelBank::standard(SigmaRule::default()).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros(12, 16, 1), &bank),
            Err(Error::Config(_))
        ));
    }
}
