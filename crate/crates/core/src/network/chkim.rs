//! Cross-level fusion of decoder features with the CP2 prior.
//!
//! `k = G(f) ⊗ E(cp2) + L(E(cp2)) ⊗ f` where `G` is a global top-down
//! channel gate, `L` a pointwise bottom-up gate and `E` a shape-preserving
//! depthwise + pointwise embedding of the prior.

use crate::tensor::{
    activate, bn_infer, conv2d, pool, Activation, BatchNorm, ConvKernel, ConvMode, Padding, PoolKind, Tensor,
};
use crate::weights::ParamBuilder;
use crate::{Error, Result};

use super::ModulationConfig;

/// `sigmoid(BN(W₂ · ReLU(BN(W₁ · GAP(Y)))))`; `fc1`/`fc2` are bias-free
/// dense layers `C → C/r → C`.
#[derive(Clone, Debug)]
pub struct TopDownParams {
    pub fc1: ConvKernel,
    pub bn1: BatchNorm,
    pub fc2: ConvKernel,
    pub bn2: BatchNorm,
}

/// `sigmoid(BN(PW₂(ReLU(BN(PW₁(X))))))` with a `C → C/4 → C` bottleneck.
#[derive(Clone, Debug)]
pub struct BottomUpParams {
    pub pw1: ConvKernel,
    pub bn1: BatchNorm,
    pub pw2: ConvKernel,
    pub bn2: BatchNorm,
}

#[derive(Clone, Debug)]
pub struct ChkimParams {
    pub embed_dw: ConvKernel,
    pub embed_pw: ConvKernel,
    pub top_down: TopDownParams,
    pub bottom_up: BottomUpParams,
}

fn reduced(channels: usize, ratio: usize, what: &str) -> Result<usize> {
    if ratio == 0 || !channels.is_multiple_of(ratio) || channels < ratio {
        return Err(Error::config(format!(
            "{what} reduction {ratio} does not divide {channels} channels"
        )));
    }
    Ok(channels / ratio)
}

impl ChkimParams {
    pub(crate) fn build(
        pb: &mut ParamBuilder<'_>,
        level: usize,
        channels: usize,
        m: &ModulationConfig,
    ) -> Result<Self> {
        let p = format!("chkim/l{level}");
        let td = reduced(channels, m.r_top_down, "top-down")?;
        let bu = reduced(channels, m.bottom_up_ratio(), "bottom-up")?;
        Ok(ChkimParams {
            embed_dw: pb.conv(&format!("{p}/e_dw"), ConvMode::Depthwise, 3, channels, channels, true)?,
            embed_pw: pb.conv(&format!("{p}/e_pw"), ConvMode::Pointwise, 1, channels, channels, true)?,
            top_down: TopDownParams {
                fc1: pb.dense(&format!("{p}/td/fc1"), channels, td, false)?,
                bn1: pb.bn(&format!("{p}/td/bn1"), td)?,
                fc2: pb.dense(&format!("{p}/td/fc2"), td, channels, false)?,
                bn2: pb.bn(&format!("{p}/td/bn2"), channels)?,
            },
            bottom_up: BottomUpParams {
                pw1: pb.conv(&format!("{p}/bu/pw1"), ConvMode::Pointwise, 1, channels, bu, false)?,
                bn1: pb.bn(&format!("{p}/bu/bn1"), bu)?,
                pw2: pb.conv(&format!("{p}/bu/pw2"), ConvMode::Pointwise, 1, bu, channels, false)?,
                bn2: pb.bn(&format!("{p}/bu/bn2"), channels)?,
            },
        })
    }
}

/// Channel gate `1×1×C` from global context; the caller broadcasts it.
pub fn top_down_gate(y: &Tensor, p: &TopDownParams) -> Result<Tensor> {
    if y.channels() != p.fc1.in_channels() {
        return Err(Error::config(format!(
            "top-down gate expects {} channels, got {}",
            p.fc1.in_channels(),
            y.channels()
        )));
    }
    let ctx = pool(y, PoolKind::GlobalAvg)?;
    let h = bn_infer(&conv2d(&ctx, &p.fc1, Padding::Zero(0))?, &p.bn1)?;
    let h = activate(&h, Activation::Relu);
    let g = bn_infer(&conv2d(&h, &p.fc2, Padding::Zero(0))?, &p.bn2)?;
    Ok(activate(&g, Activation::Sigmoid))
}

/// Per-pixel gate with the same shape as `x`.
pub fn bottom_up_gate(x: &Tensor, p: &BottomUpParams) -> Result<Tensor> {
    if x.channels() < 4 {
        return Err(Error::config(format!(
            "bottom-up gate needs at least 4 channels, got {}",
            x.channels()
        )));
    }
    if x.channels() != p.pw1.in_channels() {
        return Err(Error::config(format!(
            "bottom-up gate expects {} channels, got {}",
            p.pw1.in_channels(),
            x.channels()
        )));
    }
    let h = bn_infer(&conv2d(x, &p.pw1, Padding::Zero(0))?, &p.bn1)?;
    let h = activate(&h, Activation::Relu);
    let g = bn_infer(&conv2d(&h, &p.pw2, Padding::Zero(0))?, &p.bn2)?;
    Ok(activate(&g, Activation::Sigmoid))
}

/// `E(cp2) = PW(DW3×3(cp2))`.
pub fn embed(cp2: &Tensor, p: &ChkimParams) -> Result<Tensor> {
    let y = conv2d(cp2, &p.embed_dw, Padding::same(3))?;
    conv2d(&y, &p.embed_pw, Padding::Zero(0))
}

pub fn chkim_fuse(f: &Tensor, cp2: &Tensor, p: &ChkimParams) -> Result<Tensor> {
    if f.shape() != cp2.shape() {
        return Err(Error::config(format!(
            "fusion inputs differ in shape: {:?} vs {:?}",
            f.shape(),
            cp2.shape()
        )));
    }
    let e = embed(cp2, p)?;
    let global = e.mul_channel_gate(&top_down_gate(f, &p.top_down)?)?;
    let local = bottom_up_gate(&e, &p.bottom_up)?.mul(f)?;
    global.add(&local)
}
