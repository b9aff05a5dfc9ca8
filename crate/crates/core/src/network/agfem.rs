//! Pyramid mixing, dual attention and the residual output head.

use crate::tensor::{
    activate, bn_infer, concat_channels, conv2d, pool, sigmoid, upsample_bilinear, Activation, BatchNorm, ConvKernel,
    ConvMode, Padding, PoolKind, Tensor,
};
use crate::weights::ParamBuilder;
use crate::{Error, Result};

use super::LEVELS;

/// Channel attention (shared one-hidden-layer MLP over max- and
/// average-pooled descriptors) and spatial attention (7×7 conv over the
/// per-pixel channel max and mean, in that order).
#[derive(Clone, Debug)]
pub struct DafwmParams {
    pub fc1: ConvKernel,
    pub fc2: ConvKernel,
    pub spatial: ConvKernel,
}

#[derive(Clone, Debug)]
pub struct AgfemParams {
    /// 3×3 convs `(i+1)C → C` for levels 1..3.
    pub mix: Vec<ConvKernel>,
    /// 3×3 conv `4C → C` producing `G'`.
    pub pre: ConvKernel,
    pub dafwm: DafwmParams,
    /// Residual branch `BN(PW(G))`, `4C → C`.
    pub res_pw: ConvKernel,
    pub res_bn: BatchNorm,
    /// Final `C → 1` pointwise conv.
    pub head: ConvKernel,
}

impl AgfemParams {
    pub(crate) fn build(pb: &mut ParamBuilder<'_>, c: usize, r_dafwm: usize) -> Result<Self> {
        if r_dafwm == 0 || !c.is_multiple_of(r_dafwm) {
            return Err(Error::config(format!(
                "attention reduction {r_dafwm} does not divide {c} channels"
            )));
        }
        let hidden = c / r_dafwm;
        let mix = (1..LEVELS)
            .map(|i| pb.conv(&format!("agfem/mix{i}"), ConvMode::General, 3, (i + 1) * c, c, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(AgfemParams {
            mix,
            pre: pb.conv("agfem/pre", ConvMode::General, 3, LEVELS * c, c, true)?,
            dafwm: DafwmParams {
                fc1: pb.dense("agfem/dafwm/fc1", c, hidden, true)?,
                fc2: pb.dense("agfem/dafwm/fc2", hidden, c, true)?,
                spatial: pb.conv("agfem/dafwm/spatial", ConvMode::General, 7, 2, 1, true)?,
            },
            res_pw: pb.conv("agfem/res/pw", ConvMode::Pointwise, 1, LEVELS * c, c, true)?,
            res_bn: pb.bn("agfem/res/bn", c)?,
            head: pb.conv("agfem/head", ConvMode::Pointwise, 1, c, 1, true)?,
        })
    }
}

fn mlp(x: &Tensor, p: &DafwmParams) -> Result<Tensor> {
    let h = activate(&conv2d(x, &p.fc1, Padding::Zero(0))?, Activation::Relu);
    conv2d(&h, &p.fc2, Padding::Zero(0))
}

/// `G_F = (M_c ⊗ M_s) ⊗ G'`.
pub fn dafwm(g: &Tensor, p: &DafwmParams) -> Result<Tensor> {
    let mc = mlp(&pool(g, PoolKind::GlobalMax)?, p)?
        .add(&mlp(&pool(g, PoolKind::GlobalAvg)?, p)?)?
        .map(sigmoid);
    let desc = concat_channels(&[&g.channel_max(), &g.channel_mean()])?;
    let ms = activate(&conv2d(&desc, &p.spatial, Padding::same(7))?, Activation::Sigmoid);

    let c = g.channels();
    let mut data = Vec::with_capacity(g.data().len());
    for (px, &s) in g.data().chunks_exact(c).zip(ms.data()) {
        for (&v, &w) in px.iter().zip(mc.data()) {
            data.push(w * s * v);
        }
    }
    Tensor::from_vec(g.height(), g.width(), c, data)
}

/// Mixes `k_0..k_3` into the final `H×W×1` map in `[0, 1]`.
pub fn agfem(k: &[Tensor], p: &AgfemParams) -> Result<Tensor> {
    if k.len() != LEVELS {
        return Err(Error::config(format!("head expects {LEVELS} levels, got {}", k.len())));
    }
    let mut levels = vec![k[0].clone()];
    for (i, mix) in p.mix.iter().enumerate() {
        let level = i + 1;
        let y = conv2d(&k[level], mix, Padding::same(3))?;
        levels.push(upsample_bilinear(&y, 1 << level)?);
    }
    for l in &levels[1..] {
        if l.height() != k[0].height() || l.width() != k[0].width() {
            return Err(Error::config("pyramid levels do not align after upsampling"));
        }
    }
    let g = concat_channels(&levels.iter().collect::<Vec<_>>())?;
    let g_prime = activate(&conv2d(&g, &p.pre, Padding::same(3))?, Activation::Relu);
    let g_f = dafwm(&g_prime, &p.dafwm)?;
    let residual = bn_infer(&conv2d(&g, &p.res_pw, Padding::Zero(0))?, &p.res_bn)?;
    let fused = activate(&residual.add(&g_f)?, Activation::Relu);
    let out = conv2d(&fused, &p.head, Padding::Zero(0))?;
    Ok(activate(&out, Activation::Sigmoid))
}
