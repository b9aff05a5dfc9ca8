//! Densely nested U-shaped backbone.
//!
//! Node `N(i, j)` sits at depth `i` and nesting column `j`. Encoder nodes
//! `N(i, 0)` take the image (i = 0) or the 2×2 max-pooled node above. A
//! nested node `N(i, j)` takes every earlier node of its row together with
//! the ×2 upsampled `N(i+1, j−1)`. Every node is two `Conv3×3 → BN → ReLU`
//! stages producing `(i+1)·C` channels. Row `i` emits `f_i = N(i, 3−i)`.

use crate::tensor::{
    activate, bn_infer, concat_channels, conv2d, pool, upsample_bilinear, Activation, BatchNorm, ConvKernel, ConvMode,
    Padding, PoolKind, Tensor,
};
use crate::weights::ParamBuilder;
use crate::{Error, Result};

use super::{check_divisible, LEVELS};

#[derive(Clone, Debug)]
pub struct DoubleConv {
    pub conv0: ConvKernel,
    pub bn0: BatchNorm,
    pub conv1: ConvKernel,
    pub bn1: BatchNorm,
}

impl DoubleConv {
    fn build(pb: &mut ParamBuilder<'_>, prefix: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(DoubleConv {
            conv0: pb.conv(&format!("{prefix}/conv0"), ConvMode::General, 3, cin, cout, true)?,
            bn0: pb.bn(&format!("{prefix}/bn0"), cout)?,
            conv1: pb.conv(&format!("{prefix}/conv1"), ConvMode::General, 3, cout, cout, true)?,
            bn1: pb.bn(&format!("{prefix}/bn1"), cout)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = conv2d(x, &self.conv0, Padding::same(3))?;
        let y = activate(&bn_infer(&y, &self.bn0)?, Activation::Relu);
        let y = conv2d(&y, &self.conv1, Padding::same(3))?;
        Ok(activate(&bn_infer(&y, &self.bn1)?, Activation::Relu))
    }
}

#[derive(Clone, Debug)]
pub struct DnimParams {
    input_channels: usize,
    /// Indexed by `node_index(i, j)`.
    nodes: Vec<DoubleConv>,
}

/// Position of `N(i, j)` in evaluation order (column by column).
fn node_index(i: usize, j: usize) -> usize {
    // columns 0..j hold LEVELS, LEVELS-1, ... nodes
    (0..j).map(|c| LEVELS - c).sum::<usize>() + i
}

impl DnimParams {
    pub(crate) fn build(pb: &mut ParamBuilder<'_>, input_channels: usize, base_channels: usize) -> Result<Self> {
        let ch = |i: usize| (i + 1) * base_channels;
        let mut nodes = Vec::new();
        for j in 0..LEVELS {
            for i in 0..LEVELS - j {
                let cin = match (i, j) {
                    (0, 0) => input_channels,
                    (_, 0) => ch(i - 1),
                    _ => j * ch(i) + ch(i + 1),
                };
                nodes.push(DoubleConv::build(pb, &format!("dnim/n{i}_{j}"), cin, ch(i))?);
            }
        }
        Ok(DnimParams { input_channels, nodes })
    }

    pub fn node(&self, i: usize, j: usize) -> &DoubleConv {
        &self.nodes[node_index(i, j)]
    }
}

/// Returns `f_0..f_3`.
pub fn dnim_forward(input: &Tensor, params: &DnimParams) -> Result<Vec<Tensor>> {
    if input.channels() != params.input_channels {
        return Err(Error::config(format!(
            "backbone expects {} input channels, got {}",
            params.input_channels,
            input.channels()
        )));
    }
    check_divisible(input)?;
    let mut out: Vec<Option<Tensor>> = vec![None; params.nodes.len()];
    let get = |out: &Vec<Option<Tensor>>, i, j| -> Tensor { out[node_index(i, j)].clone().expect("node evaluated") };
    for i in 0..LEVELS {
        let x = if i == 0 {
            input.clone()
        } else {
            pool(&get(&out, i - 1, 0), PoolKind::Max2)?
        };
        out[node_index(i, 0)] = Some(params.node(i, 0).forward(&x)?);
    }
    for j in 1..LEVELS {
        for i in 0..LEVELS - j {
            let mut parts: Vec<Tensor> = (0..j).map(|c| get(&out, i, c)).collect();
            parts.push(upsample_bilinear(&get(&out, i + 1, j - 1), 2)?);
            let x = concat_channels(&parts.iter().collect::<Vec<_>>())?;
            out[node_index(i, j)] = Some(params.node(i, j).forward(&x)?);
        }
    }
    Ok((0..LEVELS).map(|i| get(&out, i, LEVELS - 1 - i)).collect())
}
