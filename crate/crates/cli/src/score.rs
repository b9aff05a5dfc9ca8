use std::path::Path;

use clap::ValueEnum;
use istd_core::baselines::{mpcm, top_hat, StructuringElement};
use istd_core::io::{load_weights, RunConfig};
use istd_core::network::CspeNet;
use istd_core::scpem::{extract_cp1, GdKernelBank};
use istd_core::Tensor;

use crate::CliError;

/// Score-map producers selectable with `--method`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Tophat,
    Mpcm,
    Cp1,
    Net,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tophat => "tophat",
            Method::Mpcm => "mpcm",
            Method::Cp1 => "cp1",
            Method::Net => "net",
        }
    }
}

pub enum Scorer {
    TopHat(StructuringElement),
    Mpcm(Vec<usize>),
    Cp1(GdKernelBank),
    Net { net: Box<CspeNet>, bank: GdKernelBank },
}

impl Scorer {
    pub fn build(method: Method, cfg: &RunConfig, weights: Option<&Path>) -> Result<Self, CliError> {
        Ok(match method {
            Method::Tophat => Scorer::TopHat(StructuringElement::disk(cfg.top_hat_radius)),
            Method::Mpcm => Scorer::Mpcm(cfg.mpcm_scales.clone()),
            Method::Cp1 => Scorer::Cp1(GdKernelBank::standard(cfg.sigma_rule)?),
            Method::Net => {
                let path = weights.ok_or_else(|| CliError::usage("`--method net` needs `--weights FILE`"))?;
                let store = load_weights(path).map_err(CliError::weight_or_config)?;
                Scorer::Net {
                    net: Box::new(CspeNet::from_store_inferred(&store)?),
                    bank: GdKernelBank::standard(cfg.sigma_rule)?,
                }
            }
        })
    }

    pub fn score(&self, image: &Tensor) -> istd_core::Result<Tensor> {
        match self {
            Scorer::TopHat(se) => top_hat(image, se),
            Scorer::Mpcm(scales) => mpcm(image, scales),
            Scorer::Cp1(bank) => extract_cp1(image, bank),
            Scorer::Net { net, bank } => net.forward(image, bank),
        }
    }
}
