//! Forward-path engine for infrared small-target detection with
//! surround-convergent priors.
//!
//! The pipeline has three stages:
//!
//! - [`scpem`]: a frozen bank of oriented Gaussian-derivative kernels turns the
//!   input into squared orthogonal-pair gradient magnitudes, from which a
//!   training-free saliency map (CP1) and a learnable four-level feature
//!   pyramid (CP2) are extracted.
//! - [`network`]: CP1 is stacked with the image and pushed through a densely
//!   nested U-shaped backbone; CP2 is fused into the decoder features with
//!   asymmetric top-down / bottom-up gating; an attention-guided head mixes
//!   all levels into a single `[0, 1]` saliency map.
//! - [`metrics`]: pixel-level IoU/F1 and target-level Pd/Fa with ROC sweeps.
//!
//! [`baselines`] provides Top-hat and MPCM saliency maps for comparison and
//! [`synthgen`] renders seeded synthetic scenes with exact ground truth.
//! Everything runs on the small dense [`tensor`] engine in this crate.

pub mod baselines;
mod error;
pub mod io;
pub mod metrics;
pub mod network;
pub mod scpem;
pub mod synthgen;
pub mod tensor;
pub mod weights;

pub use error::{Error, FormatError, Result};
pub use tensor::Tensor;
