//! Named parameter tensors and the builder that maps them onto typed layer
//! parameters.
//!
//! Parameter naming is hierarchical (`dnim/n0_0/conv0/w`). Dimension
//! conventions:
//!
//! | parameter            | dims               |
//! |----------------------|--------------------|
//! | general conv weight  | `[out, in, k, k]`  |
//! | depthwise weight     | `[ch, 1, k, k]`    |
//! | pointwise weight     | `[out, in, 1, 1]`  |
//! | dense (FC) weight    | `[out, in]`        |
//! | bias, BN arrays      | `[ch]`             |
//!
//! The same builder code that reads parameters out of a [`WeightStore`] can
//! run in recording mode, which is how the complete required-name list for a
//! configuration is produced. There is one source of truth for the layout.

use std::collections::HashSet;

use indexmap::IndexMap;
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg32;

use crate::tensor::{BatchNorm, ConvKernel, ConvMode, BN_EPSILON};
use crate::{Error, Result};

/// A parameter array together with its logical dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl ParamTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::config(format!(
                "dims {dims:?} hold {n} values, got {}",
                data.len()
            )));
        }
        Ok(ParamTensor { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Insertion-ordered map from parameter name to tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    entries: IndexMap<String, ParamTensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: ParamTensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::config(format!("duplicate weight name `{name}`")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.entries.get(name)
    }

    /// Replaces the data of an existing entry, keeping its dims.
    pub fn set_data(&mut self, name: &str, data: Vec<f32>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))?;
        if entry.data.len() != data.len() {
            return Err(Error::config(format!(
                "`{name}` holds {} values, got {}",
                entry.data.len(),
                data.len()
            )));
        }
        entry.data = data;
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<ParamTensor> {
        self.entries.shift_remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    /// Every parameter zero except batch-norm gamma and variance, which are
    /// one (identity normalisation).
    pub fn zeros(layout: &[ParamSpec]) -> Self {
        let mut store = WeightStore::new();
        for spec in layout {
            let fill = match spec.role {
                ParamRole::Gamma | ParamRole::Var => 1.0,
                _ => 0.0,
            };
            let n = spec.dims.iter().product();
            store
                .insert(
                    spec.name.clone(),
                    ParamTensor {
                        dims: spec.dims.clone(),
                        data: vec![fill; n],
                    },
                )
                .expect("layout names are unique");
        }
        store
    }

    /// Test weights: conv/dense weights and biases uniform in
    /// `(-0.05, 0.05)` from a PCG32 stream seeded with `seed`, identity
    /// batch-norm. Not trained; only for exercising the forward path.
    pub fn seeded(layout: &[ParamSpec], seed: u64) -> Self {
        let mut rng = Pcg32::seed_from_u64(seed);
        let mut store = Self::zeros(layout);
        for spec in layout {
            if matches!(spec.role, ParamRole::Weight | ParamRole::Bias) {
                let entry = store.entries.get_mut(&spec.name).unwrap();
                for v in &mut entry.data {
                    *v = rng.random_range(-0.05f32..0.05);
                }
            }
        }
        store
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Gamma,
    Beta,
    Mean,
    Var,
}

/// One required parameter: name, dims and what it is used for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub role: ParamRole,
}

enum Source<'a> {
    Record(Vec<ParamSpec>),
    Read {
        store: &'a WeightStore,
        used: HashSet<String>,
    },
}

/// Pulls typed layer parameters by name, either out of a store or, in
/// recording mode, as placeholders while logging the required layout.
pub(crate) struct ParamBuilder<'a> {
    source: Source<'a>,
}

impl<'a> ParamBuilder<'a> {
    pub fn recorder() -> ParamBuilder<'static> {
        ParamBuilder {
            source: Source::Record(Vec::new()),
        }
    }

    pub fn reader(store: &'a WeightStore) -> Self {
        ParamBuilder {
            source: Source::Read {
                store,
                used: HashSet::new(),
            },
        }
    }

    fn take(&mut self, name: String, dims: Vec<usize>, role: ParamRole) -> Result<Vec<f32>> {
        match &mut self.source {
            Source::Record(specs) => {
                let n = dims.iter().product();
                let fill = if matches!(role, ParamRole::Gamma | ParamRole::Var) {
                    1.0
                } else {
                    0.0
                };
                specs.push(ParamSpec { name, dims, role });
                Ok(vec![fill; n])
            }
            Source::Read { store, used } => {
                let t = store.get(&name).ok_or_else(|| Error::MissingWeight(name.clone()))?;
                if t.dims != dims {
                    return Err(Error::WeightShape {
                        name,
                        expected: dims,
                        found: t.dims.clone(),
                    });
                }
                used.insert(name);
                Ok(t.data.clone())
            }
        }
    }

    /// Convolution `{prefix}/w` (+ `{prefix}/b` when `bias`).
    pub fn conv(
        &mut self,
        prefix: &str,
        mode: ConvMode,
        k: usize,
        in_channels: usize,
        out_channels: usize,
        bias: bool,
    ) -> Result<ConvKernel> {
        let dims = match mode {
            ConvMode::General => vec![out_channels, in_channels, k, k],
            ConvMode::Depthwise => vec![out_channels, 1, k, k],
            ConvMode::Pointwise => vec![out_channels, in_channels, 1, 1],
        };
        let w = self.take(format!("{prefix}/w"), dims, ParamRole::Weight)?;
        let b = if bias {
            Some(self.take(format!("{prefix}/b"), vec![out_channels], ParamRole::Bias)?)
        } else {
            None
        };
        ConvKernel::new(k, in_channels, out_channels, mode, w, b)
    }

    /// Fully connected layer `{prefix}/w` with dims `[out, in]`, applied to
    /// `1×1×in` tensors as a pointwise kernel.
    pub fn dense(&mut self, prefix: &str, in_features: usize, out_features: usize, bias: bool) -> Result<ConvKernel> {
        let w = self.take(
            format!("{prefix}/w"),
            vec![out_features, in_features],
            ParamRole::Weight,
        )?;
        let b = if bias {
            Some(self.take(format!("{prefix}/b"), vec![out_features], ParamRole::Bias)?)
        } else {
            None
        };
        ConvKernel::pointwise(in_features, out_features, w, b)
    }

    pub fn bn(&mut self, prefix: &str, channels: usize) -> Result<BatchNorm> {
        let bn = BatchNorm {
            gamma: self.take(format!("{prefix}/gamma"), vec![channels], ParamRole::Gamma)?,
            beta: self.take(format!("{prefix}/beta"), vec![channels], ParamRole::Beta)?,
            running_mean: self.take(format!("{prefix}/mean"), vec![channels], ParamRole::Mean)?,
            running_var: self.take(format!("{prefix}/var"), vec![channels], ParamRole::Var)?,
            epsilon: BN_EPSILON,
        };
        bn.validate()?;
        Ok(bn)
    }

    /// Recorded layout (empty for a reader).
    pub fn into_layout(self) -> Vec<ParamSpec> {
        match self.source {
            Source::Record(specs) => specs,
            Source::Read { .. } => Vec::new(),
        }
    }

    /// Rejects store entries nobody asked for. `allowed_prefixes` names
    /// sub-trees consumed by someone else.
    pub fn finish(self, allowed_prefixes: &[&str]) -> Result<()> {
        if let Source::Read { store, used } = self.source {
            if let Some(extra) = store
                .names()
                .find(|n| !used.contains(*n) && !allowed_prefixes.iter().any(|p| n.starts_with(p)))
            {
                return Err(Error::UnexpectedWeight(extra.to_string()));
            }
        }
        Ok(())
    }
}
