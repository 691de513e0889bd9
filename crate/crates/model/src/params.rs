//! Named parameters grouped into freezable components.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Vision,
    TextTower,
    Projector,
    Decoder,
    /// The contrastive loss scalars (log-temperature and bias).
    Head,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::Vision,
        Component::TextTower,
        Component::Projector,
        Component::Decoder,
        Component::Head,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Vision => "vision",
            Component::TextTower => "text_tower",
            Component::Projector => "projector",
            Component::Decoder => "decoder",
            Component::Head => "head",
        }
    }

    fn of(param: &str) -> Option<Component> {
        let prefix = param.split('.').next()?;
        Component::ALL.into_iter().find(|c| c.name() == prefix)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown component {s:?}")))
    }
}

/// All model parameters. Reads of parameters in a non-trainable component
/// return detached tensors, so no gradient is built for them.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    trainable: BTreeSet<Component>,
    dtype: DType,
    device: Device,
}

/// Deterministic initializer used while building a fresh model.
pub(crate) struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn normal(&mut self, n: usize, std: f64) -> Vec<f64> {
        let d = Normal::new(0.0, std).expect("positive std");
        (0..n).map(|_| d.sample(&mut self.rng)).collect()
    }
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            trainable: BTreeSet::new(),
            dtype,
            device,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<()> {
        if Component::of(name).is_none() {
            return Err(ModelError::UnknownParam(name.to_string()));
        }
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        self.vars.insert(name.to_string(), Var::from_tensor(&t)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))?;
        let tracked = Component::of(name).is_some_and(|c| self.trainable.contains(&c));
        Ok(if tracked {
            var.as_tensor().clone()
        } else {
            var.as_tensor().detach()
        })
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn set_trainable(&mut self, components: &BTreeSet<Component>) {
        self.trainable = components.clone();
    }

    pub fn trainable(&self) -> &BTreeSet<Component> {
        &self.trainable
    }

    /// Parameters in trainable components, in name order.
    pub fn trainable_vars(&self) -> Vec<(&str, &Var)> {
        self.vars
            .iter()
            .filter(|(n, _)| Component::of(n).is_some_and(|c| self.trainable.contains(&c)))
            .map(|(n, v)| (n.as_str(), v))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn num_params_in(&self, component: Component) -> usize {
        self.vars
            .iter()
            .filter(|(n, _)| Component::of(n) == Some(component))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// Parameter values as f32, flattened.
    pub fn values_f32(&self, name: &str) -> Result<Vec<f32>> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))?;
        Ok(var.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?)
    }

    /// Replaces the values of an existing parameter.
    pub fn set_values(&self, name: &str, values: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))?;
        var.set(&values.to_dtype(self.dtype)?.reshape(var.shape())?)?;
        Ok(())
    }

    /// SHA-256 over names, shapes and f32 values, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, var) in &self.vars {
            h.update(name.as_bytes());
            for d in var.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            for x in self.values_f32(name)? {
                h.update(x.to_le_bytes());
            }
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn hash_component(&self, component: Component) -> Result<String> {
        let mut h = Sha256::new();
        for name in self.vars.keys().filter(|n| Component::of(n) == Some(component)) {
            h.update(name.as_bytes());
            for x in self.values_f32(name)? {
                h.update(x.to_le_bytes());
            }
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}
