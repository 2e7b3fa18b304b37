//! Named parameter containers and their portable serialization.
//!
//! Iteration order is insertion order. Aggregation and serialization both walk
//! parameters in this order, which pins floating-point summation order.

use indexmap::IndexMap;
use serde::de::Error as _;
use serde::ser::{Error as _, SerializeSeq};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    entries: IndexMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::dim(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::dim(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Same names, same order, same shapes.
    pub fn check_congruent(&self, other: &ParameterSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::dim(format!(
                "parameter sets differ in size: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.iter().zip(other.iter()) {
            if na != nb {
                return Err(Error::dim(format!("parameter order differs: `{na}` vs `{nb}`")));
            }
            if ta.shape() != tb.shape() {
                return Err(Error::dim(format!(
                    "parameter `{na}` shape {:?} vs {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (name, t) in self.iter() {
            t.ensure_finite(name)?;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParameterSet) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|((_, a), (_, b))| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Bit-level equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_identical(&self, other: &ParameterSet) -> bool {
        self.len() == other.len()
            && self.iter().zip(other.iter()).all(|((na, a), (nb, b))| {
                na == nb
                    && a.shape() == b.shape()
                    && a
                        .data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Gradients of a loss with respect to a [`ParameterSet`]; same keys and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(ParameterSet);

impl GradientSet {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self(params.zeros_like())
    }

    /// Adds `delta` into the gradient slot `name`.
    pub fn accumulate(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let slot = self.0.get_mut(name)?;
        if !slot.same_shape(delta) {
            return Err(Error::dim(format!(
                "gradient `{name}` shape {:?} vs {:?}",
                slot.shape(),
                delta.shape()
            )));
        }
        slot.add_assign(delta);
        Ok(())
    }

    pub fn accumulate_slice(&mut self, name: &str, delta: &[f64]) -> Result<()> {
        let slot = self.0.get_mut(name)?;
        if slot.len() != delta.len() {
            return Err(Error::dim(format!(
                "gradient `{name}` length {} vs {}",
                slot.len(),
                delta.len()
            )));
        }
        for (a, b) in slot.data_mut().iter_mut().zip(delta) {
            *a += b;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.iter()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.0.iter_mut() {
            t.scale(factor);
        }
    }

    pub fn as_params(&self) -> &ParameterSet {
        &self.0
    }

    pub fn into_params(self) -> ParameterSet {
        self.0
    }

    pub fn check_congruent(&self, params: &ParameterSet) -> Result<()> {
        params.check_congruent(&self.0)
    }
}

struct Scientific<'a>(&'a [f64]);

impl Serialize for Scientific<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for v in self.0 {
            if !v.is_finite() {
                return Err(S::Error::custom(format!("cannot serialize non-finite value {v}")));
            }
            // 17 significant digits round-trip every f64 exactly.
            let raw = RawValue::from_string(format!("{v:.16e}")).map_err(S::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
struct EntryOut<'a> {
    name: &'a str,
    shape: &'a [usize],
    values: Scientific<'a>,
}

#[derive(Deserialize)]
struct EntryIn {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Serialize for ParameterSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter().map(|(name, t)| EntryOut {
            name,
            shape: t.shape(),
            values: Scientific(t.data()),
        }))
    }
}

impl<'de> Deserialize<'de> for ParameterSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<EntryIn>::deserialize(deserializer)?;
        let mut set = ParameterSet::new();
        for e in entries {
            let t = Tensor::new(e.shape, e.values).map_err(D::Error::custom)?;
            set.insert(e.name, t).map_err(D::Error::custom)?;
        }
        Ok(set)
    }
}
