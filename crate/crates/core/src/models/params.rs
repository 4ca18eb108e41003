use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, NodeId};
use crate::tensor::Tensor;

/// An ordered collection of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.entries.push((name.into(), t));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Registers every tensor as a graph leaf: trainable `param` leaves
    /// when `trainable`, constants otherwise.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let ids = self
            .entries
            .iter()
            .map(|(_, t)| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        Bound { ids }
    }

    /// Replaces values from `(name, tensor)` pairs; every entry must be
    /// present with an identical shape.
    pub(crate) fn load_from<'a>(
        &mut self,
        prefix: &str,
        mut lookup: impl FnMut(&str) -> Option<&'a Tensor>,
    ) -> crate::Result<()> {
        for (name, t) in &mut self.entries {
            let full = format!("{prefix}{name}");
            let src = lookup(&full).ok_or_else(|| crate::Error::Format(format!("missing tensor `{full}`")))?;
            if src.shape() != t.shape() {
                return Err(crate::Error::Format(format!(
                    "tensor `{full}` has shape {:?}, expected {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            *t = src.clone();
        }
        Ok(())
    }
}

/// Graph node ids of a bound [`ParamSet`], index-aligned with it.
#[derive(Debug, Clone)]
pub struct Bound {
    pub ids: Vec<NodeId>,
}

impl Bound {
    pub fn id(&self, i: usize) -> NodeId {
        self.ids[i]
    }
}

/// Normal(0, std) truncated to two standard deviations.
pub fn truncated_normal(shape: &[usize], std: f32, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0f32, std).expect("positive std");
    Tensor::from_fn(shape, |_| loop {
        let v = normal.sample(rng);
        if v.abs() <= 2.0 * std {
            break v;
        }
    })
}

pub const INIT_STD: f32 = 0.02;
