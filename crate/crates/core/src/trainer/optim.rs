//! Adam with bias correction over a [`ParamSet`].

use crate::autodiff::GradientMap;
use crate::error::{Error, Result};
use crate::models::{Archive, Bound, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: u32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, beta1: f32, beta2: f32, eps: f32) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// Applies one update using the gradients of `bound`'s nodes.
    pub fn step(&mut self, params: &mut ParamSet, bound: &Bound, grads: &mut GradientMap, lr: f32) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = lr * c2.sqrt() / c1;
        for i in 0..params.len() {
            let Some(g) = grads.take(bound.id(i)) else {
                continue;
            };
            let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.tensor_mut(i).data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                p[j] -= step * m[j] / (v[j].sqrt() + eps * c2.sqrt());
            }
        }
    }

    pub fn save(&self, group: &str, params: &ParamSet, a: &mut Archive) {
        for i in 0..params.len() {
            a.insert(format!("opt.{group}.m.{}", params.name(i)), self.m[i].clone());
            a.insert(format!("opt.{group}.v.{}", params.name(i)), self.v[i].clone());
        }
        a.insert(format!("opt.{group}.t"), Tensor::scalar(self.t as f32));
    }

    pub fn load(&mut self, group: &str, params: &ParamSet, a: &Archive) -> Result<()> {
        for i in 0..params.len() {
            for (slot, kind) in [(&mut self.m[i], "m"), (&mut self.v[i], "v")] {
                let t = a.require(&format!("opt.{group}.{kind}.{}", params.name(i)))?;
                if t.shape() != slot.shape() {
                    return Err(Error::Format(format!("optimizer state shape mismatch for `{}`", params.name(i))));
                }
                *slot = t.clone();
            }
        }
        self.t = a.require(&format!("opt.{group}.t"))?.item() as u32;
        Ok(())
    }
}
