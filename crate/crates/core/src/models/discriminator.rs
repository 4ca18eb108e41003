//! Patch discriminator: four stride-2 4×4 convolutions with leaky ReLU,
//! then a 1-channel 3×3 head through a sigmoid.

use rand::Rng;

use super::params::{truncated_normal, Bound, ParamSet, INIT_STD};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SLOPE: f32 = 0.2;
const DOWN_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    width: usize,
    pub params: ParamSet,
}

impl Discriminator {
    pub fn new(width: usize, rng: &mut impl Rng) -> Result<Self> {
        if width == 0 {
            return Err(Error::invalid("discriminator width must be positive"));
        }
        let mut p = ParamSet::new();
        let mut cin = 3;
        for i in 0..DOWN_LAYERS {
            let cout = width << i;
            p.push(format!("down{i}.w"), truncated_normal(&[4, 4, cin, cout], INIT_STD, rng));
            if i == 0 {
                p.push("down0.b", Tensor::zeros(&[cout]));
            } else {
                p.push(format!("down{i}.scale"), Tensor::full(&[cout], 1.0));
                p.push(format!("down{i}.shift"), Tensor::zeros(&[cout]));
            }
            cin = cout;
        }
        p.push("head.w", truncated_normal(&[3, 3, cin, 1], INIT_STD, rng));
        p.push("head.b", Tensor::zeros(&[1]));
        Ok(Self { width, params: p })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Records the patch-probability map for `x` (N×H×W×3, H and W
    /// divisible by 16). The map is N×H/16×W/16×1.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> Result<NodeId> {
        let s = g.value(x).shape();
        if s.len() != 4 || s[3] != 3 || s[1] % 16 != 0 || s[2] % 16 != 0 {
            return Err(Error::Shape(format!(
                "discriminator expects N×H×W×3 input with H, W divisible by 16, got {s:?}"
            )));
        }
        let mut h = x;
        let mut next = 0;
        let mut take = || {
            next += 1;
            bound.id(next - 1)
        };
        for i in 0..DOWN_LAYERS {
            h = g.conv2d(h, take(), 2, 1)?;
            h = if i == 0 {
                g.bias_add(h, take())?
            } else {
                g.instance_norm(h, take(), take())?
            };
            h = g.leaky_relu(h, SLOPE)?;
        }
        h = g.conv2d(h, take(), 1, 1)?;
        h = g.bias_add(h, take())?;
        g.sigmoid(h)
    }

    pub fn score(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, false);
        let xi = g.constant(x.clone());
        let y = self.forward(&mut g, &bound, xi)?;
        Ok(g.value(y).clone())
    }
}
