//! Stochastic translator: a three-layer encoder, noise concatenation, a
//! residual transformer and a two-step upsampling decoder with tanh output.

use rand::Rng;

use super::params::{truncated_normal, Bound, ParamSet, INIT_STD};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channels of the noise tensor concatenated before the transformer.
pub const NOISE_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Width of the first encoder layer; later layers use 2× and 4×.
    pub width: usize,
    pub blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { width: 64, blocks: 9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    cfg: GeneratorConfig,
    pub params: ParamSet,
}

struct Ids<'a> {
    bound: &'a Bound,
    next: usize,
}

impl Ids<'_> {
    fn take(&mut self) -> NodeId {
        let id = self.bound.id(self.next);
        self.next += 1;
        id
    }
}

fn push_conv(p: &mut ParamSet, name: &str, shape: [usize; 4], rng: &mut impl Rng) {
    p.push(format!("{name}.w"), truncated_normal(&shape, INIT_STD, rng));
}

fn push_norm(p: &mut ParamSet, name: &str, c: usize) {
    p.push(format!("{name}.scale"), Tensor::full(&[c], 1.0));
    p.push(format!("{name}.shift"), Tensor::zeros(&[c]));
}

impl Generator {
    pub fn new(cfg: GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.width == 0 {
            return Err(Error::invalid("generator width must be positive"));
        }
        let w = cfg.width;
        let t = 4 * w + NOISE_CHANNELS;
        let mut p = ParamSet::new();
        push_conv(&mut p, "enc1", [7, 7, 3, w], rng);
        push_norm(&mut p, "enc1", w);
        push_conv(&mut p, "enc2", [3, 3, w, 2 * w], rng);
        push_norm(&mut p, "enc2", 2 * w);
        push_conv(&mut p, "enc3", [3, 3, 2 * w, 4 * w], rng);
        push_norm(&mut p, "enc3", 4 * w);
        for b in 0..cfg.blocks {
            for half in ["a", "b"] {
                let name = format!("res{b}.{half}");
                push_conv(&mut p, &name, [3, 3, t, t], rng);
                push_norm(&mut p, &name, t);
            }
        }
        // transposed kernels are stored as [kh, kw, out, in]
        push_conv(&mut p, "dec1", [3, 3, 2 * w, t], rng);
        push_norm(&mut p, "dec1", 2 * w);
        push_conv(&mut p, "dec2", [3, 3, w, 2 * w], rng);
        push_norm(&mut p, "dec2", w);
        push_conv(&mut p, "out", [7, 7, w, 3], rng);
        p.push("out.b", Tensor::zeros(&[3]));
        Ok(Self { cfg, params: p })
    }

    pub fn config(&self) -> GeneratorConfig {
        self.cfg
    }

    /// Records `G(x, z)`. `x` is N×H×W×3 with H, W divisible by 4 and `z`
    /// is N×H/4×W/4×3.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId, z: NodeId) -> Result<NodeId> {
        let xs = g.value(x).shape().to_vec();
        if xs.len() != 4 || xs[3] != 3 || xs[1] % 4 != 0 || xs[2] % 4 != 0 {
            return Err(Error::Shape(format!(
                "generator expects N×H×W×3 input with H, W divisible by 4, got {xs:?}"
            )));
        }
        let zs = g.value(z).shape();
        let want = [xs[0], xs[1] / 4, xs[2] / 4, NOISE_CHANNELS];
        if zs != want {
            return Err(Error::Shape(format!(
                "noise shape {zs:?} does not match encoder output, expected {want:?}"
            )));
        }
        let mut ids = Ids { bound, next: 0 };
        fn conv_norm_relu(g: &mut Graph, ids: &mut Ids, h: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
            let h = g.conv2d(h, ids.take(), stride, pad)?;
            let h = g.instance_norm(h, ids.take(), ids.take())?;
            g.relu(h)
        }
        let mut h = conv_norm_relu(g, &mut ids, x, 1, 3)?;
        h = conv_norm_relu(g, &mut ids, h, 2, 1)?;
        h = conv_norm_relu(g, &mut ids, h, 2, 1)?;
        h = g.concat_channels(h, z)?;
        for _ in 0..self.cfg.blocks {
            let r = conv_norm_relu(g, &mut ids, h, 1, 1)?;
            let r = g.conv2d(r, ids.take(), 1, 1)?;
            let r = g.instance_norm(r, ids.take(), ids.take())?;
            h = g.add(h, r)?;
        }
        for _ in 0..2 {
            h = g.conv_transpose2d(h, ids.take(), 2, 1, 1)?;
            h = g.instance_norm(h, ids.take(), ids.take())?;
            h = g.relu(h)?;
        }
        h = g.conv2d(h, ids.take(), 1, 3)?;
        h = g.bias_add(h, ids.take())?;
        g.tanh(h)
    }

    /// Eval-style translation outside any training graph.
    pub fn translate(&self, x: &Tensor, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, false);
        let xi = g.constant(x.clone());
        let zi = g.constant(z.clone());
        let y = self.forward(&mut g, &bound, xi, zi)?;
        Ok(g.value(y).clone())
    }
}
