//! The light-weight classifier: six conv-BN-ReLU blocks, pooling, dropout
//! and a bias-free fully connected head.

use rand::Rng;

use super::params::{truncated_normal, Bound, ParamSet, INIT_STD};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output channels of the six convolution blocks.
pub const CONV_WIDTHS: [usize; 6] = [16, 16, 32, 32, 64, 64];
/// Blocks followed by a 2×2 stride-2 max pool (zero-based).
const POOLED_BLOCKS: usize = 4;
pub const SUPPORTED_RES: [usize; 3] = [32, 64, 128];
const BN_MOMENTUM: f32 = 0.9;
pub const DEFAULT_DROPOUT: f32 = 0.5;

/// Which parameters [`Classifier::count_parameters`] includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSelector {
    /// Convolution kernels and the FC matrix only.
    Weights,
    /// Adds the batch-norm scale and shift vectors.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and active dropout drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
    /// Running statistics, no dropout.
    Eval,
}

/// Graph nodes produced by one classifier pass.
#[derive(Debug, Clone)]
pub struct ClassifierOutput {
    pub logits: NodeId,
    pub embedding: NodeId,
    /// Training-mode batch-norm nodes in block order; empty in eval mode.
    pub bn_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    k: usize,
    res: usize,
    dropout: f32,
    /// `w1..w6`, `ws`, then `bnI.scale` / `bnI.shift` for each block.
    pub params: ParamSet,
    /// `bnI.mean` / `bnI.var` running statistics.
    pub buffers: ParamSet,
}

impl Classifier {
    pub fn new(k: usize, res: usize, dropout: f32, rng: &mut impl Rng) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("classifier needs at least 2 classes, got {k}")));
        }
        if !SUPPORTED_RES.contains(&res) {
            return Err(Error::invalid(format!(
                "unsupported input resolution {res}; expected one of {SUPPORTED_RES:?}"
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0,1), got {dropout}")));
        }
        let mut params = ParamSet::new();
        let mut cin = 3;
        for (i, &cout) in CONV_WIDTHS.iter().enumerate() {
            params.push(format!("w{}", i + 1), truncated_normal(&[3, 3, cin, cout], INIT_STD, rng));
            cin = cout;
        }
        params.push("ws", truncated_normal(&[fc_inputs(res), k], INIT_STD, rng));
        let mut buffers = ParamSet::new();
        for (i, &c) in CONV_WIDTHS.iter().enumerate() {
            params.push(format!("bn{}.scale", i + 1), Tensor::full(&[c], 1.0));
            params.push(format!("bn{}.shift", i + 1), Tensor::zeros(&[c]));
            buffers.push(format!("bn{}.mean", i + 1), Tensor::zeros(&[c]));
            buffers.push(format!("bn{}.var", i + 1), Tensor::full(&[c], 1.0));
        }
        Ok(Self {
            k,
            res,
            dropout,
            params,
            buffers,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn dropout(&self) -> f32 {
        self.dropout
    }

    pub fn embedding_dim(&self) -> usize {
        fc_inputs(self.res)
    }

    pub fn count_parameters(&self, sel: ParamSelector) -> usize {
        self.params
            .iter()
            .filter(|(name, _)| sel == ParamSelector::All || !name.starts_with("bn"))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Multiply-accumulates of one forward pass over a single image.
    pub fn estimate_macs(&self) -> u64 {
        let mut side = self.res;
        let mut cin = 3;
        let mut total = 0;
        for (i, &cout) in CONV_WIDTHS.iter().enumerate() {
            total += conv_macs(side, side, cout, 3, 3, cin);
            if i < POOLED_BLOCKS {
                side /= 2;
            }
            cin = cout;
        }
        total + fc_macs(fc_inputs(self.res), self.k)
    }

    /// Records a pass over `x` (N×res×res×3). `bound` must come from
    /// binding [`Self::params`].
    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId, mode: Mode) -> Result<ClassifierOutput> {
        let shape = g.value(x).shape();
        if shape.len() != 4 || shape[1] != self.res || shape[2] != self.res || shape[3] != 3 {
            return Err(Error::Shape(format!(
                "classifier expects N×{r}×{r}×3 input, got {shape:?}",
                r = self.res
            )));
        }
        let n = shape[0];
        let mut h = x;
        let mut bn_nodes = Vec::new();
        for i in 0..CONV_WIDTHS.len() {
            h = g.conv2d(h, bound.id(i), 1, 1)?;
            let scale = bound.id(7 + 2 * i);
            let shift = bound.id(8 + 2 * i);
            h = match mode {
                Mode::Train { .. } => {
                    let b = g.batch_norm(h, scale, shift)?;
                    bn_nodes.push(b);
                    b
                }
                Mode::Eval => {
                    let mean = g.constant(self.buffers.tensor(2 * i).clone());
                    let var = g.constant(self.buffers.tensor(2 * i + 1).clone());
                    g.batch_norm_eval(h, scale, shift, mean, var)?
                }
            };
            h = g.relu(h)?;
            if i < POOLED_BLOCKS {
                h = g.max_pool(h, 2, 2)?;
            }
        }
        h = g.avg_pool(h, 2, 2)?;
        h = g.reshape(h, &[n, self.embedding_dim()])?;
        let embedding = match mode {
            Mode::Train { dropout_seed } => g.dropout(h, self.dropout, dropout_seed, true)?,
            Mode::Eval => h,
        };
        let logits = g.linear(embedding, bound.id(6))?;
        Ok(ClassifierOutput {
            logits,
            embedding,
            bn_nodes,
        })
    }

    /// Folds the batch statistics of a training pass into the running
    /// averages; the stored variance is the unbiased estimate.
    pub fn update_running_stats(&mut self, g: &Graph, out: &ClassifierOutput) {
        for (i, &node) in out.bn_nodes.iter().enumerate() {
            let Some((mean, var)) = g.batch_stats(node) else {
                continue;
            };
            let s = g.value(node).shape();
            let count = (s[0] * s[1] * s[2]) as f32;
            let correction = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for (r, &m) in self.buffers.tensor_mut(2 * i).data_mut().iter_mut().zip(mean) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
            }
            for (r, &v) in self.buffers.tensor_mut(2 * i + 1).data_mut().iter_mut().zip(var) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v * correction;
            }
        }
    }

    /// Eval-mode logits for a batch of images, processed in chunks.
    pub fn predict(&self, images: &Tensor, chunk: usize) -> Result<Tensor> {
        let n = images.shape()[0];
        let mut parts = Vec::new();
        let mut start = 0;
        while start < n {
            let len = chunk.max(1).min(n - start);
            let mut g = Graph::new();
            let bound = self.params.bind(&mut g, false);
            let x = g.constant(images.slice_batch(start, len)?);
            let out = self.forward(&mut g, &bound, x, Mode::Eval)?;
            parts.push(g.value(out.logits).clone());
            start += len;
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::concat_batch(&refs)
    }
}

/// Flattened length of the pooled feature map feeding the FC layer.
pub fn fc_inputs(res: usize) -> usize {
    let side = res / 32;
    side * side * CONV_WIDTHS[5]
}

pub fn conv_macs(h_out: usize, w_out: usize, c_out: usize, kh: usize, kw: usize, c_in: usize) -> u64 {
    (h_out * w_out * c_out * kh * kw * c_in) as u64
}

pub fn fc_macs(inputs: usize, outputs: usize) -> u64 {
    (inputs * outputs) as u64
}
