//! Minimal reverse-mode differentiation over a recorded operation graph.
//!
//! Operations execute eagerly as they are recorded, so every node carries
//! its value. The recording can be replayed on new input bindings with
//! [`Graph::evaluate`], and differentiated with [`Graph::gradients`].

pub mod gradcheck;
pub mod kernels;
pub mod ops;

use std::collections::HashMap;

pub use gradcheck::finite_difference_check;
pub use ops::{LeafKind, Op, Saved};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    saved: Saved,
}

/// Gradients keyed by the node id of each requested leaf.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    grads: HashMap<NodeId, Tensor>,
}

impl GradientMap {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// An append-only record of operations. Input ids always precede their
/// consumers, so the graph is acyclic by construction.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    outputs: Vec<NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn label(&self, id: NodeId) -> String {
        format!("#{id} {}", self.nodes[id].op.name())
    }

    fn leaf(&mut self, kind: LeafKind, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf(kind),
            inputs: Vec::new(),
            value,
            saved: Saved::None,
        });
        self.nodes.len() - 1
    }

    /// A placeholder rebound on every [`evaluate`](Self::evaluate) call.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.leaf(LeafKind::Input, value)
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(LeafKind::Param, value)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(LeafKind::Constant, value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id].op
    }

    pub fn inputs_of(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].inputs
    }

    /// Per-channel batch mean and biased variance recorded by a
    /// training-mode batch-norm node.
    pub fn batch_stats(&self, id: NodeId) -> Option<(&[f32], &[f32])> {
        match (&self.nodes[id].op, &self.nodes[id].saved) {
            (Op::BatchNorm { .. }, Saved::Norm { mean, var, .. }) => Some((mean, var)),
            _ => None,
        }
    }

    pub fn mark_output(&mut self, id: NodeId) {
        self.outputs.push(id);
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    fn run(&self, id: NodeId, op: &Op, inputs: &[NodeId]) -> Result<(Tensor, Saved)> {
        let vals: Vec<&Tensor> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
        let (value, saved) = ops::forward(op, &vals).map_err(|message| Error::Node {
            node: format!("#{id} {}", op.name()),
            message,
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                node: format!("#{id} {}", op.name()),
            });
        }
        Ok((value, saved))
    }

    /// Records and executes an operation.
    pub fn push(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let id = self.nodes.len();
        if let Some(&bad) = inputs.iter().find(|&&i| i >= id) {
            return Err(Error::Node {
                node: format!("#{id} {}", op.name()),
                message: format!("input #{bad} does not exist yet"),
            });
        }
        let (value, saved) = self.run(id, &op, inputs)?;
        self.nodes.push(Node {
            op,
            inputs: inputs.to_vec(),
            value,
            saved,
        });
        Ok(id)
    }

    /// Replays every operation with `bindings` substituted for input leaves.
    /// All input leaves must be bound. Returns the marked outputs.
    pub fn evaluate(&mut self, bindings: &HashMap<NodeId, Tensor>) -> Result<HashMap<NodeId, Tensor>> {
        for (id, node) in self.nodes.iter().enumerate() {
            if node.op == Op::Leaf(LeafKind::Input) && !bindings.contains_key(&id) {
                return Err(Error::Node {
                    node: self.label(id),
                    message: "input is not bound".into(),
                });
            }
        }
        for (&id, t) in bindings {
            match self.nodes.get(id).map(|n| &n.op) {
                Some(Op::Leaf(_)) => self.nodes[id].value = t.clone(),
                _ => {
                    return Err(Error::InvalidArgument(format!("#{id} is not a leaf node")));
                }
            }
        }
        self.replay()?;
        Ok(self
            .outputs
            .iter()
            .map(|&id| (id, self.nodes[id].value.clone()))
            .collect())
    }

    /// Recomputes all non-leaf nodes from the current leaf values.
    pub(crate) fn replay(&mut self) -> Result<()> {
        for id in 0..self.nodes.len() {
            if matches!(self.nodes[id].op, Op::Leaf(_)) {
                continue;
            }
            let op = self.nodes[id].op.clone();
            let inputs = std::mem::take(&mut self.nodes[id].inputs);
            let res = self.run(id, &op, &inputs);
            self.nodes[id].inputs = inputs;
            let (value, saved) = res?;
            self.nodes[id].value = value;
            self.nodes[id].saved = saved;
        }
        Ok(())
    }

    pub(crate) fn set_leaf_value(&mut self, id: NodeId, value: Tensor) {
        debug_assert!(matches!(self.nodes[id].op, Op::Leaf(_)));
        self.nodes[id].value = value;
    }

    /// Reverse-mode gradients of the scalar `loss` with respect to `params`.
    ///
    /// Every requested id gets an entry; ids the loss does not depend on get
    /// zeros. Dropout masks and pooling indices are constants of the forward
    /// pass.
    pub fn gradients(&self, loss: NodeId, params: &[NodeId]) -> Result<GradientMap> {
        if self.nodes[loss].value.numel() != 1 {
            return Err(Error::Node {
                node: self.label(loss),
                message: format!("loss must be scalar, has shape {:?}", self.nodes[loss].value.shape()),
            });
        }
        // Nodes downstream of a requested parameter.
        let mut needs = vec![false; self.nodes.len()];
        for &p in params {
            needs[p] = true;
        }
        for id in 0..=loss {
            if !needs[id] && self.nodes[id].inputs.iter().any(|&i| needs[i]) {
                needs[id] = true;
            }
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss + 1];
        if needs[loss] {
            grads[loss] = Some(Tensor::full(self.nodes[loss].value.shape(), 1.0));
        }
        for id in (0..=loss).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf(_)) {
                grads[id] = Some(dy);
                continue;
            }
            let want: Vec<bool> = node.inputs.iter().map(|&i| needs[i]).collect();
            if !want.iter().any(|&w| w) {
                continue;
            }
            let vals: Vec<&Tensor> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let local = ops::backward(&node.op, &vals, &node.value, &node.saved, &dy, &want)
                .map_err(|()| Error::NonDifferentiable { node: self.label(id) })?;
            for (&inp, g) in node.inputs.iter().zip(local) {
                let Some(g) = g else { continue };
                if !needs[inp] {
                    continue;
                }
                match &mut grads[inp] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(g),
                }
            }
        }
        let mut map = GradientMap::default();
        for &p in params {
            let g = grads
                .get_mut(p)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(self.nodes[p].value.shape()));
            map.grads.insert(p, g);
        }
        Ok(map)
    }

    // ---- recording helpers -------------------------------------------------

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        self.push(Op::Conv2d { stride, pad }, &[x, w])
    }

    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Result<NodeId> {
        self.push(
            Op::ConvTranspose2d {
                stride,
                pad,
                output_pad,
            },
            &[x, w],
        )
    }

    pub fn batch_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        self.push(Op::BatchNorm { eps: 1e-5 }, &[x, gamma, beta])
    }

    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: NodeId,
        var: NodeId,
    ) -> Result<NodeId> {
        self.push(Op::BatchNormEval { eps: 1e-5 }, &[x, gamma, beta, mean, var])
    }

    pub fn instance_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        self.push(Op::InstanceNorm { eps: 1e-5 }, &[x, gamma, beta])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu, &[x])
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f32) -> Result<NodeId> {
        self.push(Op::LeakyRelu { slope }, &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid, &[x])
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Log, &[x])
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Abs, &[x])
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Square, &[x])
    }

    pub fn clamp(&mut self, x: NodeId, lo: f32, hi: f32) -> Result<NodeId> {
        self.push(Op::Clamp { lo, hi }, &[x])
    }

    pub fn affine(&mut self, x: NodeId, scale: f32, shift: f32) -> Result<NodeId> {
        self.push(Op::Affine { scale, shift }, &[x])
    }

    pub fn max_pool(&mut self, x: NodeId, k: usize, stride: usize) -> Result<NodeId> {
        self.push(Op::MaxPool { k, stride }, &[x])
    }

    pub fn avg_pool(&mut self, x: NodeId, k: usize, stride: usize) -> Result<NodeId> {
        self.push(Op::AvgPool { k, stride }, &[x])
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        self.push(Op::Linear, &[x, w])
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax, &[x])
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: Vec<usize>) -> Result<NodeId> {
        self.push(Op::SoftmaxCrossEntropy { labels }, &[logits])
    }

    pub fn dropout(&mut self, x: NodeId, p: f32, seed: u64, training: bool) -> Result<NodeId> {
        self.push(Op::Dropout { p, seed, training }, &[x])
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::ConcatChannels, &[a, b])
    }

    pub fn concat_batch(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.push(Op::ConcatBatch, parts)
    }

    pub fn slice_batch(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::SliceBatch { start, len }, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Reshape { shape: shape.to_vec() }, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul, &[a, b])
    }

    pub fn bias_add(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::BiasAdd, &[x, b])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sum, &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Mean, &[x])
    }

    pub fn sum_last_axis(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::SumLastAxis, &[x])
    }

    pub fn argmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Argmax, &[x])
    }
}
