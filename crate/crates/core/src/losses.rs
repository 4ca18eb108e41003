//! Loss terms as graph constructors. Every function records nodes into
//! the caller's graph and returns a scalar node.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f32 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f32,
    pub eta_a: f32,
    pub eta_b: f32,
    pub eta_c: f32,
}

impl LossWeights {
    pub const FACE: Self = Self::with_margins(2.0, 2.0, 6.0);
    pub const DOGS_CATS: Self = Self::with_margins(0.5, 0.5, 8.0);
    pub const ARTIST: Self = Self::with_margins(0.25, 0.25, 1.5);

    pub const fn with_margins(eta_a: f32, eta_b: f32, eta_c: f32) -> Self {
        Self {
            lambda: 10.0,
            eta_a,
            eta_b,
            eta_c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        for (name, v) in [("eta_a", self.eta_a), ("eta_b", self.eta_b), ("eta_c", self.eta_c)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::FACE
    }
}

fn same_shape(g: &Graph, a: NodeId, b: NodeId, what: &str) -> Result<()> {
    if g.value(a).shape() != g.value(b).shape() {
        return Err(Error::Shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            g.value(a).shape(),
            g.value(b).shape()
        )));
    }
    Ok(())
}

/// Mean absolute difference between `x` and its reconstruction.
pub fn cycle_loss(g: &mut Graph, x: NodeId, x_cyc: NodeId) -> Result<NodeId> {
    same_shape(g, x, x_cyc, "cycle loss")?;
    let d = g.sub(x, x_cyc)?;
    let d = g.abs(d)?;
    g.mean(d)
}

fn check_probabilities(g: &Graph, id: NodeId) -> Result<()> {
    if g.value(id).data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("discriminator output outside [0,1]"));
    }
    Ok(())
}

/// `log` of the clamped mean of a probability map, or of one minus it.
fn log_mean_prob(g: &mut Graph, map: NodeId, complement: bool) -> Result<NodeId> {
    check_probabilities(g, map)?;
    let mut p = g.mean(map)?;
    if complement {
        p = g.affine(p, -1.0, 1.0)?;
    }
    let p = g.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
    g.log(p)
}

/// `-[log D(real) + log(1 - D(fake))]` with each patch map averaged first.
pub fn discriminator_loss(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> Result<NodeId> {
    let a = log_mean_prob(g, d_real, false)?;
    let b = log_mean_prob(g, d_fake, true)?;
    let s = g.add(a, b)?;
    g.affine(s, -1.0, 0.0)
}

/// Non-saturating generator objective `-log D(fake)`.
pub fn generator_adversarial_loss(g: &mut Graph, d_fake: NodeId) -> Result<NodeId> {
    let a = log_mean_prob(g, d_fake, false)?;
    g.affine(a, -1.0, 0.0)
}

/// `(d_loss, g_loss)` for one discriminator.
pub fn adversarial_losses(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> Result<(NodeId, NodeId)> {
    Ok((discriminator_loss(g, d_real, d_fake)?, generator_adversarial_loss(g, d_fake)?))
}

/// Logits of the four augmented mini-batch groups.
#[derive(Debug, Clone, Copy)]
pub struct GroupLogits {
    pub real_a: NodeId,
    pub trans_a: NodeId,
    pub real_b: NodeId,
    pub trans_b: NodeId,
}

/// Fade-in weighted cross-entropy. `alpha` and `beta` are scalar nodes in
/// (0,1); translated samples carry the label of the class they were
/// translated into. Each cross-entropy averages within its group.
pub fn af_classification_loss(
    g: &mut Graph,
    logits: GroupLogits,
    class_a: usize,
    class_b: usize,
    alpha: NodeId,
    beta: NodeId,
) -> Result<NodeId> {
    let m = g.value(logits.real_a).shape()[0];
    for id in [logits.trans_a, logits.real_b, logits.trans_b] {
        same_shape(g, logits.real_a, id, "fade-in loss")?;
    }
    if m == 0 {
        return Err(Error::invalid("fade-in loss needs at least one sample per group"));
    }
    let weighted = |g: &mut Graph, real: NodeId, trans: NodeId, class: usize, w: NodeId| -> Result<NodeId> {
        let ce_real = g.softmax_cross_entropy(real, vec![class; m])?;
        let ce_trans = g.softmax_cross_entropy(trans, vec![class; m])?;
        let a = g.mul(w, ce_real)?;
        let one_minus = g.affine(w, -1.0, 1.0)?;
        let b = g.mul(one_minus, ce_trans)?;
        g.add(a, b)
    };
    let la = weighted(g, logits.real_a, logits.trans_a, class_a, alpha)?;
    let lb = weighted(g, logits.real_b, logits.trans_b, class_b, beta)?;
    g.add(la, lb)
}

/// Embeddings of the four groups, aligned by sample index.
#[derive(Debug, Clone, Copy)]
pub struct GroupEmbeddings {
    pub real_a: NodeId,
    pub trans_a: NodeId,
    pub real_b: NodeId,
    pub trans_b: NodeId,
}

fn squared_distances(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let d = g.sub(a, b)?;
    let d = g.square(d)?;
    g.sum_last_axis(d)
}

/// Quadruplet hinge loss averaged over the aligned quadruples.
pub fn quadruplet_loss(g: &mut Graph, f: GroupEmbeddings, w: &LossWeights) -> Result<NodeId> {
    for id in [f.trans_a, f.real_b, f.trans_b] {
        same_shape(g, f.real_a, id, "quadruplet loss")?;
    }
    if g.value(f.real_a).rank() != 2 {
        return Err(Error::Shape(format!(
            "quadruplet loss expects m×d embeddings, got {:?}",
            g.value(f.real_a).shape()
        )));
    }
    let pos_a = squared_distances(g, f.real_a, f.trans_a)?;
    let neg_a = squared_distances(g, f.real_a, f.trans_b)?;
    let pos_b = squared_distances(g, f.real_b, f.trans_b)?;
    let neg_b = squared_distances(g, f.real_b, f.trans_a)?;
    let real_ab = squared_distances(g, f.real_a, f.real_b)?;
    let trans_ab = squared_distances(g, f.trans_a, f.trans_b)?;

    let t1 = g.sub(pos_a, neg_a)?;
    let t1 = g.affine(t1, 1.0, w.eta_a)?;
    let t1 = g.relu(t1)?;
    let t2 = g.sub(pos_b, neg_b)?;
    let t2 = g.affine(t2, 1.0, w.eta_b)?;
    let t2 = g.relu(t2)?;
    let t3 = g.add(real_ab, trans_ab)?;
    let t3 = g.affine(t3, -1.0, w.eta_c)?;
    let t3 = g.relu(t3)?;

    let s = g.add(t1, t2)?;
    let s = g.add(s, t3)?;
    g.mean(s)
}

/// Scalar loss components feeding [`compose_objectives`].
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub l_cls: NodeId,
    pub l_quad: NodeId,
    pub l_adv_a: NodeId,
    pub l_adv_b: NodeId,
    pub l_cyc_a: NodeId,
    pub l_cyc_b: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct LossBundle {
    pub parts: LossParts,
    /// `l_cls + l_quad`
    pub l_c: NodeId,
    /// `l_c + l_adv_a + l_adv_b + lambda * (l_cyc_a + l_cyc_b)`
    pub l_g: NodeId,
}

pub fn compose_objectives(g: &mut Graph, parts: LossParts, w: &LossWeights) -> Result<LossBundle> {
    let l_c = g.add(parts.l_cls, parts.l_quad)?;
    let adv = g.add(parts.l_adv_a, parts.l_adv_b)?;
    let cyc = g.add(parts.l_cyc_a, parts.l_cyc_b)?;
    let cyc = g.affine(cyc, w.lambda, 0.0)?;
    let l_g = g.add(l_c, adv)?;
    let l_g = g.add(l_g, cyc)?;
    Ok(LossBundle { parts, l_c, l_g })
}

/// A scalar zero usable in place of a disabled term.
pub fn zero(g: &mut Graph) -> NodeId {
    g.constant(Tensor::scalar(0.0))
}
