//! One optimization step of each training mode.

use crate::autodiff::{Graph, NodeId};
use crate::data::seed::{derive, stream, tag};
use crate::data::{noise_for, AugmentedMiniBatch, NoiseMode};
use crate::error::{Error, Result};
use crate::losses::{
    af_classification_loss, compose_objectives, cycle_loss, discriminator_loss, generator_adversarial_loss,
    quadruplet_loss, zero, GroupEmbeddings, GroupLogits, LossParts,
};
use crate::models::{Bound, ClassifierOutput, GtcnModel, Mode};
use crate::tensor::Tensor;

use super::optim::Adam;
use super::TrainConfig;

/// Scalar values recorded for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLosses {
    pub l_cls: f32,
    pub l_quad: f32,
    /// Generator-side adversarial terms.
    pub l_adv_a: f32,
    pub l_adv_b: f32,
    pub l_cyc_a: f32,
    pub l_cyc_b: f32,
    pub l_d_a: f32,
    pub l_d_b: f32,
    pub alpha: f32,
    pub beta: f32,
}

impl StepLosses {
    fn check(&self, step: usize) -> Result<()> {
        let terms = [
            ("l_cls", self.l_cls),
            ("l_quad", self.l_quad),
            ("l_adv_a", self.l_adv_a),
            ("l_adv_b", self.l_adv_b),
            ("l_cyc_a", self.l_cyc_a),
            ("l_cyc_b", self.l_cyc_b),
            ("l_d_a", self.l_d_a),
            ("l_d_b", self.l_d_b),
        ];
        match terms.iter().find(|(_, v)| !v.is_finite()) {
            Some((term, _)) => Err(Error::NonFiniteLoss {
                term: term.to_string(),
                step,
            }),
            None => Ok(()),
        }
    }
}

/// Adam state for every parameter group of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub c: Adam,
    pub fade: Adam,
    pub gan: Option<[Adam; 4]>,
}

pub const GAN_GROUPS: [&str; 4] = ["g_ab", "g_ba", "d_a", "d_b"];

impl Optimizers {
    pub fn new(model: &GtcnModel, cfg: &TrainConfig) -> Self {
        let adam = |p| Adam::new(p, cfg.beta1, cfg.beta2, cfg.adam_eps);
        Self {
            c: adam(&model.classifier.params),
            fade: adam(&model.fade),
            gan: model
                .translators
                .as_ref()
                .map(|t| [adam(&t.g_ab.params), adam(&t.g_ba.params), adam(&t.d_a.params), adam(&t.d_b.params)]),
        }
    }
}

/// What one GTCN-family step updates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepPlan {
    pub update_gan: bool,
    pub update_c: bool,
    /// Classification losses enter the translator objective.
    pub joint: bool,
}

pub(crate) struct StepCtx<'a> {
    pub cfg: &'a TrainConfig,
    pub step: usize,
    pub lr: f32,
}

impl StepCtx<'_> {
    fn dropout_seed(&self, which: &str) -> u64 {
        derive(self.cfg.seed, &[tag("dropout"), tag(which), self.step as u64])
    }
}

fn fade_nodes(g: &mut Graph, model: &GtcnModel, af: bool, trainable: Option<&Bound>) -> Result<(NodeId, NodeId)> {
    match (af, trainable) {
        (true, Some(b)) => Ok((g.sigmoid(b.id(0))?, g.sigmoid(b.id(1))?)),
        (true, None) => Ok((
            g.constant(Tensor::scalar(model.alpha())),
            g.constant(Tensor::scalar(model.beta())),
        )),
        (false, _) => Ok((g.constant(Tensor::scalar(0.5)), g.constant(Tensor::scalar(0.5)))),
    }
}

/// Classification terms over the concatenated `x_a, x̃_a, x_b, x̃_b` batch.
fn classification_terms(
    g: &mut Graph,
    out: &ClassifierOutput,
    m: usize,
    classes: (usize, usize),
    fade: (NodeId, NodeId),
    cfg: &TrainConfig,
) -> Result<(NodeId, NodeId)> {
    let mut parts = [0; 4];
    let mut emb = [0; 4];
    for i in 0..4 {
        parts[i] = g.slice_batch(out.logits, i * m, m)?;
        emb[i] = g.slice_batch(out.embedding, i * m, m)?;
    }
    let logits = GroupLogits {
        real_a: parts[0],
        trans_a: parts[1],
        real_b: parts[2],
        trans_b: parts[3],
    };
    let l_cls = af_classification_loss(g, logits, classes.0, classes.1, fade.0, fade.1)?;
    let l_quad = if cfg.toggles.ql {
        let f = GroupEmbeddings {
            real_a: emb[0],
            trans_a: emb[1],
            real_b: emb[2],
            trans_b: emb[3],
        };
        quadruplet_loss(g, f, &cfg.weights)?
    } else {
        zero(g)
    };
    Ok((l_cls, l_quad))
}

/// One augmented-mini-batch step: discriminators, then translators, then
/// classifier (and fade-in weights). Returns the batch used for the
/// classifier update.
pub(crate) fn gtcn_step(
    model: &mut GtcnModel,
    opt: &mut Optimizers,
    x_a: Tensor,
    x_b: Tensor,
    classes: (usize, usize),
    plan: StepPlan,
    ctx: &StepCtx,
) -> Result<(StepLosses, AugmentedMiniBatch)> {
    let cfg = ctx.cfg;
    let m = x_a.shape()[0];
    let side = x_a.shape()[1] / 4;
    let noise = if cfg.toggles.st { NoiseMode::Stochastic } else { NoiseMode::Zero };
    let mut rng = stream(cfg.seed, &[tag("noise"), ctx.step as u64]);
    let z = [(); 4].map(|_| noise_for(noise, m, side, &mut rng));
    let mut out = StepLosses {
        alpha: if cfg.toggles.af { model.alpha() } else { 0.5 },
        beta: if cfg.toggles.af { model.beta() } else { 0.5 },
        ..StepLosses::default()
    };

    let tr = model
        .translators
        .as_mut()
        .ok_or_else(|| Error::invalid("this mode needs translators but the model has none"))?;

    // (1) translations and cycle reconstructions
    let mut gg = Graph::new();
    let b_ab = tr.g_ab.params.bind(&mut gg, plan.update_gan);
    let b_ba = tr.g_ba.params.bind(&mut gg, plan.update_gan);
    let xa = gg.constant(x_a.clone());
    let xb = gg.constant(x_b.clone());
    let zs = z.clone().map(|t| gg.constant(t));
    let t_b = tr.g_ab.forward(&mut gg, &b_ab, xa, zs[0])?;
    let t_a = tr.g_ba.forward(&mut gg, &b_ba, xb, zs[1])?;
    let amb = AugmentedMiniBatch {
        x_a,
        x_tilde_a: gg.value(t_a).clone(),
        x_b,
        x_tilde_b: gg.value(t_b).clone(),
        class_a: classes.0,
        class_b: classes.1,
        iteration: ctx.step,
    };

    if plan.update_gan {
        let cyc_a = tr.g_ba.forward(&mut gg, &b_ba, t_b, zs[2])?;
        let cyc_b = tr.g_ab.forward(&mut gg, &b_ab, t_a, zs[3])?;
        let l_cyc_a = cycle_loss(&mut gg, xa, cyc_a)?;
        let l_cyc_b = cycle_loss(&mut gg, xb, cyc_b)?;

        // (2) discriminators, translated samples as constants
        let mut gd = Graph::new();
        let b_da = tr.d_a.params.bind(&mut gd, true);
        let b_db = tr.d_b.params.bind(&mut gd, true);
        let [ra, fa, rb, fb] = [&amb.x_a, &amb.x_tilde_a, &amb.x_b, &amb.x_tilde_b].map(|t| gd.constant(t.clone()));
        let da_real = tr.d_a.forward(&mut gd, &b_da, ra)?;
        let da_fake = tr.d_a.forward(&mut gd, &b_da, fa)?;
        let db_real = tr.d_b.forward(&mut gd, &b_db, rb)?;
        let db_fake = tr.d_b.forward(&mut gd, &b_db, fb)?;
        let l_da = discriminator_loss(&mut gd, da_real, da_fake)?;
        let l_db = discriminator_loss(&mut gd, db_real, db_fake)?;
        let l_d = gd.add(l_da, l_db)?;
        out.l_d_a = gd.value(l_da).item();
        out.l_d_b = gd.value(l_db).item();
        out.check(ctx.step)?;
        let mut ids = b_da.ids.clone();
        ids.extend(&b_db.ids);
        let mut grads = gd.gradients(l_d, &ids)?;
        let gan_opt = opt.gan.as_mut().ok_or_else(|| Error::invalid("missing translator optimizers"))?;
        gan_opt[2].step(&mut tr.d_a.params, &b_da, &mut grads, ctx.lr);
        gan_opt[3].step(&mut tr.d_b.params, &b_db, &mut grads, ctx.lr);

        // (3) translators against the updated discriminators
        let b_da = tr.d_a.params.bind(&mut gg, false);
        let b_db = tr.d_b.params.bind(&mut gg, false);
        let pa = tr.d_a.forward(&mut gg, &b_da, t_a)?;
        let pb = tr.d_b.forward(&mut gg, &b_db, t_b)?;
        let l_adv_a = generator_adversarial_loss(&mut gg, pa)?;
        let l_adv_b = generator_adversarial_loss(&mut gg, pb)?;
        let (l_cls, l_quad) = if plan.joint {
            let bc = model.classifier.params.bind(&mut gg, false);
            let all = gg.concat_batch(&[xa, t_a, xb, t_b])?;
            let seed = ctx.dropout_seed("g");
            let co = model.classifier.forward(&mut gg, &bc, all, Mode::Train { dropout_seed: seed })?;
            let fade = fade_nodes(&mut gg, model, cfg.toggles.af, None)?;
            classification_terms(&mut gg, &co, m, classes, fade, cfg)?
        } else {
            (zero(&mut gg), zero(&mut gg))
        };
        let parts = LossParts {
            l_cls,
            l_quad,
            l_adv_a,
            l_adv_b,
            l_cyc_a,
            l_cyc_b,
        };
        let bundle = compose_objectives(&mut gg, parts, &cfg.weights)?;
        out.l_adv_a = gg.value(l_adv_a).item();
        out.l_adv_b = gg.value(l_adv_b).item();
        out.l_cyc_a = gg.value(l_cyc_a).item();
        out.l_cyc_b = gg.value(l_cyc_b).item();
        out.l_cls = gg.value(l_cls).item();
        out.l_quad = gg.value(l_quad).item();
        out.check(ctx.step)?;
        let mut ids = b_ab.ids.clone();
        ids.extend(&b_ba.ids);
        let mut grads = gg.gradients(bundle.l_g, &ids)?;
        let tr = model.translators.as_mut().expect("checked above");
        gan_opt[0].step(&mut tr.g_ab.params, &b_ab, &mut grads, ctx.lr);
        gan_opt[1].step(&mut tr.g_ba.params, &b_ba, &mut grads, ctx.lr);
    }

    // (4) classifier on the step's batch with translations held fixed
    if plan.update_c {
        let c = classifier_amb_step(model, opt, &amb, ctx)?;
        out.l_cls = c.l_cls;
        out.l_quad = c.l_quad;
        out.alpha = c.alpha;
        out.beta = c.beta;
        out.check(ctx.step)?;
    }
    Ok((out, amb))
}

/// Classifier (and fade-in) update on a fixed augmented mini-batch.
pub(crate) fn classifier_amb_step(
    model: &mut GtcnModel,
    opt: &mut Optimizers,
    amb: &AugmentedMiniBatch,
    ctx: &StepCtx,
) -> Result<StepLosses> {
    let cfg = ctx.cfg;
    let m = amb.m();
    let mut g = Graph::new();
    let bc = model.classifier.params.bind(&mut g, true);
    let bf = model.fade.bind(&mut g, cfg.toggles.af);
    let x = g.constant(amb.images()?);
    let seed = ctx.dropout_seed("c");
    let co = model.classifier.forward(&mut g, &bc, x, Mode::Train { dropout_seed: seed })?;
    let fade = fade_nodes(&mut g, model, cfg.toggles.af, Some(&bf))?;
    let (l_cls, l_quad) = classification_terms(&mut g, &co, m, (amb.class_a, amb.class_b), fade, cfg)?;
    let l_c = g.add(l_cls, l_quad)?;
    let out = StepLosses {
        l_cls: g.value(l_cls).item(),
        l_quad: g.value(l_quad).item(),
        alpha: g.value(fade.0).item(),
        beta: g.value(fade.1).item(),
        ..StepLosses::default()
    };
    out.check(ctx.step)?;
    let mut ids = bc.ids.clone();
    if cfg.toggles.af {
        ids.extend(&bf.ids);
    }
    let mut grads = g.gradients(l_c, &ids)?;
    opt.c.step(&mut model.classifier.params, &bc, &mut grads, ctx.lr);
    if cfg.toggles.af {
        opt.fade.step(&mut model.fade, &bf, &mut grads, ctx.lr);
    }
    model.classifier.update_running_stats(&g, &co);
    Ok(out)
}

/// Plain cross-entropy update of the classifier on real samples.
pub(crate) fn classifier_ce_step(
    model: &mut GtcnModel,
    opt: &mut Optimizers,
    x: Tensor,
    labels: Vec<usize>,
    ctx: &StepCtx,
) -> Result<StepLosses> {
    let mut g = Graph::new();
    let bc = model.classifier.params.bind(&mut g, true);
    let xi = g.constant(x);
    let seed = ctx.dropout_seed("c");
    let co = model.classifier.forward(&mut g, &bc, xi, Mode::Train { dropout_seed: seed })?;
    let l = g.softmax_cross_entropy(co.logits, labels)?;
    let out = StepLosses {
        l_cls: g.value(l).item(),
        alpha: model.alpha(),
        beta: model.beta(),
        ..StepLosses::default()
    };
    out.check(ctx.step)?;
    let mut grads = g.gradients(l, &bc.ids)?;
    opt.c.step(&mut model.classifier.params, &bc, &mut grads, ctx.lr);
    model.classifier.update_running_stats(&g, &co);
    Ok(out)
}
