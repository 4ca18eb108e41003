//! Training loops: joint GTCN, the classifier-only baseline, separate
//! two-phase training, multi-class pair sampling and fine-tuning.

pub mod config;
pub mod optim;
pub mod step;

use std::fs;
use std::io::Write;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;

pub use config::{lr_at, parse_kv, TrainConfig, TrainMode, Toggles};
pub use optim::Adam;
pub use step::{Optimizers, StepLosses};

use crate::data::seed::{stream, tag};
use crate::data::{augment_batch, stack, Dataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::models::{Archive, ArchConfig, GtcnModel};
use crate::tensor::Tensor;
use config::schedule;
use step::{classifier_ce_step, gtcn_step, StepCtx, StepPlan, GAN_GROUPS};

/// Real samples per class in each multi-class pairwise batch.
pub const MULTICLASS_M: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f32,
    pub losses: StepLosses,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

pub const LOG_HEADER: &str = "step,epoch,lr,l_cls,l_quad,l_adv_a,l_adv_b,l_cyc_a,l_cyc_b,alpha,beta";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.steps {
            let l = &r.losses;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.step, r.epoch, r.lr, l.l_cls, l.l_quad, l.l_adv_a, l.l_adv_b, l.l_cyc_a, l.l_cyc_b, l.alpha, l.beta
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Model plus optimizer state; the unit of checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: GtcnModel,
    pub opt: Optimizers,
}

impl TrainState {
    pub fn new(model: GtcnModel, cfg: &TrainConfig) -> Self {
        let opt = Optimizers::new(&model, cfg);
        Self { model, opt }
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = self.model.to_archive();
        self.opt.c.save("c", &self.model.classifier.params, &mut a);
        self.opt.fade.save("fade", &self.model.fade, &mut a);
        if let (Some(opts), Some(t)) = (&self.opt.gan, &self.model.translators) {
            let sets = [&t.g_ab.params, &t.g_ba.params, &t.d_a.params, &t.d_b.params];
            for ((o, p), name) in opts.iter().zip(sets).zip(GAN_GROUPS) {
                o.save(name, p, &mut a);
            }
        }
        a
    }

    /// Restores model and optimizer state; optimizer hyper-parameters come
    /// from `cfg`.
    pub fn from_archive(a: &Archive, cfg: &TrainConfig) -> Result<Self> {
        let model = GtcnModel::from_archive(a)?;
        let mut opt = Optimizers::new(&model, cfg);
        opt.c.load("c", &model.classifier.params, a)?;
        opt.fade.load("fade", &model.fade, a)?;
        if let (Some(opts), Some(t)) = (&mut opt.gan, &model.translators) {
            let sets = [&t.g_ab.params, &t.g_ba.params, &t.d_a.params, &t.d_b.params];
            for ((o, p), name) in opts.iter_mut().zip(sets).zip(GAN_GROUPS) {
                o.load(name, p, a)?;
            }
        }
        Ok(Self { model, opt })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path, cfg: &TrainConfig) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?, cfg)
    }
}

/// Writes a model (without optimizer state) to `path`.
pub fn save_checkpoint(model: &GtcnModel, path: &Path) -> Result<()> {
    model.save(path)
}

/// Reads the model part of a checkpoint; optimizer entries are ignored.
pub fn load_checkpoint(path: &Path) -> Result<GtcnModel> {
    GtcnModel::load(path)
}

/// Cycles through a shuffled order of each class's training indices.
struct ClassQueues {
    order: Vec<Vec<usize>>,
    pos: Vec<usize>,
}

impl ClassQueues {
    fn new(ds: &Dataset, rng: &mut impl Rng) -> Self {
        let order = (0..ds.num_classes())
            .map(|c| {
                let mut idx = ds.class_indices(Split::Train, c);
                idx.shuffle(rng);
                idx
            })
            .collect::<Vec<_>>();
        let pos = vec![0; order.len()];
        Self { order, pos }
    }

    fn take(&mut self, class: usize, n: usize) -> Vec<usize> {
        let q = &self.order[class];
        let out = (0..n).map(|i| q[(self.pos[class] + i) % q.len()]).collect();
        self.pos[class] += n;
        out
    }
}

pub(crate) fn arch_for(cfg: &TrainConfig, ds: &Dataset) -> ArchConfig {
    ArchConfig {
        classes: ds.num_classes(),
        res: ds.res,
        dropout: cfg.dropout,
        gan: (cfg.mode != TrainMode::CnnBaseline).then_some(cfg.gan),
    }
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    ds: &'a Dataset,
    state: TrainState,
    log: TrainLog,
    step: usize,
}

impl Run<'_> {
    /// Augmented real samples stacked into a batch.
    fn batch(&self, idx: &[usize], epoch: usize, salt: u64) -> Result<Tensor> {
        let images: Vec<&Tensor> = idx.iter().map(|&i| &self.ds.train[i].pixels).collect();
        let ids: Vec<u64> = (0..idx.len()).map(|j| ((self.step as u64) << 8) | (salt << 4) | j as u64).collect();
        let aug = augment_batch(&images, &ids, &self.cfg.augment, self.cfg.seed, epoch as u64);
        stack(aug.iter())
    }

    fn record(&mut self, epoch: usize, lr: f32, losses: StepLosses) {
        self.log.steps.push(StepRecord {
            step: self.step,
            epoch,
            lr,
            losses,
        });
        self.step += 1;
    }

    fn gtcn_epoch(&mut self, epoch: usize, lr: f32, plan: StepPlan) -> Result<()> {
        let k = self.ds.num_classes();
        let mut rng = stream(self.cfg.seed, &[tag("order"), epoch as u64, self.step as u64]);
        let mut queues = ClassQueues::new(self.ds, &mut rng);
        let counts = self.ds.class_counts(Split::Train);
        let (m, steps) = if k == 2 {
            let m = self.cfg.m;
            (m, counts[0].max(counts[1]).div_ceil(m))
        } else {
            (MULTICLASS_M, self.ds.train.len() / (2 * MULTICLASS_M))
        };
        for _ in 0..steps {
            let (a, b) = if k == 2 {
                (0, 1)
            } else {
                // uniform unordered pair, random orientation
                let a = rng.random_range(0..k);
                let mut b = rng.random_range(0..k - 1);
                if b >= a {
                    b += 1;
                }
                (a, b)
            };
            let xa = self.batch(&queues.take(a, m), epoch, 0)?;
            let xb = self.batch(&queues.take(b, m), epoch, 1)?;
            let ctx = StepCtx {
                cfg: self.cfg,
                step: self.step,
                lr,
            };
            let (losses, _) = gtcn_step(&mut self.state.model, &mut self.state.opt, xa, xb, (a, b), plan, &ctx)?;
            self.record(epoch, lr, losses);
        }
        Ok(())
    }

    fn ce_epoch(&mut self, epoch: usize, lr: f32) -> Result<()> {
        let mut rng = stream(self.cfg.seed, &[tag("order"), epoch as u64, self.step as u64]);
        let mut order: Vec<usize> = (0..self.ds.train.len()).collect();
        order.shuffle(&mut rng);
        let bs = self.cfg.baseline_batch.min(order.len());
        for chunk in order.chunks_exact(bs) {
            let x = self.batch(chunk, epoch, 0)?;
            let labels = chunk.iter().map(|&i| self.ds.train[i].label).collect();
            let ctx = StepCtx {
                cfg: self.cfg,
                step: self.step,
                lr,
            };
            let losses = classifier_ce_step(&mut self.state.model, &mut self.state.opt, x, labels, &ctx)?;
            self.record(epoch, lr, losses);
        }
        Ok(())
    }

    fn end_epoch(&mut self, epoch: usize, tag_name: &str) -> Result<()> {
        let test_accuracy = if self.cfg.epoch_eval && !self.ds.test.is_empty() {
            Some(test_accuracy(&self.state.model, &self.ds.test)?)
        } else {
            None
        };
        self.log.epochs.push(EpochRecord { epoch, test_accuracy });
        let last = self.log.steps.last().map(|r| r.losses).unwrap_or_default();
        info!(
            "{tag_name} epoch {epoch}: l_cls {:.4} l_quad {:.4} alpha {:.3} beta {:.3}{}",
            last.l_cls,
            last.l_quad,
            last.alpha,
            last.beta,
            test_accuracy.map(|a| format!(" test acc {:.2}%", 100.0 * a)).unwrap_or_default()
        );
        if let Some(dir) = &self.cfg.checkpoint_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            self.state.save(&dir.join(format!("{tag_name}_epoch_{epoch:03}.gtcn")))?;
        }
        Ok(())
    }
}

/// Accuracy of eval-mode predictions on `images` (threshold 0 on the
/// binary score, argmax otherwise).
pub fn test_accuracy(model: &GtcnModel, images: &[LabeledImage]) -> Result<f64> {
    let logits = predict_images(model, images)?;
    let k = model.arch.classes;
    let correct = logits
        .data()
        .chunks(k)
        .zip(images)
        .filter(|(row, im)| crate::metrics::predict(row) == im.label)
        .count();
    Ok(correct as f64 / images.len() as f64)
}

/// Eval-mode logits for a list of images.
pub fn predict_images(model: &GtcnModel, images: &[LabeledImage]) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::Dataset("no images to predict".into()));
    }
    let x = stack(images.iter().map(|im| &im.pixels))?;
    model.classifier.predict(&x, 32)
}

fn check_dataset(ds: &Dataset) -> Result<()> {
    if ds.num_classes() < 2 {
        return Err(Error::Dataset("training needs at least two classes".into()));
    }
    for (c, &n) in ds.class_counts(Split::Train).iter().enumerate() {
        if n == 0 {
            return Err(Error::Dataset(format!("class `{}` has no training samples", ds.classes[c])));
        }
    }
    ds.validate()
}

/// Trains a fresh model from `cfg.seed`.
pub fn train(cfg: &TrainConfig, ds: &Dataset) -> Result<(GtcnModel, TrainLog)> {
    let (state, log) = train_state(cfg, ds)?;
    Ok((state.model, log))
}

/// Like [`train`] but also returns the optimizer state.
pub fn train_state(cfg: &TrainConfig, ds: &Dataset) -> Result<(TrainState, TrainLog)> {
    cfg.validate()?;
    check_dataset(ds)?;
    let arch = arch_for(cfg, ds);
    let model = GtcnModel::new(arch, &mut stream(cfg.seed, &[tag("init")]))?;
    let mut run = Run {
        cfg,
        ds,
        state: TrainState::new(model, cfg),
        log: TrainLog::default(),
        step: 0,
    };
    let full = StepPlan {
        update_gan: true,
        update_c: true,
        joint: cfg.toggles.joint,
    };
    match cfg.mode {
        TrainMode::Gtcn => {
            for epoch in 0..cfg.epochs {
                let lr = lr_at(cfg, epoch)?;
                run.gtcn_epoch(epoch, lr, full)?;
                run.end_epoch(epoch, "gtcn")?;
            }
        }
        TrainMode::CnnBaseline => {
            for epoch in 0..cfg.epochs {
                let lr = lr_at(cfg, epoch)?;
                run.ce_epoch(epoch, lr)?;
                run.end_epoch(epoch, "cnn")?;
            }
        }
        TrainMode::Separate => {
            let translators_only = StepPlan {
                update_gan: true,
                update_c: false,
                joint: false,
            };
            let classifier_only = StepPlan {
                update_gan: false,
                update_c: true,
                joint: false,
            };
            for epoch in 0..cfg.epochs {
                let lr = lr_at(cfg, epoch)?;
                run.gtcn_epoch(epoch, lr, translators_only)?;
                run.end_epoch(epoch, "translators")?;
            }
            for epoch in 0..cfg.epochs {
                let lr = lr_at(cfg, epoch)?;
                run.gtcn_epoch(epoch, lr, classifier_only)?;
                run.end_epoch(epoch, "classifier")?;
            }
        }
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        run.state.save(&dir.join("final.gtcn"))?;
    }
    Ok((run.state, run.log))
}

/// Classifier-only cross-entropy updates on real training samples;
/// translators, discriminators and fade-in weights are left untouched.
pub fn fine_tune(model: &GtcnModel, ds: &Dataset, epochs: usize, cfg: &TrainConfig) -> Result<(GtcnModel, TrainLog)> {
    if epochs == 0 {
        return Ok((model.clone(), TrainLog::default()));
    }
    check_dataset(ds)?;
    let ft_cfg = TrainConfig {
        seed: crate::data::seed::derive(cfg.seed, &[tag("fine-tune")]),
        ..cfg.clone()
    };
    let mut state = TrainState::new(model.clone(), &ft_cfg);
    // fresh classifier moments; other groups are never stepped
    state.opt.c = Adam::new(&model.classifier.params, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut run = Run {
        cfg: &ft_cfg,
        ds,
        state,
        log: TrainLog::default(),
        step: 0,
    };
    for epoch in 0..epochs {
        let lr = schedule(ft_cfg.base_lr, epochs, epoch);
        run.ce_epoch(epoch, lr)?;
        run.end_epoch(epoch, "fine-tune")?;
    }
    Ok((run.state.model, run.log))
}

#[cfg(test)]
mod tests;
