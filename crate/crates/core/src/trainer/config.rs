use std::path::PathBuf;

use crate::data::AugmentConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::models::GanConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Joint translator and classifier training on augmented mini-batches.
    Gtcn,
    /// Classifier alone on real samples with cross-entropy.
    CnnBaseline,
    /// Translators trained first, then frozen while the classifier trains.
    Separate,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gtcn" => Ok(Self::Gtcn),
            "cnn-baseline" => Ok(Self::CnnBaseline),
            "separate" => Ok(Self::Separate),
            _ => Err(Error::invalid(format!(
                "unknown mode `{s}`; expected gtcn, cnn-baseline or separate"
            ))),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gtcn => "gtcn",
            Self::CnnBaseline => "cnn-baseline",
            Self::Separate => "separate",
        })
    }
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    /// Classification losses also back-propagate into the translators.
    pub joint: bool,
    /// Trainable fade-in weights; off fixes both at 0.5.
    pub af: bool,
    /// Quadruplet loss.
    pub ql: bool,
    /// Stochastic translation; off feeds zero noise.
    pub st: bool,
}

impl Toggles {
    pub const ALL: Self = Self {
        joint: true,
        af: true,
        ql: true,
        st: true,
    };
    pub const NONE: Self = Self {
        joint: false,
        af: false,
        ql: false,
        st: false,
    };

    /// Parses a comma-separated list such as `joint,af`; `none` and the
    /// empty string disable everything, `all` enables everything.
    pub fn parse(s: &str) -> Result<Self> {
        let mut t = Self::NONE;
        for item in s.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "joint" => t.joint = true,
                "af" => t.af = true,
                "ql" => t.ql = true,
                "st" => t.st = true,
                "all" => t = Self::ALL,
                "none" => {}
                other => {
                    return Err(Error::invalid(format!(
                        "unknown toggle `{other}`; expected joint, af, ql, st, all or none"
                    )))
                }
            }
        }
        Ok(t)
    }
}

impl std::fmt::Display for Toggles {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let on: Vec<&str> = [("joint", self.joint), ("af", self.af), ("ql", self.ql), ("st", self.st)]
            .iter()
            .filter(|(_, b)| *b)
            .map(|(n, _)| *n)
            .collect();
        if on.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&on.join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub adam_eps: f32,
    pub weights: LossWeights,
    /// Real samples per class in each augmented mini-batch (binary case).
    pub m: usize,
    /// Batch size of the baseline and fine-tuning loops.
    pub baseline_batch: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub toggles: Toggles,
    pub fine_tune_epochs: usize,
    pub augment: AugmentConfig,
    pub gan: GanConfig,
    pub dropout: f32,
    /// Evaluate test accuracy after every epoch.
    pub epoch_eval: bool,
    /// Directory receiving a checkpoint per epoch and `final.gtcn`.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            base_lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            weights: LossWeights::default(),
            m: 2,
            baseline_batch: 8,
            seed: 0,
            mode: TrainMode::Gtcn,
            toggles: Toggles::ALL,
            fine_tune_epochs: 5,
            augment: AugmentConfig::default(),
            gan: GanConfig::default(),
            dropout: crate::models::classifier::DEFAULT_DROPOUT,
            epoch_eval: false,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.epochs % 2 != 0 {
            return Err(Error::invalid(format!("epochs must be a positive even number, got {}", self.epochs)));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::invalid("Adam betas must lie in [0,1) and epsilon must be positive"));
        }
        if self.m == 0 || self.baseline_batch < 2 {
            return Err(Error::invalid("m must be ≥ 1 and the baseline batch ≥ 2"));
        }
        self.weights.validate()?;
        self.augment.validate()
    }
}

/// Keys accepted by [`TrainConfig::set`], in the order [`TrainConfig::entries`]
/// reports them.
pub const KEYS: [&str; 24] = [
    "epochs",
    "base_lr",
    "beta1",
    "beta2",
    "adam_eps",
    "lambda",
    "eta_a",
    "eta_b",
    "eta_c",
    "m",
    "baseline_batch",
    "seed",
    "mode",
    "toggles",
    "fine_tune_epochs",
    "rotation_deg",
    "intensity",
    "color",
    "scale",
    "gan_width",
    "gan_blocks",
    "disc_width",
    "dropout",
    "epoch_eval",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

fn range(key: &str, value: &str) -> Result<(f32, f32)> {
    match value.split(',').collect::<Vec<_>>()[..] {
        [lo, hi] => Ok((num(key, lo)?, num(key, hi)?)),
        _ => Err(Error::invalid(format!("`{key}` expects `lo,hi`, got `{value}`"))),
    }
}

impl TrainConfig {
    /// Sets one field from its textual form. `margins` is an alias that
    /// loads a named margin preset (face, dogs-cats, artist).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "epochs" => self.epochs = num(key, v)?,
            "base_lr" => self.base_lr = num(key, v)?,
            "beta1" => self.beta1 = num(key, v)?,
            "beta2" => self.beta2 = num(key, v)?,
            "adam_eps" => self.adam_eps = num(key, v)?,
            "lambda" => self.weights.lambda = num(key, v)?,
            "eta_a" => self.weights.eta_a = num(key, v)?,
            "eta_b" => self.weights.eta_b = num(key, v)?,
            "eta_c" => self.weights.eta_c = num(key, v)?,
            "margins" => {
                let lambda = self.weights.lambda;
                self.weights = match v {
                    "face" => LossWeights::FACE,
                    "dogs-cats" => LossWeights::DOGS_CATS,
                    "artist" => LossWeights::ARTIST,
                    _ => return Err(Error::invalid(format!("unknown margin preset `{v}`"))),
                };
                self.weights.lambda = lambda;
            }
            "m" => self.m = num(key, v)?,
            "baseline_batch" => self.baseline_batch = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "mode" => self.mode = v.parse()?,
            "toggles" => self.toggles = Toggles::parse(v)?,
            "fine_tune_epochs" => self.fine_tune_epochs = num(key, v)?,
            "rotation_deg" => self.augment.rotation_deg = num(key, v)?,
            "intensity" => self.augment.intensity = range(key, v)?,
            "color" => self.augment.color = range(key, v)?,
            "scale" => self.augment.scale = range(key, v)?,
            "gan_width" => self.gan.generator.width = num(key, v)?,
            "gan_blocks" => self.gan.generator.blocks = num(key, v)?,
            "disc_width" => self.gan.disc_width = num(key, v)?,
            "dropout" => self.dropout = num(key, v)?,
            "epoch_eval" => self.epoch_eval = num(key, v)?,
            _ => return Err(Error::invalid(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Every settable field as `(key, value)`; feeding these back through
    /// [`TrainConfig::set`] reproduces the configuration exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let r = |(lo, hi): (f32, f32)| format!("{lo},{hi}");
        let values = [
            self.epochs.to_string(),
            self.base_lr.to_string(),
            self.beta1.to_string(),
            self.beta2.to_string(),
            self.adam_eps.to_string(),
            self.weights.lambda.to_string(),
            self.weights.eta_a.to_string(),
            self.weights.eta_b.to_string(),
            self.weights.eta_c.to_string(),
            self.m.to_string(),
            self.baseline_batch.to_string(),
            self.seed.to_string(),
            self.mode.to_string(),
            self.toggles.to_string(),
            self.fine_tune_epochs.to_string(),
            self.augment.rotation_deg.to_string(),
            r(self.augment.intensity),
            r(self.augment.color),
            r(self.augment.scale),
            self.gan.generator.width.to_string(),
            self.gan.generator.blocks.to_string(),
            self.gan.disc_width.to_string(),
            self.dropout.to_string(),
            self.epoch_eval.to_string(),
        ];
        KEYS.into_iter().zip(values).collect()
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Learning rate for `epoch`: constant over the first half, then linear
/// decay reaching zero at `epochs`.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> Result<f32> {
    if epoch >= cfg.epochs {
        return Err(Error::invalid(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    Ok(schedule(cfg.base_lr, cfg.epochs, epoch))
}

pub(crate) fn schedule(base: f32, epochs: usize, epoch: usize) -> f32 {
    let half = epochs as f64 / 2.0;
    if (epoch as f64) < half {
        base
    } else {
        (base as f64 * (epochs - epoch) as f64 / half) as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(&cfg, 0).unwrap(), 0.0002);
        assert_eq!(lr_at(&cfg, 50).unwrap(), 0.0002);
        assert!((lr_at(&cfg, 75).unwrap() - 0.0001).abs() < 1e-12);
        assert!(lr_at(&cfg, 100).is_err());
        assert_eq!(schedule(cfg.base_lr, 100, 100), 0.0);
    }

    #[test]
    fn schedule_is_non_increasing() {
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        let lrs: Vec<f32> = (0..20).map(|e| lr_at(&cfg, e).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert!(lrs.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn toggles_parse_and_display() {
        assert_eq!(Toggles::parse("joint").unwrap(), Toggles { joint: true, ..Toggles::NONE });
        assert_eq!(Toggles::parse("all").unwrap(), Toggles::ALL);
        assert_eq!(Toggles::parse("").unwrap(), Toggles::NONE);
        assert!(Toggles::parse("joint,bogus").is_err());
        assert_eq!(Toggles::ALL.to_string(), "joint,af,ql,st");
        assert_eq!(Toggles::parse(&Toggles::ALL.to_string()).unwrap(), Toggles::ALL);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 3, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { base_lr: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!("gtcn".parse::<TrainMode>().is_ok());
        assert!("svm".parse::<TrainMode>().is_err());
    }

    #[test]
    fn entries_round_trip() {
        let mut cfg = TrainConfig {
            seed: 7,
            toggles: Toggles::parse("joint,st").unwrap(),
            mode: TrainMode::Separate,
            ..TrainConfig::default()
        };
        cfg.set("intensity", "0.7,1.3").unwrap();
        cfg.set("margins", "artist").unwrap();
        let mut back = TrainConfig::default();
        for (k, v) in cfg.entries() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, cfg);
        assert_eq!(back.weights.eta_c, 1.5);
    }

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# comment\nepochs = 4\n\nseed=3 # trailing\n").unwrap();
        assert_eq!(kv, vec![("epochs".into(), "4".into()), ("seed".into(), "3".into())]);
        assert!(parse_kv("epochs 4").is_err());
        let mut cfg = TrainConfig::default();
        assert!(cfg.set("nonsense", "1").is_err());
        assert!(cfg.set("epochs", "many").is_err());
        assert!(cfg.set("scale", "1.0").is_err());
    }
}
