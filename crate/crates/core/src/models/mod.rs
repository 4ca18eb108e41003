//! Network builders and the aggregate trainable state.

pub mod checkpoint;
pub mod classifier;
pub mod discriminator;
pub mod generator;
pub mod params;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::Archive;
pub use classifier::{Classifier, ClassifierOutput, Mode, ParamSelector};
pub use discriminator::Discriminator;
pub use generator::{Generator, GeneratorConfig};
pub use params::{Bound, ParamSet};

use crate::autodiff::ops::sigmoid;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanConfig {
    pub generator: GeneratorConfig,
    pub disc_width: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            disc_width: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    pub classes: usize,
    pub res: usize,
    pub dropout: f32,
    /// `None` builds a classifier-only model.
    pub gan: Option<GanConfig>,
}

impl ArchConfig {
    fn encode(&self) -> Tensor {
        let (gw, gb, dw) = match self.gan {
            Some(g) => (g.generator.width, g.generator.blocks, g.disc_width),
            None => (0, 0, 0),
        };
        let v = [self.classes, self.res, gw, gb, dw].map(|x| x as f32);
        Tensor::new(vec![6], vec![v[0], v[1], self.dropout, v[2], v[3], v[4]]).expect("fixed length")
    }

    fn decode(t: &Tensor) -> Result<Self> {
        let d = t.data();
        if d.len() != 6 {
            return Err(Error::Format("malformed architecture record".into()));
        }
        let u = |v: f32| v as usize;
        let gan = (d[3] > 0.0).then(|| GanConfig {
            generator: GeneratorConfig {
                width: u(d[3]),
                blocks: u(d[4]),
            },
            disc_width: u(d[5]),
        });
        Ok(Self {
            classes: u(d[0]),
            res: u(d[1]),
            dropout: d[2],
            gan,
        })
    }
}

/// Cross-class translators and their discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct Translators {
    pub g_ab: Generator,
    pub g_ba: Generator,
    pub d_a: Discriminator,
    pub d_b: Discriminator,
}

/// All trainable state of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct GtcnModel {
    pub arch: ArchConfig,
    pub classifier: Classifier,
    pub translators: Option<Translators>,
    /// `alpha_raw` and `beta_raw`; the fade-in weights are their sigmoids.
    pub fade: ParamSet,
}

const MODEL_PREFIXES: [&str; 5] = ["classifier.", "g_ab.", "g_ba.", "d_a.", "d_b."];

impl GtcnModel {
    pub fn new(arch: ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        let classifier = Classifier::new(arch.classes, arch.res, arch.dropout, rng)?;
        let translators = match arch.gan {
            Some(g) => {
                if arch.res % 16 != 0 {
                    return Err(Error::invalid(format!("resolution {} is not divisible by 16", arch.res)));
                }
                Some(Translators {
                    g_ab: Generator::new(g.generator, rng)?,
                    g_ba: Generator::new(g.generator, rng)?,
                    d_a: Discriminator::new(g.disc_width, rng)?,
                    d_b: Discriminator::new(g.disc_width, rng)?,
                })
            }
            None => None,
        };
        let mut fade = ParamSet::new();
        fade.push("alpha_raw", Tensor::scalar(0.0));
        fade.push("beta_raw", Tensor::scalar(0.0));
        Ok(Self {
            arch,
            classifier,
            translators,
            fade,
        })
    }

    pub fn alpha(&self) -> f32 {
        sigmoid(self.fade.tensor(0).item())
    }

    pub fn beta(&self) -> f32 {
        sigmoid(self.fade.tensor(1).item())
    }

    fn param_sets(&self) -> Vec<(&'static str, &ParamSet)> {
        let mut v = vec![
            ("classifier.", &self.classifier.params),
            ("classifier.", &self.classifier.buffers),
        ];
        if let Some(t) = &self.translators {
            v.push(("g_ab.", &t.g_ab.params));
            v.push(("g_ba.", &t.g_ba.params));
            v.push(("d_a.", &t.d_a.params));
            v.push(("d_b.", &t.d_b.params));
        }
        v.push(("fade.", &self.fade));
        v
    }

    fn param_sets_mut(&mut self) -> Vec<(&'static str, &mut ParamSet)> {
        let mut v = vec![
            ("classifier.", &mut self.classifier.params),
            ("classifier.", &mut self.classifier.buffers),
        ];
        if let Some(t) = &mut self.translators {
            v.push(("g_ab.", &mut t.g_ab.params));
            v.push(("g_ba.", &mut t.g_ba.params));
            v.push(("d_a.", &mut t.d_a.params));
            v.push(("d_b.", &mut t.d_b.params));
        }
        v.push(("fade.", &mut self.fade));
        v
    }

    /// Total scalar count across every network and the fade-in pair.
    pub fn total_parameters(&self) -> usize {
        self.param_sets().iter().map(|(_, p)| p.numel()).sum()
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new();
        a.insert("meta.arch", self.arch.encode());
        for (prefix, set) in self.param_sets() {
            for (name, t) in set.iter() {
                a.insert(format!("{prefix}{name}"), t.clone());
            }
        }
        a
    }

    /// Rebuilds a model from an archive; entries outside the model's
    /// namespaces (optimizer state) are ignored.
    pub fn from_archive(a: &Archive) -> Result<Self> {
        let arch = ArchConfig::decode(a.require("meta.arch")?)?;
        let mut model = Self::new(arch, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::Format(format!("architecture record rejected: {e}")))?;
        for (prefix, set) in model.param_sets_mut() {
            set.load_from(prefix, |n| a.get(n))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

/// True when `name` belongs to model state rather than optimizer state.
pub fn is_model_entry(name: &str) -> bool {
    name == "meta.arch" || name.starts_with("fade.") || MODEL_PREFIXES.iter().any(|p| name.starts_with(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(gan: bool) -> ArchConfig {
        ArchConfig {
            classes: 2,
            res: 32,
            dropout: 0.5,
            gan: gan.then_some(GanConfig {
                generator: GeneratorConfig { width: 2, blocks: 1 },
                disc_width: 2,
            }),
        }
    }

    #[test]
    fn fade_starts_at_one_half() {
        let m = GtcnModel::new(arch(true), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.alpha(), 0.5);
        assert_eq!(m.beta(), 0.5);
    }

    #[test]
    fn archive_round_trip() {
        for gan in [false, true] {
            let m = GtcnModel::new(arch(gan), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let a = m.to_archive();
            let back = GtcnModel::from_archive(&a).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_archive().to_bytes().unwrap(), a.to_bytes().unwrap());
            assert_eq!(back.translators.is_some(), gan);
        }
    }

    #[test]
    fn missing_tensor_is_an_error() {
        let m = GtcnModel::new(arch(false), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut a = Archive::new();
        for (n, t) in m.to_archive().iter() {
            if n != "classifier.w3" {
                a.insert(n, t.clone());
            }
        }
        let err = GtcnModel::from_archive(&a).unwrap_err();
        assert!(err.to_string().contains("classifier.w3"));
    }

    #[test]
    fn entry_namespaces() {
        assert!(is_model_entry("classifier.w1"));
        assert!(is_model_entry("fade.alpha_raw"));
        assert!(!is_model_entry("opt.c.m.w1"));
    }
}
