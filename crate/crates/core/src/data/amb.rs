//! Noise sampling and the four-part augmented mini-batch.

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::Translators;
use crate::tensor::Tensor;

/// `batch×side×side×3` i.i.d. uniform noise on [-1,1].
pub fn sample_noise(batch: usize, side: usize, rng: &mut impl Rng) -> Tensor {
    assert!(batch >= 1 && side >= 1, "noise needs a positive batch and side");
    Tensor::from_fn(&[batch, side, side, 3], |_| rng.random_range(-1.0..=1.0))
}

/// Real samples of classes A and B with their cross-class translations.
/// `x_tilde_a` holds translations of B samples into class A and carries
/// label A; `x_tilde_b` is the converse.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMiniBatch {
    pub x_a: Tensor,
    pub x_tilde_a: Tensor,
    pub x_b: Tensor,
    pub x_tilde_b: Tensor,
    pub class_a: usize,
    pub class_b: usize,
    pub iteration: usize,
}

impl AugmentedMiniBatch {
    pub fn m(&self) -> usize {
        self.x_a.shape()[0]
    }

    /// All 4m samples in the order `x_a, x̃_a, x_b, x̃_b`.
    pub fn images(&self) -> Result<Tensor> {
        Tensor::concat_batch(&[&self.x_a, &self.x_tilde_a, &self.x_b, &self.x_tilde_b])
    }

    pub fn labels(&self) -> Vec<usize> {
        let m = self.m();
        [self.class_a, self.class_a, self.class_b, self.class_b]
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c, m))
            .collect()
    }
}

/// Whether translators see fresh uniform noise or zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Stochastic,
    Zero,
}

pub fn noise_for(mode: NoiseMode, batch: usize, side: usize, rng: &mut impl Rng) -> Tensor {
    match mode {
        NoiseMode::Stochastic => sample_noise(batch, side, rng),
        NoiseMode::Zero => Tensor::zeros(&[batch, side, side, 3]),
    }
}

/// Builds `{x_A, G_BA(x_B, z), x_B, G_AB(x_A, z')}` from m real samples per
/// class; each sample gets its own noise draw.
pub fn build_amb(
    real_a: &Tensor,
    real_b: &Tensor,
    classes: (usize, usize),
    translators: &Translators,
    noise: NoiseMode,
    iteration: usize,
    rng: &mut impl Rng,
) -> Result<AugmentedMiniBatch> {
    if real_a.shape() != real_b.shape() || real_a.rank() != 4 {
        return Err(Error::Shape(format!(
            "class batches must share an N×H×W×3 shape, got {:?} and {:?}",
            real_a.shape(),
            real_b.shape()
        )));
    }
    if classes.0 == classes.1 {
        return Err(Error::invalid("augmented mini-batch needs two distinct classes"));
    }
    let m = real_a.shape()[0];
    let side = real_a.shape()[1] / 4;
    let z_ab = noise_for(noise, m, side, rng);
    let z_ba = noise_for(noise, m, side, rng);
    Ok(AugmentedMiniBatch {
        x_a: real_a.clone(),
        x_tilde_a: translators.g_ba.translate(real_b, &z_ba)?,
        x_b: real_b.clone(),
        x_tilde_b: translators.g_ab.translate(real_a, &z_ab)?,
        class_a: classes.0,
        class_b: classes.1,
        iteration,
    })
}
