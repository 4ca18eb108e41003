//! Synthetic visually-similar classes: every class draws its structure
//! (background, ellipses, tint) from one shared distribution and differs
//! only in a zero-mean texture, so class mean luminance is matched.

use std::f32::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::seed::{stream, tag};
use super::{Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const STYLE_NAMES: [&str; 4] = ["stripes", "dots", "checks", "rings"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub res: usize,
    pub structure_seed: u64,
    /// Texture amplitude.
    pub contrast: f32,
    /// Texture cycles across the image width.
    pub frequency: f32,
    /// Standard deviation of additive pixel noise.
    pub noise: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            per_class: 500,
            test_per_class: 100,
            res: 64,
            structure_seed: 0,
            contrast: 0.2,
            frequency: 6.0,
            noise: 0.1,
        }
    }
}

struct Ellipse {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    cos: f32,
    sin: f32,
    level: f32,
}

/// Zero-mean texture value at normalized coordinates `(u, v)` ∈ [0,1)².
fn texture(style: usize, u: f32, v: f32, freq: f32, phase: (f32, f32), angle: f32) -> f32 {
    let (s, c) = angle.sin_cos();
    match style {
        0 => (TAU * freq * (c * u + s * v) + phase.0).sin(),
        1 => {
            // round blobs on a lattice; E[blob] = 1/8, sd ≈ 0.234, rescaled
            // to the 1/√2 deviation of a sinusoid
            let a = (TAU * freq * u + phase.0).cos();
            let b = (TAU * freq * v + phase.1).cos();
            let blob = (a * b).max(0.0).powi(2);
            (blob - 0.125) * 3.02
        }
        2 => ((TAU * freq * u + phase.0).sin() * (TAU * freq * v + phase.1).sin()).signum() * 0.7,
        _ => {
            let r = ((u - 0.5 + phase.0 / TAU * 0.2).powi(2) + (v - 0.5 + phase.1 / TAU * 0.2).powi(2)).sqrt();
            (TAU * freq * r).cos()
        }
    }
}

fn render(cfg: &SynthConfig, style: usize, structure: &mut impl Rng, style_rng: &mut impl Rng) -> Tensor {
    let r = cfg.res;
    let base: f32 = structure.random_range(-0.3..0.3);
    let tint: [f32; 3] = std::array::from_fn(|_| structure.random_range(-0.15..0.15));
    let count = structure.random_range(1..=3);
    let ellipses: Vec<Ellipse> = (0..count)
        .map(|_| {
            let theta: f32 = structure.random_range(0.0..TAU);
            Ellipse {
                cx: structure.random_range(0.2..0.8),
                cy: structure.random_range(0.2..0.8),
                rx: structure.random_range(0.1..0.35),
                ry: structure.random_range(0.1..0.35),
                cos: theta.cos(),
                sin: theta.sin(),
                level: structure.random_range(-0.4..0.4),
            }
        })
        .collect();
    let freq = cfg.frequency * style_rng.random_range(0.85..1.15);
    let phase = (style_rng.random_range(0.0..TAU), style_rng.random_range(0.0..TAU));
    let angle = style_rng.random_range(-0.25..0.25);
    let noise = Normal::new(0.0f32, cfg.noise.max(1e-12)).expect("finite sigma");
    let mut out = Tensor::zeros(&[r, r, 3]);
    let data = out.data_mut();
    for y in 0..r {
        for x in 0..r {
            let u = (x as f32 + 0.5) / r as f32;
            let v = (y as f32 + 0.5) / r as f32;
            let mut lum = base;
            for e in &ellipses {
                let dx = u - e.cx;
                let dy = v - e.cy;
                let a = (e.cos * dx + e.sin * dy) / e.rx;
                let b = (-e.sin * dx + e.cos * dy) / e.ry;
                if a * a + b * b <= 1.0 {
                    lum += e.level;
                }
            }
            lum += cfg.contrast * texture(style, u, v, freq, phase, angle);
            for ch in 0..3 {
                let n = if cfg.noise > 0.0 { noise.sample(style_rng) } else { 0.0 };
                data[(y * r + x) * 3 + ch] = (lum + tint[ch] + n).clamp(-1.0, 1.0);
            }
        }
    }
    out
}

/// Builds a dataset whose classes share structure statistics and differ
/// in texture style only. Deterministic in `(cfg, seed)`.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    if cfg.classes != 2 && cfg.classes != 4 {
        return Err(Error::invalid(format!("synthetic data supports 2 or 4 classes, got {}", cfg.classes)));
    }
    if cfg.per_class < 2 {
        return Err(Error::invalid(format!("per_class must be at least 2, got {}", cfg.per_class)));
    }
    if ![32, 64, 128].contains(&cfg.res) {
        return Err(Error::invalid(format!("synthetic resolution must be 32, 64 or 128, got {}", cfg.res)));
    }
    let make = |split: &str, n: usize| -> Vec<LabeledImage> {
        let split_tag = tag(split);
        let mut out = Vec::with_capacity(n * cfg.classes);
        for class in 0..cfg.classes {
            for i in 0..n {
                let path = [split_tag, class as u64, i as u64];
                let mut structure = stream(cfg.structure_seed ^ tag("structure"), &path);
                let mut style = stream(seed, &path);
                out.push(LabeledImage {
                    pixels: render(cfg, class, &mut structure, &mut style),
                    label: class,
                    group: None,
                });
            }
        }
        out
    };
    let ds = Dataset {
        classes: STYLE_NAMES[..cfg.classes].iter().map(|s| s.to_string()).collect(),
        res: cfg.res,
        train: make("train", cfg.per_class),
        test: make("test", cfg.test_per_class),
    };
    Ok(ds)
}
