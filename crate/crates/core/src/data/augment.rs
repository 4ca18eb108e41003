//! Classical photometric and geometric augmentation.

use rand::Rng;
use rayon::prelude::*;

use super::seed::{stream, tag};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f32,
    pub intensity: (f32, f32),
    /// Per-channel multiplier range.
    pub color: (f32, f32),
    /// Zoom range about the image centre.
    pub scale: (f32, f32),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_deg: 10.0,
            intensity: (0.8, 1.2),
            color: (0.9, 1.1),
            scale: (0.9, 1.1),
        }
    }
}

impl AugmentConfig {
    pub const IDENTITY: Self = Self {
        rotation_deg: 0.0,
        intensity: (1.0, 1.0),
        color: (1.0, 1.0),
        scale: (1.0, 1.0),
    };

    pub fn validate(&self) -> Result<()> {
        let contains_one = |(lo, hi): (f32, f32)| lo <= 1.0 && 1.0 <= hi && lo > 0.0;
        if !(self.rotation_deg >= 0.0) || !contains_one(self.intensity) || !contains_one(self.color) || !contains_one(self.scale) {
            return Err(Error::invalid(format!(
                "augmentation ranges must be positive and contain the identity: {self:?}"
            )));
        }
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f32, f32)) -> f32 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Reflects an integer coordinate into `0..n` (edge pixel not repeated).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Rotates an H×W×C image by `degrees` (counter-clockwise as displayed)
/// and zooms by `scale` about its centre, sampling bilinearly with
/// reflected borders.
pub fn rotate_scale(img: &Tensor, degrees: f32, scale: f32) -> Tensor {
    let s = img.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (h as f32 - 1.0) / 2.0;
    let cx = (w as f32 - 1.0) / 2.0;
    let src = img.data();
    let mut out = Tensor::zeros(s);
    let dst = out.data_mut();
    for r in 0..h {
        for col in 0..w {
            let x = col as f32 - cx;
            let y = r as f32 - cy;
            let xs = (cos * x - sin * y) / scale + cx;
            let ys = (sin * x + cos * y) / scale + cy;
            let (x0, y0) = (xs.floor(), ys.floor());
            let (fx, fy) = (xs - x0, ys - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let xi = [reflect(x0, w), reflect(x0 + 1, w)];
            let yi = [reflect(y0, h), reflect(y0 + 1, h)];
            let wts = [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx];
            let taps = [(yi[0], xi[0]), (yi[0], xi[1]), (yi[1], xi[0]), (yi[1], xi[1])];
            for ch in 0..c {
                let mut acc = 0.0;
                for (&wt, &(yy, xx)) in wts.iter().zip(&taps) {
                    if wt != 0.0 {
                        acc += wt * src[(yy * w + xx) * c + ch];
                    }
                }
                dst[(r * w + col) * c + ch] = acc;
            }
        }
    }
    out
}

/// One random draw of every transform, applied to an H×W×3 image in
/// [-1,1]. The result is clamped to [-1,1].
pub fn augment(img: &Tensor, cfg: &AugmentConfig, rng: &mut impl Rng) -> Tensor {
    let angle = if cfg.rotation_deg > 0.0 {
        rng.random_range(-cfg.rotation_deg..=cfg.rotation_deg)
    } else {
        0.0
    };
    let scale = draw(rng, cfg.scale);
    let intensity = draw(rng, cfg.intensity);
    let color: [f32; 3] = std::array::from_fn(|_| draw(rng, cfg.color));
    let mut out = if angle == 0.0 && scale == 1.0 {
        img.clone()
    } else {
        rotate_scale(img, angle, scale)
    };
    for px in out.data_mut().chunks_mut(3) {
        for (v, m) in px.iter_mut().zip(color) {
            *v = (*v * intensity * m).clamp(-1.0, 1.0);
        }
    }
    out
}

/// Augments a list of images in parallel; sample `i` uses the stream
/// `(seed, epoch, ids[i])`, so results do not depend on scheduling.
pub fn augment_batch(images: &[&Tensor], ids: &[u64], cfg: &AugmentConfig, seed: u64, epoch: u64) -> Vec<Tensor> {
    images
        .par_iter()
        .zip(ids.par_iter())
        .map(|(img, &id)| augment(img, cfg, &mut stream(seed, &[tag("augment"), epoch, id])))
        .collect()
}
