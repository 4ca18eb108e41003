//! Raw numeric kernels over `N×H×W×C` buffers.
//!
//! Convolutions lower to im2col plus a single GEMM per call. Every reduction
//! runs in a fixed sequential order so results are bitwise reproducible.

/// Spatial geometry of a convolution from a `large` image to a `small` one.
///
/// For a forward convolution `large` is the input; for a transposed
/// convolution `large` is the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// Rows of the patch matrix.
    pub fn rows(&self) -> usize {
        self.n * self.ho * self.wo
    }

    /// Columns of the patch matrix.
    pub fn cols(&self) -> usize {
        self.kh * self.kw * self.c
    }
}

/// `floor((n + 2p - k) / s) + 1`, or `None` when the window does not fit.
pub fn conv_out_size(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if padded < k || stride == 0 {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

pub fn im2col(x: &[f32], g: &ConvGeom) -> Vec<f32> {
    let k = g.cols();
    let mut cols = vec![0.0f32; g.rows() * k];
    let mut row = 0;
    for n in 0..g.n {
        let img = &x[n * g.h * g.w * g.c..(n + 1) * g.h * g.w * g.c];
        for oh in 0..g.ho {
            for ow in 0..g.wo {
                let dst = &mut cols[row * k..(row + 1) * k];
                for ki in 0..g.kh {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    for kj in 0..g.kw {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        if iw < 0 || iw >= g.w as isize {
                            continue;
                        }
                        let src = (ih as usize * g.w + iw as usize) * g.c;
                        let off = (ki * g.kw + kj) * g.c;
                        dst[off..off + g.c].copy_from_slice(&img[src..src + g.c]);
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Scatter-adds a patch matrix back onto an image buffer (adjoint of [`im2col`]).
pub fn col2im(cols: &[f32], g: &ConvGeom) -> Vec<f32> {
    let k = g.cols();
    let mut x = vec![0.0f32; g.n * g.h * g.w * g.c];
    let mut row = 0;
    for n in 0..g.n {
        let img = &mut x[n * g.h * g.w * g.c..(n + 1) * g.h * g.w * g.c];
        for oh in 0..g.ho {
            for ow in 0..g.wo {
                let src = &cols[row * k..(row + 1) * k];
                for ki in 0..g.kh {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    for kj in 0..g.kw {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        if iw < 0 || iw >= g.w as isize {
                            continue;
                        }
                        let dst = (ih as usize * g.w + iw as usize) * g.c;
                        let off = (ki * g.kw + kj) * g.c;
                        for (d, s) in img[dst..dst + g.c].iter_mut().zip(&src[off..off + g.c]) {
                            *d += s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    x
}

/// Row-major matrix view used by [`gemm`]: `rows×cols`, optionally transposed.
#[derive(Clone, Copy)]
pub struct Mat<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = a · b + beta · c` with `c` row-major `m×n`.
pub fn gemm(a: Mat<'_>, b: Mat<'_>, beta: f32, c: &mut [f32]) {
    let (m, k) = a.logical();
    let (k2, n) = b.logical();
    assert_eq!(k, k2, "gemm inner dimensions");
    assert_eq!(c.len(), m * n, "gemm output size");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the asserts above and `Mat::new` guarantee every index touched
    // by the given strides lies inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Window pooling over `N×H×W×C`. Returns the output and, for max pooling,
/// the flat input index chosen for each output element.
pub fn pool_forward(
    x: &[f32],
    dims: [usize; 4],
    k: usize,
    stride: usize,
    max: bool,
) -> (Vec<f32>, Vec<u32>, usize, usize) {
    let [n, h, w, c] = dims;
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let mut out = vec![0.0f32; n * ho * wo * c];
    let mut arg = if max { vec![0u32; out.len()] } else { Vec::new() };
    let inv = 1.0 / (k * k) as f32;
    for b in 0..n {
        for oh in 0..ho {
            for ow in 0..wo {
                for ch in 0..c {
                    let o = ((b * ho + oh) * wo + ow) * c + ch;
                    if max {
                        let mut best = f32::NEG_INFINITY;
                        let mut best_i = 0usize;
                        for ki in 0..k {
                            for kj in 0..k {
                                let i = ((b * h + oh * stride + ki) * w + ow * stride + kj) * c + ch;
                                // strict comparison keeps the first index on ties
                                if x[i] > best {
                                    best = x[i];
                                    best_i = i;
                                }
                            }
                        }
                        out[o] = best;
                        arg[o] = best_i as u32;
                    } else {
                        let mut s = 0.0;
                        for ki in 0..k {
                            for kj in 0..k {
                                s += x[((b * h + oh * stride + ki) * w + ow * stride + kj) * c + ch];
                            }
                        }
                        out[o] = s * inv;
                    }
                }
            }
        }
    }
    (out, arg, ho, wo)
}

pub fn avg_pool_backward(
    dy: &[f32],
    dims: [usize; 4],
    k: usize,
    stride: usize,
    ho: usize,
    wo: usize,
) -> Vec<f32> {
    let [n, h, w, c] = dims;
    let mut dx = vec![0.0f32; n * h * w * c];
    let inv = 1.0 / (k * k) as f32;
    for b in 0..n {
        for oh in 0..ho {
            for ow in 0..wo {
                for ch in 0..c {
                    let g = dy[((b * ho + oh) * wo + ow) * c + ch] * inv;
                    for ki in 0..k {
                        for kj in 0..k {
                            dx[((b * h + oh * stride + ki) * w + ow * stride + kj) * c + ch] += g;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Per-group normalization statistics for a buffer laid out as
/// `groups_outer × spatial × channels`.
///
/// Batch norm uses one outer group (statistics per channel over `N·H·W`);
/// instance norm uses `N` outer groups (statistics per image and channel).
pub struct NormStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub inv_std: Vec<f32>,
}

pub fn norm_stats(x: &[f32], outer: usize, spatial: usize, c: usize, eps: f32) -> NormStats {
    let mut mean = vec![0.0f32; outer * c];
    let mut var = vec![0.0f32; outer * c];
    let cnt = spatial as f64;
    for o in 0..outer {
        let base = o * spatial * c;
        let mut s = vec![0.0f64; c];
        for p in 0..spatial {
            let row = &x[base + p * c..base + (p + 1) * c];
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += *v as f64;
            }
        }
        let mu: Vec<f64> = s.iter().map(|v| v / cnt).collect();
        let mut q = vec![0.0f64; c];
        for p in 0..spatial {
            let row = &x[base + p * c..base + (p + 1) * c];
            for ch in 0..c {
                let d = row[ch] as f64 - mu[ch];
                q[ch] += d * d;
            }
        }
        for ch in 0..c {
            mean[o * c + ch] = mu[ch] as f32;
            var[o * c + ch] = (q[ch] / cnt) as f32;
        }
    }
    let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    NormStats { mean, var, inv_std }
}

/// `xhat = (x - mean) * inv_std`, `y = gamma * xhat + beta`.
pub fn norm_apply(
    x: &[f32],
    outer: usize,
    spatial: usize,
    c: usize,
    mean: &[f32],
    inv_std: &[f32],
    gamma: &[f32],
    beta: &[f32],
) -> (Vec<f32>, Vec<f32>) {
    let mut xhat = vec![0.0f32; x.len()];
    let mut y = vec![0.0f32; x.len()];
    for o in 0..outer {
        for p in 0..spatial {
            let base = (o * spatial + p) * c;
            for ch in 0..c {
                let s = o * c + ch;
                let h = (x[base + ch] - mean[s]) * inv_std[s];
                xhat[base + ch] = h;
                y[base + ch] = gamma[ch] * h + beta[ch];
            }
        }
    }
    (xhat, y)
}

/// Backward through normalization with batch statistics.
/// Returns `(dx, dgamma, dbeta)`.
pub fn norm_backward(
    dy: &[f32],
    xhat: &[f32],
    outer: usize,
    spatial: usize,
    c: usize,
    inv_std: &[f32],
    gamma: &[f32],
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    let mut dx = vec![0.0f32; dy.len()];
    let m = spatial as f32;
    for o in 0..outer {
        let mut sum_dxhat = vec![0.0f64; c];
        let mut sum_dxhat_xhat = vec![0.0f64; c];
        for p in 0..spatial {
            let base = (o * spatial + p) * c;
            for ch in 0..c {
                let g = dy[base + ch] as f64;
                let h = xhat[base + ch] as f64;
                dgamma[ch] += g * h;
                dbeta[ch] += g;
                let dh = g * gamma[ch] as f64;
                sum_dxhat[ch] += dh;
                sum_dxhat_xhat[ch] += dh * h;
            }
        }
        for p in 0..spatial {
            let base = (o * spatial + p) * c;
            for ch in 0..c {
                let s = o * c + ch;
                let dh = dy[base + ch] * gamma[ch];
                dx[base + ch] = inv_std[s] / m
                    * (m * dh
                        - sum_dxhat[ch] as f32
                        - xhat[base + ch] * sum_dxhat_xhat[ch] as f32);
            }
        }
    }
    (
        dx,
        dgamma.into_iter().map(|v| v as f32).collect(),
        dbeta.into_iter().map(|v| v as f32).collect(),
    )
}
