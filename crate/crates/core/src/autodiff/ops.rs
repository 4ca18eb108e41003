//! Forward and backward rules for every graph operation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, conv_out_size, ConvGeom, Mat};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    /// Bound per evaluation.
    Input,
    /// Trainable; gradients are usually requested for these.
    Param,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf(LeafKind),
    /// `[x: N×H×W×C, w: kh×kw×C×Cout]`
    Conv2d { stride: usize, pad: usize },
    /// `[x: N×H×W×Cin, w: kh×kw×Cout×Cin]`
    ConvTranspose2d {
        stride: usize,
        pad: usize,
        output_pad: usize,
    },
    /// `[x, gamma, beta]`, normalizes with the batch statistics.
    BatchNorm { eps: f32 },
    /// `[x, gamma, beta, running_mean, running_var]`
    BatchNormEval { eps: f32 },
    /// `[x, gamma, beta]`, statistics per image and channel.
    InstanceNorm { eps: f32 },
    Relu,
    LeakyRelu { slope: f32 },
    Tanh,
    Sigmoid,
    Log,
    Abs,
    Square,
    Clamp { lo: f32, hi: f32 },
    MaxPool { k: usize, stride: usize },
    AvgPool { k: usize, stride: usize },
    /// `[x: N×…, w: in×out]`
    Linear,
    /// Over the last axis.
    Softmax,
    /// Mean softmax cross-entropy of `m×k` logits against `labels`.
    SoftmaxCrossEntropy { labels: Vec<usize> },
    Dropout { p: f32, seed: u64, training: bool },
    /// Concatenation along the last axis.
    ConcatChannels,
    ConcatBatch,
    SliceBatch { start: usize, len: usize },
    Reshape { shape: Vec<usize> },
    Add,
    Sub,
    Mul,
    /// `[x, b]`, adds `b` along the last axis.
    BiasAdd,
    /// `scale * x + shift`
    Affine { scale: f32, shift: f32 },
    Sum,
    Mean,
    SumLastAxis,
    /// Index of the maximum along the last axis; not differentiable.
    Argmax,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf(LeafKind::Input) => "input",
            Op::Leaf(LeafKind::Param) => "param",
            Op::Leaf(LeafKind::Constant) => "constant",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
            Op::BatchNorm { .. } => "batch_norm",
            Op::BatchNormEval { .. } => "batch_norm_eval",
            Op::InstanceNorm { .. } => "instance_norm",
            Op::Relu => "relu",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Log => "log",
            Op::Abs => "abs",
            Op::Square => "square",
            Op::Clamp { .. } => "clamp",
            Op::MaxPool { .. } => "max_pool",
            Op::AvgPool { .. } => "avg_pool",
            Op::Linear => "linear",
            Op::Softmax => "softmax",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::Dropout { .. } => "dropout",
            Op::ConcatChannels => "concat_channels",
            Op::ConcatBatch => "concat_batch",
            Op::SliceBatch { .. } => "slice_batch",
            Op::Reshape { .. } => "reshape",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::BiasAdd => "bias_add",
            Op::Affine { .. } => "affine",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumLastAxis => "sum_last_axis",
            Op::Argmax => "argmax",
        }
    }
}

/// Forward-pass by-products kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub enum Saved {
    #[default]
    None,
    Indices(Vec<u32>),
    Norm {
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
        mean: Vec<f32>,
        var: Vec<f32>,
    },
    Mask(Vec<f32>),
    Probs(Vec<f32>),
}

type FwdResult = Result<(Tensor, Saved), String>;

fn tensor(shape: Vec<usize>, data: Vec<f32>) -> Result<Tensor, String> {
    Tensor::new(shape, data).map_err(|e| e.to_string())
}

fn dims4(t: &Tensor, what: &str) -> Result<[usize; 4], String> {
    match t.shape() {
        &[n, h, w, c] => Ok([n, h, w, c]),
        s => Err(format!("{what} must be rank 4 (N×H×W×C), got {s:?}")),
    }
}

fn arity(inputs: &[&Tensor], n: usize, op: &Op) -> Result<(), String> {
    if inputs.len() != n {
        return Err(format!("{} expects {n} inputs, got {}", op.name(), inputs.len()));
    }
    Ok(())
}

fn conv_geom(x: [usize; 4], w: &[usize], stride: usize, pad: usize) -> Result<(ConvGeom, usize), String> {
    let [n, h, wd, c] = x;
    let &[kh, kw, ci, co] = w else {
        return Err(format!("conv weight must be kh×kw×Cin×Cout, got {w:?}"));
    };
    if ci != c {
        return Err(format!("input has {c} channels, weight expects {ci}"));
    }
    let ho = conv_out_size(h, kh, stride, pad).ok_or("kernel larger than padded input")?;
    let wo = conv_out_size(wd, kw, stride, pad).ok_or("kernel larger than padded input")?;
    Ok((
        ConvGeom {
            n,
            h,
            w: wd,
            c,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        },
        co,
    ))
}

fn conv_t_geom(
    x: [usize; 4],
    w: &[usize],
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Result<(ConvGeom, usize), String> {
    let [n, h, wd, ci] = x;
    let &[kh, kw, co, wci] = w else {
        return Err(format!("transposed conv weight must be kh×kw×Cout×Cin, got {w:?}"));
    };
    if wci != ci {
        return Err(format!("input has {ci} channels, weight expects {wci}"));
    }
    if output_pad >= stride.max(1) {
        return Err("output padding must be smaller than the stride".into());
    }
    let big_h = ((h - 1) * stride + kh + output_pad)
        .checked_sub(2 * pad)
        .filter(|&v| v > 0)
        .ok_or("transposed conv output would be empty")?;
    let big_w = ((wd - 1) * stride + kw + output_pad)
        .checked_sub(2 * pad)
        .filter(|&v| v > 0)
        .ok_or("transposed conv output would be empty")?;
    let g = ConvGeom {
        n,
        h: big_h,
        w: big_w,
        c: co,
        kh,
        kw,
        stride,
        pad,
        ho: h,
        wo: wd,
    };
    if conv_out_size(big_h, kh, stride, pad) != Some(h) || conv_out_size(big_w, kw, stride, pad) != Some(wd) {
        return Err("inconsistent transposed conv geometry".into());
    }
    Ok((g, ci))
}

/// Shapes for a binary elementwise op; one side may be a single element.
fn broadcast(a: &Tensor, b: &Tensor) -> Result<Vec<usize>, String> {
    if a.shape() == b.shape() || b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else {
        Err(format!("elementwise shapes {:?} and {:?} differ", a.shape(), b.shape()))
    }
}

fn zip_bcast(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor, String> {
    let shape = broadcast(a, b)?;
    let n: usize = shape.iter().product();
    let (ad, bd) = (a.data(), b.data());
    let get = |d: &[f32], i: usize| if d.len() == 1 { d[0] } else { d[i] };
    tensor(shape, (0..n).map(|i| f(get(ad, i), get(bd, i))).collect())
}

/// Reduces a broadcast gradient back onto an operand's shape.
fn unbroadcast(grad: Vec<f32>, target: &Tensor) -> Tensor {
    if target.numel() == grad.len() {
        Tensor::new(target.shape().to_vec(), grad).expect("same numel")
    } else {
        let s: f64 = grad.iter().map(|&v| v as f64).sum();
        Tensor::new(target.shape().to_vec(), vec![s as f32]).expect("scalar")
    }
}

fn last_axis(t: &Tensor) -> (usize, usize) {
    let d = *t.shape().last().expect("rank ≥ 1");
    (t.numel() / d, d)
}

fn reduced_shape(t: &Tensor) -> Vec<usize> {
    if t.rank() <= 1 {
        vec![1]
    } else {
        t.shape()[..t.rank() - 1].to_vec()
    }
}

fn unary(x: &Tensor, f: impl Fn(f32) -> f32) -> FwdResult {
    Ok((x.map(f), Saved::None))
}

pub fn forward(op: &Op, inputs: &[&Tensor]) -> FwdResult {
    match op {
        Op::Leaf(_) => Err("leaves have no forward rule".into()),
        Op::Conv2d { stride, pad } => {
            arity(inputs, 2, op)?;
            let x = dims4(inputs[0], "conv input")?;
            let (g, co) = conv_geom(x, inputs[1].shape(), *stride, *pad)?;
            let cols = kernels::im2col(inputs[0].data(), &g);
            let mut out = vec![0.0; g.rows() * co];
            kernels::gemm(
                Mat::new(&cols, g.rows(), g.cols()),
                Mat::new(inputs[1].data(), g.cols(), co),
                0.0,
                &mut out,
            );
            Ok((tensor(vec![g.n, g.ho, g.wo, co], out)?, Saved::None))
        }
        Op::ConvTranspose2d {
            stride,
            pad,
            output_pad,
        } => {
            arity(inputs, 2, op)?;
            let x = dims4(inputs[0], "transposed conv input")?;
            let (g, ci) = conv_t_geom(x, inputs[1].shape(), *stride, *pad, *output_pad)?;
            let mut cols = vec![0.0; g.rows() * g.cols()];
            kernels::gemm(
                Mat::new(inputs[0].data(), g.rows(), ci),
                Mat::new(inputs[1].data(), g.cols(), ci).t(),
                0.0,
                &mut cols,
            );
            let out = kernels::col2im(&cols, &g);
            Ok((tensor(vec![g.n, g.h, g.w, g.c], out)?, Saved::None))
        }
        Op::BatchNorm { eps } | Op::InstanceNorm { eps } => {
            arity(inputs, 3, op)?;
            let [n, h, w, c] = dims4(inputs[0], "normalization input")?;
            check_affine(inputs, c)?;
            let (outer, spatial) = if matches!(op, Op::BatchNorm { .. }) {
                (1, n * h * w)
            } else {
                (n, h * w)
            };
            let st = kernels::norm_stats(inputs[0].data(), outer, spatial, c, *eps);
            let (xhat, y) = kernels::norm_apply(
                inputs[0].data(),
                outer,
                spatial,
                c,
                &st.mean,
                &st.inv_std,
                inputs[1].data(),
                inputs[2].data(),
            );
            Ok((
                tensor(inputs[0].shape().to_vec(), y)?,
                Saved::Norm {
                    xhat,
                    inv_std: st.inv_std,
                    mean: st.mean,
                    var: st.var,
                },
            ))
        }
        Op::BatchNormEval { eps } => {
            arity(inputs, 5, op)?;
            let [n, h, w, c] = dims4(inputs[0], "normalization input")?;
            check_affine(inputs, c)?;
            if inputs[3].numel() != c || inputs[4].numel() != c {
                return Err("running statistics must have one entry per channel".into());
            }
            let inv_std: Vec<f32> = inputs[4].data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            let (xhat, y) = kernels::norm_apply(
                inputs[0].data(),
                1,
                n * h * w,
                c,
                inputs[3].data(),
                &inv_std,
                inputs[1].data(),
                inputs[2].data(),
            );
            Ok((
                tensor(inputs[0].shape().to_vec(), y)?,
                Saved::Norm {
                    xhat,
                    inv_std,
                    mean: Vec::new(),
                    var: Vec::new(),
                },
            ))
        }
        Op::Relu => unary(inputs[0], |v| v.max(0.0)),
        Op::LeakyRelu { slope } => unary(inputs[0], |v| if v > 0.0 { v } else { slope * v }),
        Op::Tanh => unary(inputs[0], f32::tanh),
        Op::Sigmoid => unary(inputs[0], sigmoid),
        Op::Log => unary(inputs[0], f32::ln),
        Op::Abs => unary(inputs[0], f32::abs),
        Op::Square => unary(inputs[0], |v| v * v),
        Op::Clamp { lo, hi } => unary(inputs[0], |v| v.clamp(*lo, *hi)),
        Op::Affine { scale, shift } => unary(inputs[0], |v| scale * v + shift),
        Op::MaxPool { k, stride } | Op::AvgPool { k, stride } => {
            arity(inputs, 1, op)?;
            let d = dims4(inputs[0], "pooling input")?;
            if d[1] < *k || d[2] < *k || *stride == 0 {
                return Err(format!("pooling window {k} larger than input {:?}", &d[1..3]));
            }
            let max = matches!(op, Op::MaxPool { .. });
            let (out, arg, ho, wo) = kernels::pool_forward(inputs[0].data(), d, *k, *stride, max);
            let saved = if max { Saved::Indices(arg) } else { Saved::None };
            Ok((tensor(vec![d[0], ho, wo, d[3]], out)?, saved))
        }
        Op::Linear => {
            arity(inputs, 2, op)?;
            let x = inputs[0];
            let n = x.shape()[0];
            let fan_in = x.numel() / n;
            let &[wi, wo] = inputs[1].shape() else {
                return Err(format!("linear weight must be in×out, got {:?}", inputs[1].shape()));
            };
            if wi != fan_in {
                return Err(format!("linear expects {wi} features, input has {fan_in}"));
            }
            let mut out = vec![0.0; n * wo];
            kernels::gemm(
                Mat::new(x.data(), n, fan_in),
                Mat::new(inputs[1].data(), wi, wo),
                0.0,
                &mut out,
            );
            Ok((tensor(vec![n, wo], out)?, Saved::None))
        }
        Op::Softmax => {
            let x = inputs[0];
            let (rows, d) = last_axis(x);
            let mut out = vec![0.0; x.numel()];
            for r in 0..rows {
                softmax_row(&x.data()[r * d..(r + 1) * d], &mut out[r * d..(r + 1) * d]);
            }
            Ok((tensor(x.shape().to_vec(), out)?, Saved::None))
        }
        Op::SoftmaxCrossEntropy { labels } => {
            let x = inputs[0];
            if x.rank() != 2 {
                return Err(format!("cross-entropy expects m×k logits, got {:?}", x.shape()));
            }
            let (m, k) = (x.shape()[0], x.shape()[1]);
            if labels.len() != m {
                return Err(format!("{} labels for {m} rows", labels.len()));
            }
            let mut probs = vec![0.0; m * k];
            let mut total = 0.0f64;
            for (r, &y) in labels.iter().enumerate() {
                if y >= k {
                    return Err(format!("label {y} out of range for {k} classes"));
                }
                let row = &x.data()[r * k..(r + 1) * k];
                let mx = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f32>().ln();
                total += (lse - row[y]) as f64;
                softmax_row(row, &mut probs[r * k..(r + 1) * k]);
            }
            Ok((Tensor::scalar((total / m as f64) as f32), Saved::Probs(probs)))
        }
        Op::Dropout { p, seed, training } => {
            let x = inputs[0];
            if !*training || *p == 0.0 {
                return Ok((x.clone(), Saved::None));
            }
            if !(0.0..1.0).contains(p) {
                return Err(format!("dropout probability {p} outside [0,1)"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let keep = 1.0 / (1.0 - p);
            let mask: Vec<f32> = (0..x.numel())
                .map(|_| if rng.random::<f32>() < *p { 0.0 } else { keep })
                .collect();
            let out = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
            Ok((tensor(x.shape().to_vec(), out)?, Saved::Mask(mask)))
        }
        Op::ConcatChannels => {
            arity(inputs, 2, op)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.rank() != b.rank() || a.shape()[..a.rank() - 1] != b.shape()[..b.rank() - 1] {
                return Err(format!("cannot concat channels of {:?} and {:?}", a.shape(), b.shape()));
            }
            let (rows, ca) = last_axis(a);
            let cb = *b.shape().last().unwrap();
            let mut out = Vec::with_capacity(rows * (ca + cb));
            for r in 0..rows {
                out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
                out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
            }
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = ca + cb;
            Ok((tensor(shape, out)?, Saved::None))
        }
        Op::ConcatBatch => Ok((Tensor::concat_batch(inputs).map_err(|e| e.to_string())?, Saved::None)),
        Op::SliceBatch { start, len } => Ok((
            inputs[0].slice_batch(*start, *len).map_err(|e| e.to_string())?,
            Saved::None,
        )),
        Op::Reshape { shape } => Ok((
            inputs[0].clone().reshape(shape).map_err(|e| e.to_string())?,
            Saved::None,
        )),
        Op::Add => Ok((zip_bcast(inputs[0], inputs[1], |a, b| a + b)?, Saved::None)),
        Op::Sub => Ok((zip_bcast(inputs[0], inputs[1], |a, b| a - b)?, Saved::None)),
        Op::Mul => Ok((zip_bcast(inputs[0], inputs[1], |a, b| a * b)?, Saved::None)),
        Op::BiasAdd => {
            arity(inputs, 2, op)?;
            let (x, b) = (inputs[0], inputs[1]);
            let (_, c) = last_axis(x);
            if b.numel() != c {
                return Err(format!("bias of {} entries for {c} channels", b.numel()));
            }
            let out = x.data().iter().enumerate().map(|(i, v)| v + b.data()[i % c]).collect();
            Ok((tensor(x.shape().to_vec(), out)?, Saved::None))
        }
        Op::Sum | Op::Mean => {
            let s: f64 = inputs[0].data().iter().map(|&v| v as f64).sum();
            let v = if matches!(op, Op::Mean) {
                s / inputs[0].numel() as f64
            } else {
                s
            };
            Ok((Tensor::scalar(v as f32), Saved::None))
        }
        Op::SumLastAxis => {
            let x = inputs[0];
            let (rows, d) = last_axis(x);
            let out = (0..rows)
                .map(|r| x.data()[r * d..(r + 1) * d].iter().map(|&v| v as f64).sum::<f64>() as f32)
                .collect();
            Ok((tensor(reduced_shape(x), out)?, Saved::None))
        }
        Op::Argmax => {
            let x = inputs[0];
            let (rows, d) = last_axis(x);
            let out = (0..rows)
                .map(|r| {
                    let row = &x.data()[r * d..(r + 1) * d];
                    let mut best = 0;
                    for (i, v) in row.iter().enumerate() {
                        if *v > row[best] {
                            best = i;
                        }
                    }
                    best as f32
                })
                .collect();
            Ok((tensor(reduced_shape(x), out)?, Saved::None))
        }
    }
}

fn check_affine(inputs: &[&Tensor], c: usize) -> Result<(), String> {
    if inputs[1].numel() != c || inputs[2].numel() != c {
        return Err(format!(
            "affine parameters must have {c} entries, got {} and {}",
            inputs[1].numel(),
            inputs[2].numel()
        ));
    }
    Ok(())
}

pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &[f32], out: &mut [f32]) {
    let mx = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut s = 0.0f32;
    for (o, v) in out.iter_mut().zip(row) {
        *o = (v - mx).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

fn like(t: &Tensor, data: Vec<f32>) -> Tensor {
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

fn elementwise_grad(x: &Tensor, dy: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    like(x, x.data().iter().zip(dy.data()).map(|(&v, &g)| f(v, g)).collect())
}

/// Gradients with respect to each input (`None` where not wanted).
///
/// Returns `Err(())` for operations without a derivative.
pub fn backward(
    op: &Op,
    inputs: &[&Tensor],
    out: &Tensor,
    saved: &Saved,
    dy: &Tensor,
    want: &[bool],
) -> Result<Vec<Option<Tensor>>, ()> {
    let mut grads: Vec<Option<Tensor>> = vec![None; inputs.len()];
    match op {
        Op::Leaf(_) => {}
        Op::Argmax => return Err(()),
        Op::Conv2d { stride, pad } => {
            let x = dims4(inputs[0], "").expect("checked in forward");
            let (g, co) = conv_geom(x, inputs[1].shape(), *stride, *pad).expect("checked in forward");
            let cols = kernels::im2col(inputs[0].data(), &g);
            if want[1] {
                let mut dw = vec![0.0; g.cols() * co];
                kernels::gemm(
                    Mat::new(&cols, g.rows(), g.cols()).t(),
                    Mat::new(dy.data(), g.rows(), co),
                    0.0,
                    &mut dw,
                );
                grads[1] = Some(like(inputs[1], dw));
            }
            if want[0] {
                let mut dcols = vec![0.0; g.rows() * g.cols()];
                kernels::gemm(
                    Mat::new(dy.data(), g.rows(), co),
                    Mat::new(inputs[1].data(), g.cols(), co).t(),
                    0.0,
                    &mut dcols,
                );
                grads[0] = Some(like(inputs[0], kernels::col2im(&dcols, &g)));
            }
        }
        Op::ConvTranspose2d {
            stride,
            pad,
            output_pad,
        } => {
            let x = dims4(inputs[0], "").expect("checked in forward");
            let (g, ci) =
                conv_t_geom(x, inputs[1].shape(), *stride, *pad, *output_pad).expect("checked in forward");
            let dcols = kernels::im2col(dy.data(), &g);
            if want[0] {
                let mut dx = vec![0.0; g.rows() * ci];
                kernels::gemm(
                    Mat::new(&dcols, g.rows(), g.cols()),
                    Mat::new(inputs[1].data(), g.cols(), ci),
                    0.0,
                    &mut dx,
                );
                grads[0] = Some(like(inputs[0], dx));
            }
            if want[1] {
                let mut dw = vec![0.0; g.cols() * ci];
                kernels::gemm(
                    Mat::new(&dcols, g.rows(), g.cols()).t(),
                    Mat::new(inputs[0].data(), g.rows(), ci),
                    0.0,
                    &mut dw,
                );
                grads[1] = Some(like(inputs[1], dw));
            }
        }
        Op::BatchNorm { .. } | Op::InstanceNorm { .. } => {
            let Saved::Norm { xhat, inv_std, .. } = saved else {
                unreachable!("normalization saves its statistics")
            };
            let [n, h, w, c] = dims4(inputs[0], "").expect("checked in forward");
            let (outer, spatial) = if matches!(op, Op::BatchNorm { .. }) {
                (1, n * h * w)
            } else {
                (n, h * w)
            };
            let (dx, dg, db) =
                kernels::norm_backward(dy.data(), xhat, outer, spatial, c, inv_std, inputs[1].data());
            if want[0] {
                grads[0] = Some(like(inputs[0], dx));
            }
            if want[1] {
                grads[1] = Some(like(inputs[1], dg));
            }
            if want[2] {
                grads[2] = Some(like(inputs[2], db));
            }
        }
        Op::BatchNormEval { .. } => {
            let Saved::Norm { xhat, inv_std, .. } = saved else {
                unreachable!("normalization saves its statistics")
            };
            let c = inputs[1].numel();
            if want[0] {
                let gamma = inputs[1].data();
                let dx = dy
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * gamma[i % c] * inv_std[i % c])
                    .collect();
                grads[0] = Some(like(inputs[0], dx));
            }
            if want[1] || want[2] {
                let mut dg = vec![0.0f64; c];
                let mut db = vec![0.0f64; c];
                for (i, g) in dy.data().iter().enumerate() {
                    dg[i % c] += (*g * xhat[i]) as f64;
                    db[i % c] += *g as f64;
                }
                grads[1] = Some(like(inputs[1], dg.into_iter().map(|v| v as f32).collect()));
                grads[2] = Some(like(inputs[2], db.into_iter().map(|v| v as f32).collect()));
            }
            if want[3] || want[4] {
                return Err(());
            }
        }
        Op::Relu => grads[0] = Some(elementwise_grad(inputs[0], dy, |v, g| if v > 0.0 { g } else { 0.0 })),
        Op::LeakyRelu { slope } => {
            grads[0] = Some(elementwise_grad(inputs[0], dy, |v, g| if v > 0.0 { g } else { slope * g }))
        }
        Op::Tanh => grads[0] = Some(like(out, out.data().iter().zip(dy.data()).map(|(y, g)| g * (1.0 - y * y)).collect())),
        Op::Sigmoid => grads[0] = Some(like(out, out.data().iter().zip(dy.data()).map(|(y, g)| g * y * (1.0 - y)).collect())),
        Op::Log => grads[0] = Some(elementwise_grad(inputs[0], dy, |v, g| g / v)),
        Op::Abs => grads[0] = Some(elementwise_grad(inputs[0], dy, |v, g| g * v.signum() * (v != 0.0) as i32 as f32)),
        Op::Square => grads[0] = Some(elementwise_grad(inputs[0], dy, |v, g| 2.0 * v * g)),
        Op::Clamp { lo, hi } => {
            grads[0] = Some(elementwise_grad(inputs[0], dy, |v, g| if v >= *lo && v <= *hi { g } else { 0.0 }))
        }
        Op::Affine { scale, .. } => grads[0] = Some(like(dy, dy.data().iter().map(|g| g * scale).collect())),
        Op::MaxPool { .. } => {
            let Saved::Indices(arg) = saved else {
                unreachable!("max pooling saves indices")
            };
            let mut dx = vec![0.0; inputs[0].numel()];
            for (g, &i) in dy.data().iter().zip(arg) {
                dx[i as usize] += g;
            }
            grads[0] = Some(like(inputs[0], dx));
        }
        Op::AvgPool { k, stride } => {
            let d = dims4(inputs[0], "").expect("checked in forward");
            let (ho, wo) = (out.shape()[1], out.shape()[2]);
            grads[0] = Some(like(inputs[0], kernels::avg_pool_backward(dy.data(), d, *k, *stride, ho, wo)));
        }
        Op::Linear => {
            let x = inputs[0];
            let n = x.shape()[0];
            let fan_in = x.numel() / n;
            let wo = inputs[1].shape()[1];
            if want[0] {
                let mut dx = vec![0.0; n * fan_in];
                kernels::gemm(
                    Mat::new(dy.data(), n, wo),
                    Mat::new(inputs[1].data(), fan_in, wo).t(),
                    0.0,
                    &mut dx,
                );
                grads[0] = Some(like(x, dx));
            }
            if want[1] {
                let mut dw = vec![0.0; fan_in * wo];
                kernels::gemm(Mat::new(x.data(), n, fan_in).t(), Mat::new(dy.data(), n, wo), 0.0, &mut dw);
                grads[1] = Some(like(inputs[1], dw));
            }
        }
        Op::Softmax => {
            let (rows, d) = last_axis(out);
            let y = out.data();
            let mut dx = vec![0.0; out.numel()];
            for r in 0..rows {
                let s: f32 = (0..d).map(|i| y[r * d + i] * dy.data()[r * d + i]).sum();
                for i in 0..d {
                    dx[r * d + i] = y[r * d + i] * (dy.data()[r * d + i] - s);
                }
            }
            grads[0] = Some(like(out, dx));
        }
        Op::SoftmaxCrossEntropy { labels } => {
            let Saved::Probs(p) = saved else {
                unreachable!("cross-entropy saves probabilities")
            };
            let k = inputs[0].shape()[1];
            let scale = dy.item() / labels.len() as f32;
            let mut dx: Vec<f32> = p.iter().map(|v| v * scale).collect();
            for (r, &y) in labels.iter().enumerate() {
                dx[r * k + y] -= scale;
            }
            grads[0] = Some(like(inputs[0], dx));
        }
        Op::Dropout { .. } => {
            grads[0] = Some(match saved {
                Saved::Mask(mask) => like(dy, dy.data().iter().zip(mask).map(|(g, m)| g * m).collect()),
                _ => dy.clone(),
            })
        }
        Op::ConcatChannels => {
            let (rows, ca) = last_axis(inputs[0]);
            let cb = *inputs[1].shape().last().unwrap();
            let mut da = Vec::with_capacity(rows * ca);
            let mut db = Vec::with_capacity(rows * cb);
            for r in 0..rows {
                let row = &dy.data()[r * (ca + cb)..(r + 1) * (ca + cb)];
                da.extend_from_slice(&row[..ca]);
                db.extend_from_slice(&row[ca..]);
            }
            grads[0] = Some(like(inputs[0], da));
            grads[1] = Some(like(inputs[1], db));
        }
        Op::ConcatBatch => {
            let mut start = 0;
            for (i, x) in inputs.iter().enumerate() {
                let len = x.shape()[0];
                if want[i] {
                    grads[i] = Some(dy.slice_batch(start, len).expect("in range"));
                }
                start += len;
            }
        }
        Op::SliceBatch { start, .. } => {
            let x = inputs[0];
            let item = x.numel() / x.shape()[0];
            let mut dx = vec![0.0; x.numel()];
            dx[start * item..start * item + dy.numel()].copy_from_slice(dy.data());
            grads[0] = Some(like(x, dx));
        }
        Op::Reshape { .. } => grads[0] = Some(like(inputs[0], dy.data().to_vec())),
        Op::Add | Op::Sub | Op::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let get = |d: &[f32], i: usize| if d.len() == 1 { d[0] } else { d[i] };
            let n = dy.numel();
            if want[0] {
                let g: Vec<f32> = (0..n)
                    .map(|i| match op {
                        Op::Mul => dy.data()[i] * get(b.data(), i),
                        _ => dy.data()[i],
                    })
                    .collect();
                grads[0] = Some(unbroadcast(g, a));
            }
            if want[1] {
                let g: Vec<f32> = (0..n)
                    .map(|i| match op {
                        Op::Mul => dy.data()[i] * get(a.data(), i),
                        Op::Sub => -dy.data()[i],
                        _ => dy.data()[i],
                    })
                    .collect();
                grads[1] = Some(unbroadcast(g, b));
            }
        }
        Op::BiasAdd => {
            if want[0] {
                grads[0] = Some(dy.clone());
            }
            if want[1] {
                let c = inputs[1].numel();
                let mut db = vec![0.0f64; c];
                for (i, g) in dy.data().iter().enumerate() {
                    db[i % c] += *g as f64;
                }
                grads[1] = Some(like(inputs[1], db.into_iter().map(|v| v as f32).collect()));
            }
        }
        Op::Sum | Op::Mean => {
            let x = inputs[0];
            let g = if matches!(op, Op::Mean) {
                dy.item() / x.numel() as f32
            } else {
                dy.item()
            };
            grads[0] = Some(Tensor::full(x.shape(), g));
        }
        Op::SumLastAxis => {
            let x = inputs[0];
            let (_, d) = last_axis(x);
            let dx = (0..x.numel()).map(|i| dy.data()[i / d]).collect();
            grads[0] = Some(like(x, dx));
        }
    }
    Ok(grads)
}
