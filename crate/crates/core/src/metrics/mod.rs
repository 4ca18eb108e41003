//! Scores, decisions, ROC analysis, separability and PCA of logits.

pub mod plot;
pub mod report;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::models::GtcnModel;
use crate::tensor::Tensor;

/// FAR operating points reported by [`evaluate`].
pub const FAR_TARGETS: [f64; 4] = [1e-2, 1e-3, 2e-4, 2e-5];

/// Default fusion weights of the whole-image and patch scores.
pub const FUSE_RS: f64 = 1.0;
pub const FUSE_CT: f64 = 0.6;

/// Half the logit margin of class A (index 0) over class B.
pub fn binary_score(logits: &[f32]) -> Result<f64> {
    match logits {
        [a, b] => Ok((*a as f64 - *b as f64) / 2.0),
        _ => Err(Error::invalid(format!("binary score needs 2 logits, got {}", logits.len()))),
    }
}

/// Class 0 when `score ≥ th`, class 1 otherwise.
pub fn decide(score: f64, th: f64) -> usize {
    if score >= th {
        0
    } else {
        1
    }
}

/// Argmax with ties resolved to the lowest class id.
pub fn multiclass_predict(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Predicted class for one logit row: threshold 0 on the binary score for
/// two classes, argmax otherwise.
pub fn predict(logits: &[f32]) -> usize {
    match binary_score(logits) {
        Ok(s) => decide(s, 0.0),
        Err(_) => multiclass_predict(logits),
    }
}

pub fn fuse_scores(sc_rs: f64, sc_ct: f64, a_rs: f64, a_ct: f64) -> f64 {
    a_rs * sc_rs + a_ct * sc_ct
}

/// Binary scores with their ground truth; `positive` marks class A.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub positive: Vec<bool>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, positive: Vec<bool>) -> Result<Self> {
        if scores.len() != positive.len() {
            return Err(Error::invalid(format!(
                "{} scores but {} labels",
                scores.len(),
                positive.len()
            )));
        }
        Ok(Self { scores, positive })
    }

    /// Scores of binary logits, positives being label 0.
    pub fn from_logits(logits: &Tensor, labels: &[usize]) -> Result<Self> {
        let k = *logits.shape().last().unwrap_or(&0);
        let scores = logits.data().chunks(k.max(1)).map(binary_score).collect::<Result<Vec<_>>>()?;
        Self::new(scores, labels.iter().map(|&l| l == 0).collect())
    }

    pub fn positives(&self) -> Vec<f64> {
        self.select(true)
    }

    pub fn negatives(&self) -> Vec<f64> {
        self.select(false)
    }

    fn select(&self, pos: bool) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.positive)
            .filter(|(_, &p)| p == pos)
            .map(|(&s, _)| s)
            .collect()
    }

    /// Element-wise fused scores; labels must agree.
    pub fn fuse(&self, other: &ScoreSet, a_rs: f64, a_ct: f64) -> Result<Self> {
        if self.positive != other.positive {
            return Err(Error::invalid("fused score sets must share labels and order"));
        }
        let scores = self
            .scores
            .iter()
            .zip(&other.scores)
            .map(|(&a, &b)| fuse_scores(a, b, a_rs, a_ct))
            .collect();
        Self::new(scores, self.positive.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

/// Operating points in order of decreasing threshold, starting at
/// threshold +∞ (nothing accepted) and ending at the lowest score.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<OperatingPoint>,
}

pub fn roc(set: &ScoreSet) -> Result<RocCurve> {
    let n_pos = set.positive.iter().filter(|&&p| p).count();
    let n_neg = set.positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("ROC needs at least one positive and one negative score"));
    }
    if set.scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("ROC scores contain NaN"));
    }
    let mut order: Vec<(f64, bool)> = set.scores.iter().copied().zip(set.positive.iter().copied()).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![OperatingPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        tar: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let th = order[i].0;
        // a threshold accepts every score ≥ th, so consume the whole tie
        while i < order.len() && order[i].0 == th {
            if order[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(OperatingPoint {
            threshold: th,
            far: fp as f64 / n_neg as f64,
            tar: tp as f64 / n_pos as f64,
        });
    }
    Ok(RocCurve { points })
}

/// TAR at the largest achievable FAR not exceeding `far_target`.
pub fn tar_at_far(curve: &RocCurve, far_target: f64) -> f64 {
    curve
        .points
        .iter()
        .take_while(|p| p.far <= far_target)
        .last()
        .map_or(0.0, |p| p.tar)
}

/// Point where FAR equals 1 − TAR, linearly interpolated between the
/// bracketing operating points.
pub fn eer(curve: &RocCurve) -> f64 {
    let gap = |p: &OperatingPoint| p.far - (1.0 - p.tar);
    for w in curve.points.windows(2) {
        let (d0, d1) = (gap(&w[0]), gap(&w[1]));
        if d0 == 0.0 {
            return w[0].far;
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let t = -d0 / (d1 - d0);
            return w[0].far + t * (w[1].far - w[0].far);
        }
    }
    curve.points.last().map_or(0.0, |p| p.far)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Fisher's criterion with population variances.
pub fn fisher_j(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("Fisher's criterion needs at least two scores per class"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let den = va + vb;
    if den == 0.0 {
        return Err(Error::invalid("Fisher's criterion undefined: both score lists are constant"));
    }
    Ok((ma - mb).powi(2) / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub num_classes: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub recall: Vec<f64>,
    /// `(far_target, tar)` pairs; binary tasks only.
    pub tar_at_far: Vec<(f64, f64)>,
    pub eer: Option<f64>,
    pub fisher_j: Option<f64>,
    pub roc: Option<RocCurve>,
    pub scores: Option<ScoreSet>,
}

fn confusion_report(num_classes: usize, labels: &[usize], predicted: &[usize]) -> Result<EvalReport> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty test set"));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&t, &p) in labels.iter().zip(predicted) {
        if t >= num_classes {
            return Err(Error::invalid(format!("label {t} outside {num_classes} classes")));
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let recall = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let support: usize = row.iter().sum();
            if support == 0 {
                0.0
            } else {
                row[c] as f64 / support as f64
            }
        })
        .collect();
    Ok(EvalReport {
        num_classes,
        accuracy: correct as f64 / labels.len() as f64,
        confusion,
        recall,
        tar_at_far: Vec::new(),
        eer: None,
        fisher_j: None,
        roc: None,
        scores: None,
    })
}

/// Binary report from scores (class 0 is positive), decided at threshold 0.
pub fn evaluate_scores(set: &ScoreSet, far_targets: &[f64]) -> Result<EvalReport> {
    let labels: Vec<usize> = set.positive.iter().map(|&p| usize::from(!p)).collect();
    let predicted: Vec<usize> = set.scores.iter().map(|&s| decide(s, 0.0)).collect();
    let mut report = confusion_report(2, &labels, &predicted)?;
    if let Ok(curve) = roc(set) {
        report.tar_at_far = far_targets.iter().map(|&f| (f, tar_at_far(&curve, f))).collect();
        report.eer = Some(eer(&curve));
        report.roc = Some(curve);
    }
    report.fisher_j = fisher_j(&set.positives(), &set.negatives()).ok();
    report.scores = Some(set.clone());
    Ok(report)
}

/// Report for an N×k logit matrix.
pub fn evaluate_logits(logits: &Tensor, labels: &[usize], far_targets: &[f64]) -> Result<EvalReport> {
    let k = match logits.shape() {
        [n, k] if *n == labels.len() && *k >= 2 => *k,
        s => {
            return Err(Error::Shape(format!(
                "logits {s:?} do not match {} labels",
                labels.len()
            )))
        }
    };
    if k == 2 {
        return evaluate_scores(&ScoreSet::from_logits(logits, labels)?, far_targets);
    }
    let predicted: Vec<usize> = logits.data().chunks(k).map(multiclass_predict).collect();
    confusion_report(k, labels, &predicted)
}

/// Evaluates a model's classifier on labelled images.
pub fn evaluate(model: &GtcnModel, test: &[LabeledImage], far_targets: &[f64]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty test set"));
    }
    let logits = crate::trainer::predict_images(model, test)?;
    let labels: Vec<usize> = test.iter().map(|im| im.label).collect();
    evaluate_logits(&logits, &labels, far_targets)
}

/// Projects row vectors onto their top `dims` principal axes. Axes come in
/// order of decreasing variance, each signed so its largest-magnitude
/// component is positive.
pub fn pca_project(rows: &[Vec<f64>], dims: usize) -> Result<Vec<Vec<f64>>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("PCA rows differ in length"));
    }
    if dims == 0 || n.min(d) < dims {
        return Err(Error::invalid(format!(
            "PCA to {dims} dimensions needs at least that many samples and features, got {n}×{d}"
        )));
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = DMatrix::zeros(d, dims);
    for (out, &src) in order.iter().take(dims).enumerate() {
        let mut axis = eig.eigenvectors.column(src).into_owned();
        let lead = axis.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            axis = -axis;
        }
        axes.set_column(out, &axis);
    }
    let proj = centered * axes;
    Ok((0..n).map(|i| proj.row(i).iter().copied().collect()).collect())
}

#[cfg(test)]
mod tests;
