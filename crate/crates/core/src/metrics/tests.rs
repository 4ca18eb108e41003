use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Threshold scan recounting every score for every candidate threshold.
fn brute_points(set: &ScoreSet) -> Vec<(f64, f64, f64)> {
    let mut ths: Vec<f64> = set.scores.clone();
    ths.sort_by(|a, b| b.total_cmp(a));
    ths.dedup();
    ths.insert(0, f64::INFINITY);
    let n_pos = set.positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = set.positive.len() as f64 - n_pos;
    ths.iter()
        .map(|&th| {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for (&s, &p) in set.scores.iter().zip(&set.positive) {
                if s >= th {
                    if p {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            (th, fp / n_neg, tp / n_pos)
        })
        .collect()
}

fn brute_tar(points: &[(f64, f64, f64)], target: f64) -> f64 {
    points.iter().filter(|p| p.1 <= target).map(|p| p.2).fold(0.0, f64::max)
}

/// First crossing of the segment chain with the line FAR + TAR = 1.
fn brute_eer(points: &[(f64, f64, f64)]) -> f64 {
    for w in points.windows(2) {
        let (a, b) = ((w[0].1, w[0].2), (w[1].1, w[1].2));
        let sa = a.0 + a.1 - 1.0;
        let sb = b.0 + b.1 - 1.0;
        if sa == 0.0 {
            return a.0;
        }
        if sa < 0.0 && sb >= 0.0 {
            let t = sa / (sa - sb);
            return a.0 + t * (b.0 - a.0);
        }
    }
    unreachable!("chain ends at FAR=TAR=1")
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, quantized: bool) -> ScoreSet {
    let mut scores = Vec::with_capacity(n);
    let mut positive = Vec::with_capacity(n);
    for i in 0..n {
        // guarantee both labels
        let p = if i < 2 { i == 0 } else { rng.random_bool(0.5) };
        let shift = if p { 0.7 } else { 0.0 };
        let mut s: f64 = rng.random_range(-2.0..2.0) + shift;
        if quantized {
            s = (s * 20.0).round() / 20.0;
        }
        scores.push(s);
        positive.push(p);
    }
    ScoreSet::new(scores, positive).unwrap()
}

#[test]
fn score_and_decision_examples() {
    assert_eq!(binary_score(&[3.0, 1.0]).unwrap(), 1.0);
    assert_eq!(binary_score(&[2.5, 2.5]).unwrap(), 0.0);
    assert_eq!(binary_score(&[1.0, 3.0]).unwrap(), -binary_score(&[3.0, 1.0]).unwrap());
    assert!(binary_score(&[1.0, 2.0, 3.0]).is_err());
    assert_eq!(decide(0.2, 0.1), 0);
    assert_eq!(decide(0.1, 0.1), 0);
    assert_eq!(decide(1e30, f64::MAX), 1);
}

#[test]
fn multiclass_examples() {
    assert_eq!(multiclass_predict(&[1.0, 3.0, 2.0, 0.0]), 1);
    assert_eq!(multiclass_predict(&[1.0, 1.0, 0.0]), 0);
    assert_eq!(multiclass_predict(&[6.0, 8.0, 7.0, 5.0]), 1);
}

#[test]
fn fusion_examples() {
    assert!((fuse_scores(1.0, 0.5, FUSE_RS, FUSE_CT) - 1.3).abs() < 1e-12);
    assert_eq!(fuse_scores(0.7, 123.0, 1.0, 0.0), 0.7);
    assert_eq!(fuse_scores(0.3, 0.9, 0.5, 0.5), fuse_scores(0.9, 0.3, 0.5, 0.5));
}

#[test]
fn roc_examples() {
    let set = ScoreSet::new(vec![2.0, 1.0, 0.0, -1.0], vec![true, true, false, false]).unwrap();
    let curve = roc(&set).unwrap();
    let at = |th: f64| {
        let p = brute_points(&set).into_iter().filter(|p| p.0 >= th).last().unwrap();
        (p.1, p.2)
    };
    // th = 0.5 accepts the same samples as th = 1
    assert_eq!(at(0.5), (0.0, 1.0));
    assert_eq!(tar_at_far(&curve, 0.01), 1.0);
    assert_eq!(eer(&curve), 0.0);

    let equal = ScoreSet::new(vec![0.3; 4], vec![true, false, true, false]).unwrap();
    let c = roc(&equal).unwrap();
    assert_eq!(c.points.len(), 2);
    assert_eq!((c.points[1].far, c.points[1].tar), (1.0, 1.0));

    let one = ScoreSet::new(vec![1.0, 0.0], vec![true, false]).unwrap();
    assert_eq!(tar_at_far(&roc(&one).unwrap(), 0.01), 1.0);

    assert!(roc(&ScoreSet::new(vec![1.0], vec![true]).unwrap()).is_err());
}

#[test]
fn roc_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..40 {
        let quantized = case % 2 == 1;
        let n = if quantized { rng.random_range(2..10_000) } else { rng.random_range(2..600) };
        let set = random_set(&mut rng, n, quantized);
        let curve = roc(&set).unwrap();
        let brute = brute_points(&set);
        let got: Vec<(f64, f64, f64)> = curve.points.iter().map(|p| (p.threshold, p.far, p.tar)).collect();
        assert_eq!(got, brute, "case {case}");
        for &f in &FAR_TARGETS {
            assert_eq!(tar_at_far(&curve, f), brute_tar(&brute, f), "case {case} far {f}");
        }
        assert!((eer(&curve) - brute_eer(&brute)).abs() < 1e-9, "case {case}");
    }
}

#[test]
fn eer_of_uninformative_scores_is_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let set = ScoreSet::new(
        (0..n).map(|_| rng.random::<f64>()).collect(),
        (0..n).map(|_| rng.random_bool(0.5)).collect(),
    )
    .unwrap();
    let e = eer(&roc(&set).unwrap());
    assert!((e - 0.5).abs() < 0.02, "{e}");
}

#[test]
fn fisher_examples() {
    let a = [0.0, 2.0];
    assert_eq!(fisher_j(&a, &a).unwrap(), 0.0);
    assert!((fisher_j(&[0.0, 2.0], &[5.0, 9.0]).unwrap() - 7.2).abs() < 1e-12);
    // means 0 and 1, population variance 0.5 each
    let s = 0.5f64.sqrt();
    assert!((fisher_j(&[-s, s], &[1.0 - s, 1.0 + s]).unwrap() - 1.0).abs() < 1e-12);
    assert!(fisher_j(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    assert!(fisher_j(&[1.0], &[2.0, 3.0]).is_err());
}

#[test]
fn evaluate_examples() {
    // label-revealing logits
    let labels = vec![0, 1, 0, 1, 1];
    let logits = Tensor::new(
        vec![5, 2],
        labels.iter().flat_map(|&l| if l == 0 { [2.0, -2.0] } else { [-1.0, 1.0] }).collect(),
    )
    .unwrap();
    let r = evaluate_logits(&logits, &labels, &FAR_TARGETS).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.eer, Some(0.0));
    assert_eq!(r.recall, vec![1.0, 1.0]);
    assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 3]]);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let logits = Tensor::from_fn(&[n, 2], |_| rng.random_range(-1.0..1.0));
    let r = evaluate_logits(&logits, &labels, &FAR_TARGETS).unwrap();
    assert!((r.accuracy - 0.5).abs() < 0.02, "{}", r.accuracy);
    for (c, row) in r.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), labels.iter().filter(|&&l| l == c).count());
    }
    assert!(evaluate_logits(&Tensor::zeros(&[0, 2]), &[], &FAR_TARGETS).is_err());
}

#[test]
fn multiclass_report() {
    let logits = Tensor::new(vec![3, 3], vec![3.0, 0.0, 0.0, 0.0, 3.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
    let r = evaluate_logits(&logits, &[0, 1, 2], &FAR_TARGETS).unwrap();
    assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.recall, vec![1.0, 1.0, 0.0]);
    assert!(r.eer.is_none());
    assert!(r.to_text().contains("ACC"));
}

#[test]
fn report_renders_standard_columns() {
    let set = ScoreSet::new(vec![1.0, 0.5, -0.2, -1.0], vec![true, false, true, false]).unwrap();
    let r = evaluate_scores(&set, &FAR_TARGETS).unwrap();
    let text = r.to_text();
    for col in ["ACC", "TAR@FAR=1/100", "TAR@FAR=1/1000", "TAR@FAR=1/5000", "TAR@FAR=1/50000", "EER", "J"] {
        assert!(text.contains(col), "missing {col} in\n{text}");
    }
    assert!(text.contains("50.00"));
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(report::roc_csv(r.roc.as_ref().unwrap()).lines().count(), 1 + 5);
}

#[test]
fn pca_examples() {
    // points on a line
    let line: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
    let p = pca_project(&line, 2).unwrap();
    let var = |k: usize| {
        let m = p.iter().map(|r| r[k]).sum::<f64>() / p.len() as f64;
        p.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / p.len() as f64
    };
    assert!(var(1) < 1e-20);
    assert!(var(0) > 0.0);
    assert!(pca_project(&line[..1], 2).is_err());
}

#[test]
fn pca_variances_match_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let p = pca_project(&rows, 2).unwrap();
    // oracle: covariance eigenvalues from the characteristic cubic's
    // closed-form trigonometric roots
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let c = |a: usize, b: usize| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n;
    let (a11, a22, a33, a12, a13, a23) = (c(0, 0), c(1, 1), c(2, 2), c(0, 1), c(0, 2), c(1, 2));
    let q = (a11 + a22 + a33) / 3.0;
    let p1 = a12 * a12 + a13 * a13 + a23 * a23;
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * p1;
    let pp = (p2 / 6.0).sqrt();
    let b = |i: usize, j: usize| (c(i, j) - if i == j { q } else { 0.0 }) / pp;
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * pp * phi.cos();
    let e3 = q + 2.0 * pp * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    for (k, want) in [e1, e2].into_iter().enumerate() {
        let got = p.iter().map(|r| r[k] * r[k]).sum::<f64>() / n;
        assert!((got - want).abs() < 1e-9, "component {k}: {got} vs {want}");
    }
}

#[test]
fn pca_sign_convention_and_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let a: f64 = rng.random_range(-3.0..3.0);
            vec![a, 0.3 * rng.random_range(-1.0..1.0)]
        })
        .collect();
    let (s, c) = 0.7f64.sin_cos();
    let rotated: Vec<Vec<f64>> = rows.iter().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1]]).collect();
    let p = pca_project(&rows, 2).unwrap();
    let q = pca_project(&rotated, 2).unwrap();
    for (a, b) in p.iter().zip(&q) {
        for k in 0..2 {
            assert!((a[k].abs() - b[k].abs()).abs() < 1e-9);
        }
    }
}

#[test]
fn svg_output_is_deterministic() {
    let set = ScoreSet::new(vec![1.0, 0.5, -0.2, -1.0], vec![true, false, true, false]).unwrap();
    let curve = roc(&set).unwrap();
    let a = plot::roc_svg(&[("model", &curve)]);
    assert_eq!(a, plot::roc_svg(&[("model", &curve)]));
    assert!(a.starts_with("<svg"));
    let h = plot::histogram_svg(&set, 10, ("A", "B"));
    assert_eq!(h, plot::histogram_svg(&set, 10, ("A", "B")));
    let al = plot::alpha_svg(&[(0.0, 0.5, 0.5), (1.0, 0.6, 0.55)]);
    assert!(al.contains("alpha") && al.contains("beta"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fisher_is_affine_invariant(
        a in prop::collection::vec(-10.0f64..10.0, 2..20),
        b in prop::collection::vec(-10.0f64..10.0, 2..20),
        scale in prop::sample::select(vec![-3.0f64, -0.5, 0.25, 2.0, 7.0]),
        shift in -5.0f64..5.0,
    ) {
        if let Ok(j) = fisher_j(&a, &b) {
            prop_assume!(j.is_finite() && j < 1e6);
            let f = |v: &[f64]| v.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
            let k = fisher_j(&f(&a), &f(&b)).unwrap();
            prop_assert!((j - k).abs() <= 1e-7 * (1.0 + j.abs()));
        }
    }

    #[test]
    fn binary_decision_matches_argmax(a in -10.0f32..10.0, b in -10.0f32..10.0) {
        prop_assert_eq!(decide(binary_score(&[a, b]).unwrap(), 0.0), multiclass_predict(&[a, b]));
    }

    #[test]
    fn prediction_invariant_to_softmax_rescaling(
        logits in prop::collection::vec(-5.0f32..5.0, 2..8),
        scale in 0.1f64..10.0,
        shift in -5.0f32..5.0,
    ) {
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let probs: Vec<f64> = logits.iter().map(|&l| scale * (l as f64 - max).exp()).collect();
        let as_f32: Vec<f32> = probs.iter().map(|&p| p as f32).collect();
        let shifted: Vec<f32> = logits.iter().map(|l| l + shift).collect();
        let base = multiclass_predict(&logits);
        // float32 rounding can merge near-ties; compare only clear maxima
        let mut sorted = logits.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        prop_assume!(sorted[0] - sorted[1] > 1e-3);
        prop_assert_eq!(multiclass_predict(&as_f32), base);
        prop_assert_eq!(multiclass_predict(&shifted), base);
    }

    #[test]
    fn recall_bounds(labels in prop::collection::vec(0usize..3, 1..40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = Tensor::from_fn(&[labels.len(), 3], |_| rng.random_range(-1.0..1.0));
        let r = evaluate_logits(&logits, &labels, &FAR_TARGETS).unwrap();
        prop_assert!(r.recall.iter().all(|v| (0.0..=1.0).contains(v)));
        let perfect = Tensor::from_fn(&[labels.len(), 3], |i| if labels[i / 3] == i % 3 { 1.0 } else { 0.0 });
        let p = evaluate_logits(&perfect, &labels, &FAR_TARGETS).unwrap();
        for (c, r) in p.recall.iter().enumerate() {
            if labels.contains(&c) {
                prop_assert_eq!(*r, 1.0);
            }
        }
    }
}
