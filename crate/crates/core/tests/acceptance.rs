//! End-to-end acceptance checks P1 to P10. Each prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::io::Write;
use std::time::Instant;

use gtcn::autodiff::{finite_difference_check, Graph, NodeId};
use gtcn::data::{noise_for, sample_noise, stack, subsample, synth_generate, Dataset, NoiseMode, SynthConfig};
use gtcn::losses::{
    adversarial_losses, af_classification_loss, cycle_loss, discriminator_loss, generator_adversarial_loss,
    quadruplet_loss, GroupEmbeddings, GroupLogits, LossWeights,
};
use gtcn::metrics::{self, evaluate, fisher_j, roc, tar_at_far, ScoreSet, FAR_TARGETS};
use gtcn::models::{
    ArchConfig, Classifier, GanConfig, Generator, GeneratorConfig, GtcnModel, ParamSelector, ParamSet,
};
use gtcn::trainer::{self, fine_tune, train, Adam, TrainConfig, TrainMode, Toggles};
use gtcn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const P3_EPS: f32 = 1e-3;
const P3_MAX_REL_ERR: f32 = 1e-3;
const P3_SEEDS: usize = 10;
const P4_ABS_TOL: f64 = 1e-5;
const P5_SETS: usize = 100;
const P5_MAX_N: usize = 10_000;
const P5_EER_TOL: f64 = 1e-9;
const P5_FISHER_TOL: f64 = 1e-9;
const P6_SEEDS: usize = 10;
const P7_SEEDS: u64 = 3;
const P7_EPOCHS: usize = 20;
const P7_FRACTION: f64 = 0.4;
const P8_STEPS: usize = 50;
const P9_SEEDS: u64 = 3;
const P9_MAX_DROP: f64 = 0.01;

/// Translator width used for the desk-scale end-to-end run.
const P7_GAN: GanConfig = GanConfig {
    generator: GeneratorConfig { width: 8, blocks: 9 },
    disc_width: 8,
};
const SMALL_GAN: GanConfig = GanConfig {
    generator: GeneratorConfig { width: 4, blocks: 2 },
    disc_width: 4,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn line(text: &str) {
    // bypasses the harness's output capture so results always show
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{text}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn p1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let k2 = Classifier::new(2, 128, 0.5, &mut rng).unwrap().count_parameters(ParamSelector::Weights);
    let k4 = Classifier::new(4, 128, 0.5, &mut rng).unwrap().count_parameters(ParamSelector::Weights);
    outcome(k2 == 73_904 && k4 == 75_952, format!("k=2: {k2} (want 73904), k=4: {k4} (want 75952)"))
}

fn p2() -> Outcome {
    let c = Classifier::new(2, 128, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let macs = c.estimate_macs();
    let millions = (macs as f64 / 1e6).round();
    outcome(
        macs == 27_133_952 && millions == 27.0,
        format!("{macs} MACs (want 27133952, ≈{millions}M)"),
    )
}

fn rand_tensor(shape: &[usize], lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn p3() -> Outcome {
    let mut worst = [0.0f32; 4];
    let mut skipped_quad = 0;
    for seed in 0..P3_SEEDS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut g = Graph::new();
        let x = g.param(rand_tensor(&[2, 4, 4, 3], -1.0, 1.0, &mut rng));
        let y = g.param(g.value(x).map(|v| v + if v > 0.0 { -0.3 } else { 0.3 }));
        let l = cycle_loss(&mut g, x, y).unwrap();
        worst[0] = worst[0].max(finite_difference_check(&mut g, l, &[x, y], P3_EPS).unwrap());

        let mut g = Graph::new();
        let r = g.param(rand_tensor(&[2, 2, 2, 1], -2.0, 2.0, &mut rng));
        let f = g.param(rand_tensor(&[2, 2, 2, 1], -2.0, 2.0, &mut rng));
        let pr = g.sigmoid(r).unwrap();
        let pf = g.sigmoid(f).unwrap();
        let (d, gl) = adversarial_losses(&mut g, pr, pf).unwrap();
        let s = g.add(d, gl).unwrap();
        worst[1] = worst[1].max(finite_difference_check(&mut g, s, &[r, f], P3_EPS).unwrap());

        let mut g = Graph::new();
        let ids: [NodeId; 4] = std::array::from_fn(|_| g.param(rand_tensor(&[3, 2], -2.0, 2.0, &mut rng)));
        let a_raw = g.param(Tensor::scalar(rng.random_range(-1.0..1.0)));
        let b_raw = g.param(Tensor::scalar(rng.random_range(-1.0..1.0)));
        let a = g.sigmoid(a_raw).unwrap();
        let b = g.sigmoid(b_raw).unwrap();
        let logits = GroupLogits {
            real_a: ids[0],
            trans_a: ids[1],
            real_b: ids[2],
            trans_b: ids[3],
        };
        let l = af_classification_loss(&mut g, logits, 0, 1, a, b).unwrap();
        let params = [ids[0], ids[1], ids[2], ids[3], a_raw, b_raw];
        worst[2] = worst[2].max(finite_difference_check(&mut g, l, &params, P3_EPS).unwrap());
    }
    // hinge kinks are not differentiable: draw until ten samples keep every
    // hinge argument clear of zero
    let w = LossWeights::with_margins(0.5, 0.5, 3.0);
    let mut checked = 0;
    let mut seed = 100u64;
    while checked < P3_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seed += 1;
        let vals: [Tensor; 4] = std::array::from_fn(|_| rand_tensor(&[3, 4], -1.0, 1.0, &mut rng));
        let rows = |t: &Tensor| t.data().chunks(4).map(<[f32]>::to_vec).collect::<Vec<_>>();
        let (ra, ta, rb, tb) = (rows(&vals[0]), rows(&vals[1]), rows(&vals[2]), rows(&vals[3]));
        let d = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>();
        let clear = (0..3).all(|i| {
            [
                d(&ra[i], &ta[i]) - d(&ra[i], &tb[i]) + w.eta_a,
                d(&rb[i], &tb[i]) - d(&rb[i], &ta[i]) + w.eta_b,
                -d(&ra[i], &rb[i]) - d(&ta[i], &tb[i]) + w.eta_c,
            ]
            .iter()
            .all(|v| v.abs() > 0.05)
        });
        if !clear {
            skipped_quad += 1;
            continue;
        }
        let mut g = Graph::new();
        let ids = vals.map(|t| g.param(t));
        let f = GroupEmbeddings {
            real_a: ids[0],
            trans_a: ids[1],
            real_b: ids[2],
            trans_b: ids[3],
        };
        let l = quadruplet_loss(&mut g, f, &w).unwrap();
        worst[3] = worst[3].max(finite_difference_check(&mut g, l, &ids, P3_EPS).unwrap());
        checked += 1;
    }
    outcome(
        worst.iter().all(|&e| e < P3_MAX_REL_ERR),
        format!(
            "max rel err cycle {:.2e}, adversarial {:.2e}, AF {:.2e}, quadruplet {:.2e} (tol {P3_MAX_REL_ERR:.0e}; {skipped_quad} near-kink quadruplet draws skipped)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn scalar_loss(build: impl FnOnce(&mut Graph) -> NodeId) -> f64 {
    let mut g = Graph::new();
    let l = build(&mut g);
    g.value(l).item() as f64
}

fn p4() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_tensor(&[2, 3, 3, 2], -1.0, 1.0, &mut rng);
    let b = rand_tensor(&[2, 3, 3, 2], -1.0, 1.0, &mut rng);
    let oracle_l1 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.numel() as f64;
    let one_d = |v: f32| Tensor::new(vec![1, 1], vec![v]).unwrap();
    let quad = |g: &mut Graph, v: [Tensor; 4], w: &LossWeights| {
        let ids = v.map(|t| g.constant(t));
        let f = GroupEmbeddings {
            real_a: ids[0],
            trans_a: ids[1],
            real_b: ids[2],
            trans_b: ids[3],
        };
        quadruplet_loss(g, f, w).unwrap()
    };
    let face = LossWeights::FACE;
    // squared distances of the 1-D example, evaluated independently
    let (xa, ta, xb, tb) = (0.0f64, 0.1f64, 1.0f64, 1.1f64);
    let sq = |p: f64, q: f64| (p - q) * (p - q);
    let hinge = |v: f64| v.max(0.0);
    let oracle_quad = hinge(sq(xa, ta) - sq(xa, tb) + 2.0) + hinge(sq(xb, tb) - sq(xb, ta) + 2.0)
        + hinge(-sq(xa, xb) - sq(ta, tb) + 6.0);
    let uniform = |g: &mut Graph| {
        let ids: [NodeId; 4] = std::array::from_fn(|_| g.constant(Tensor::zeros(&[3, 2])));
        let half = g.constant(Tensor::scalar(0.5));
        let logits = GroupLogits {
            real_a: ids[0],
            trans_a: ids[1],
            real_b: ids[2],
            trans_b: ids[3],
        };
        af_classification_loss(g, logits, 0, 1, half, half).unwrap()
    };
    let prob = |v: f32| move |g: &mut Graph| g.constant(Tensor::full(&[2, 4, 4, 1], v));
    let cases: Vec<(&str, f64, f64)> = vec![
        (
            "cycle identical",
            scalar_loss(|g| {
                let x = g.constant(a.clone());
                let y = g.constant(a.clone());
                cycle_loss(g, x, y).unwrap()
            }),
            0.0,
        ),
        (
            "cycle offset 0.5",
            scalar_loss(|g| {
                let x = g.constant(a.clone());
                let y = g.constant(a.map(|v| v + 0.5));
                cycle_loss(g, x, y).unwrap()
            }),
            0.5,
        ),
        (
            "cycle random",
            scalar_loss(|g| {
                let x = g.constant(a.clone());
                let y = g.constant(b.clone());
                cycle_loss(g, x, y).unwrap()
            }),
            oracle_l1,
        ),
        (
            "D loss at 0.5",
            scalar_loss(|g| {
                let r = prob(0.5)(g);
                let f = prob(0.5)(g);
                discriminator_loss(g, r, f).unwrap()
            }),
            2.0 * ln2,
        ),
        (
            "D loss perfect",
            scalar_loss(|g| {
                let r = prob(1.0)(g);
                let f = prob(0.0)(g);
                discriminator_loss(g, r, f).unwrap()
            }),
            0.0,
        ),
        (
            "G loss at 0.5",
            scalar_loss(|g| {
                let f = prob(0.5)(g);
                generator_adversarial_loss(g, f).unwrap()
            }),
            ln2,
        ),
        ("AF uniform logits", scalar_loss(uniform), 2.0 * ln2),
        (
            "quadruplet all equal",
            scalar_loss(|g| quad(g, std::array::from_fn(|_| Tensor::zeros(&[2, 5])), &face)),
            (face.eta_a + face.eta_b + face.eta_c) as f64,
        ),
        (
            "quadruplet separated",
            scalar_loss(|g| quad(g, [one_d(0.0), one_d(0.0), one_d(10.0), one_d(10.0)], &face)),
            0.0,
        ),
        (
            "quadruplet 1-D example",
            scalar_loss(|g| quad(g, [one_d(0.0), one_d(0.1), one_d(1.0), one_d(1.1)], &face)),
            oracle_quad,
        ),
    ];
    // the perfect discriminator is evaluated through the probability clamp
    let tol = |name: &str| if name == "D loss perfect" { 1e-6 * 2.0 + P4_ABS_TOL } else { P4_ABS_TOL };
    let failed: Vec<String> = cases
        .iter()
        .filter(|(n, got, want)| (got - want).abs() > tol(n))
        .map(|(n, got, want)| format!("{n}: {got} vs {want}"))
        .collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} loss oracles within {P4_ABS_TOL:.0e}", cases.len())
        } else {
            failed.join("; ")
        },
    )
}

fn brute_points(set: &ScoreSet) -> Vec<(f64, f64, f64)> {
    let mut ths = set.scores.clone();
    ths.sort_by(|a, b| b.total_cmp(a));
    ths.dedup();
    ths.insert(0, f64::INFINITY);
    let n_pos = set.positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = set.positive.len() as f64 - n_pos;
    ths.iter()
        .map(|&th| {
            let (mut tp, mut fp) = (0.0, 0.0);
            for (&s, &p) in set.scores.iter().zip(&set.positive) {
                if s >= th {
                    if p {
                        tp += 1.0
                    } else {
                        fp += 1.0
                    }
                }
            }
            (th, fp / n_neg, tp / n_pos)
        })
        .collect()
}

fn brute_eer(points: &[(f64, f64, f64)]) -> f64 {
    for w in points.windows(2) {
        let sa = w[0].1 + w[0].2 - 1.0;
        let sb = w[1].1 + w[1].2 - 1.0;
        if sa == 0.0 {
            return w[0].1;
        }
        if sa < 0.0 && sb >= 0.0 {
            return w[0].1 + sa / (sa - sb) * (w[1].1 - w[0].1);
        }
    }
    points.last().unwrap().1
}

fn p5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = Vec::new();
    let mut largest = 0;
    let mut fisher_err = 0.0f64;
    for case in 0..P5_SETS {
        // large sets use a score grid so ties and the O(n·thresholds) scan stay cheap
        let n = if case % 2 == 0 { rng.random_range(2..=1_000) } else { rng.random_range(1_000..=P5_MAX_N) };
        largest = largest.max(n);
        let grid = case % 2 == 1;
        let positive: Vec<bool> = (0..n).map(|i| if i < 2 { i == 0 } else { rng.random_bool(0.5) }).collect();
        let scores: Vec<f64> = positive
            .iter()
            .map(|&p| {
                let s: f64 = rng.random_range(-2.0..2.0) + if p { 0.8 } else { 0.0 };
                if grid {
                    (s * 50.0).round() / 50.0
                } else {
                    s
                }
            })
            .collect();
        let set = ScoreSet::new(scores, positive).unwrap();
        let curve = roc(&set).unwrap();
        let brute = brute_points(&set);
        let got: Vec<(f64, f64, f64)> = curve.points.iter().map(|p| (p.threshold, p.far, p.tar)).collect();
        if got != brute {
            mismatches.push(format!("roc case {case}"));
        }
        for &f in &FAR_TARGETS {
            let want = brute.iter().filter(|p| p.1 <= f).map(|p| p.2).fold(0.0, f64::max);
            if tar_at_far(&curve, f) != want {
                mismatches.push(format!("tar case {case} far {f}"));
            }
        }
        if (metrics::eer(&curve) - brute_eer(&brute)).abs() > P5_EER_TOL {
            mismatches.push(format!("eer case {case}"));
        }
        let (a, b) = (set.positives(), set.negatives());
        if a.len() >= 2 && b.len() >= 2 {
            let moments = |v: &[f64]| {
                let n = v.len() as f64;
                let m = v.iter().sum::<f64>() / n;
                (m, v.iter().map(|x| x * x).sum::<f64>() / n - m * m)
            };
            let ((ma, va), (mb, vb)) = (moments(&a), moments(&b));
            let direct = (ma - mb).powi(2) / (va + vb);
            let j = fisher_j(&a, &b).unwrap();
            fisher_err = fisher_err.max((j - direct).abs() / direct.abs().max(1.0));
        }
    }
    let pass = mismatches.is_empty() && fisher_err <= P5_FISHER_TOL;
    outcome(
        pass,
        format!(
            "{P5_SETS} sets up to n={largest}: {} mismatches{}; fisher max err {fisher_err:.1e}",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

fn small_synth(classes: usize, per_class: usize, test_per_class: usize, seed: u64) -> Dataset {
    let cfg = SynthConfig {
        classes,
        per_class,
        test_per_class,
        res: 32,
        ..SynthConfig::default()
    };
    synth_generate(&cfg, seed).unwrap()
}

fn p6() -> Outcome {
    // a classifier briefly trained on real samples and an untrained
    // translator: real samples are classified more confidently
    let ds = small_synth(2, 40, 2, 6);
    let base_cfg = TrainConfig {
        epochs: 4,
        mode: TrainMode::CnnBaseline,
        seed: 6,
        ..TrainConfig::default()
    };
    let (judge, _) = train(&base_cfg, &ds).unwrap();
    let arch = ArchConfig {
        classes: 2,
        res: 32,
        dropout: 0.5,
        gan: Some(SMALL_GAN),
    };
    let fresh = GtcnModel::new(arch, &mut ChaCha8Rng::seed_from_u64(60)).unwrap();
    let tr = fresh.translators.as_ref().unwrap();
    let ia = ds.class_indices(gtcn::data::Split::Train, 0);
    let ib = ds.class_indices(gtcn::data::Split::Train, 1);
    let (mut qualified, mut rises, mut tried) = (0, 0, 0);
    let mut seed = 0u64;
    while qualified < P6_SEEDS && tried < 200 {
        tried += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seed += 1;
        let m = 2;
        let pick = |idx: &[usize], rng: &mut ChaCha8Rng| {
            let sel: Vec<&Tensor> = (0..m).map(|_| &ds.train[idx[rng.random_range(0..idx.len())]].pixels).collect();
            stack(sel).unwrap()
        };
        let xa = pick(&ia, &mut rng);
        let xb = pick(&ib, &mut rng);
        let ta = tr.g_ba.translate(&xb, &sample_noise(m, 8, &mut rng)).unwrap();
        let tb = tr.g_ab.translate(&xa, &sample_noise(m, 8, &mut rng)).unwrap();
        let logits = [&xa, &ta, &xb, &tb].map(|x| judge.classifier.predict(x, 8).unwrap());
        let ce = |t: &Tensor, c: usize| {
            t.data()
                .chunks(2)
                .map(|r| {
                    let mx = r[0].max(r[1]);
                    let lse = mx + ((r[0] - mx).exp() + (r[1] - mx).exp()).ln();
                    (lse - r[c]) as f64
                })
                .sum::<f64>()
                / m as f64
        };
        if !(ce(&logits[0], 0) < ce(&logits[1], 0) && ce(&logits[2], 1) < ce(&logits[3], 1)) {
            continue;
        }
        qualified += 1;
        let mut fade = ParamSet::new();
        fade.push("alpha_raw", Tensor::scalar(0.0));
        fade.push("beta_raw", Tensor::scalar(0.0));
        let mut opt = Adam::new(&fade, 0.5, 0.999, 1e-8);
        let mut g = Graph::new();
        let b = fade.bind(&mut g, true);
        let alpha = g.sigmoid(b.id(0)).unwrap();
        let beta = g.sigmoid(b.id(1)).unwrap();
        let ids = logits.map(|t| g.constant(t));
        let groups = GroupLogits {
            real_a: ids[0],
            trans_a: ids[1],
            real_b: ids[2],
            trans_b: ids[3],
        };
        let l = af_classification_loss(&mut g, groups, 0, 1, alpha, beta).unwrap();
        let before = (g.value(alpha).item(), g.value(beta).item());
        let mut grads = g.gradients(l, &b.ids).unwrap();
        opt.step(&mut fade, &b, &mut grads, 2e-4);
        let sig = |v: f32| 1.0 / (1.0 + (-v).exp());
        let after = (sig(fade.tensor(0).item()), sig(fade.tensor(1).item()));
        if after.0 > before.0 && after.1 > before.1 {
            rises += 1;
        }
    }
    outcome(
        qualified == P6_SEEDS && rises == P6_SEEDS,
        format!("α and β rose on {rises}/{qualified} qualifying batches ({tried} drawn)"),
    )
}

fn p7() -> Outcome {
    let start = Instant::now();
    let (mut g_acc, mut g_j, mut b_acc, mut b_j) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rows = Vec::new();
    for seed in 0..P7_SEEDS {
        let ds = synth_generate(&SynthConfig::default(), seed).unwrap();
        let sub = subsample(&ds, P7_FRACTION, seed).unwrap();
        let gtcn_cfg = TrainConfig {
            epochs: P7_EPOCHS,
            seed,
            mode: TrainMode::Gtcn,
            toggles: Toggles::ALL,
            gan: P7_GAN,
            ..TrainConfig::default()
        };
        let base_cfg = TrainConfig {
            epochs: P7_EPOCHS,
            seed,
            mode: TrainMode::CnnBaseline,
            ..TrainConfig::default()
        };
        let (gm, _) = train(&gtcn_cfg, &sub).unwrap();
        let (bm, _) = train(&base_cfg, &ds).unwrap();
        let gr = evaluate(&gm, &ds.test, &FAR_TARGETS).unwrap();
        let br = evaluate(&bm, &ds.test, &FAR_TARGETS).unwrap();
        let (gj, bj) = (gr.fisher_j.unwrap_or(f64::NAN), br.fisher_j.unwrap_or(f64::NAN));
        rows.push(format!(
            "seed {seed}: gtcn acc {:.2}% J {gj:.3} | baseline acc {:.2}% J {bj:.3}",
            100.0 * gr.accuracy,
            100.0 * br.accuracy
        ));
        g_acc.push(gr.accuracy);
        g_j.push(gj);
        b_acc.push(br.accuracy);
        b_j.push(bj);
    }
    for r in &rows {
        line(&format!("    {r}"));
    }
    let (ga, gj, ba, bj) = (median(g_acc), median(g_j), median(b_acc), median(b_j));
    outcome(
        ga >= ba && gj >= bj,
        format!(
            "median acc gtcn@{:.0}% {:.2}% vs baseline@100% {:.2}%; median J {gj:.3} vs {bj:.3} ({:.0}s)",
            100.0 * P7_FRACTION,
            100.0 * ga,
            100.0 * ba,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn p8() -> Outcome {
    let ds = small_synth(2, 50, 10, 8);
    let cfg = TrainConfig {
        epochs: 2,
        seed: 8,
        gan: SMALL_GAN,
        ..TrainConfig::default()
    };
    let (m1, l1) = train(&cfg, &ds).unwrap();
    let (_, l2) = train(&cfg, &ds).unwrap();
    let bits = |l: &trainer::TrainLog| -> Vec<Vec<u32>> {
        l.steps
            .iter()
            .take(P8_STEPS)
            .map(|r| {
                let s = r.losses;
                [s.l_cls, s.l_quad, s.l_adv_a, s.l_adv_b, s.l_cyc_a, s.l_cyc_b, s.alpha, s.beta]
                    .iter()
                    .map(|v| v.to_bits())
                    .collect()
            })
            .collect()
    };
    let enough = l1.steps.len() >= P8_STEPS;
    let same_losses = bits(&l1) == bits(&l2);
    let dir = tempfile::tempdir().unwrap();
    let (p, q) = (dir.path().join("a.gtcn"), dir.path().join("b.gtcn"));
    m1.save(&p).unwrap();
    let loaded = GtcnModel::load(&p).unwrap();
    loaded.save(&q).unwrap();
    let same_bytes = std::fs::read(&p).unwrap() == std::fs::read(&q).unwrap();
    let before = trainer::predict_images(&m1, &ds.test).unwrap();
    let after = trainer::predict_images(&loaded, &ds.test).unwrap();
    let same_logits = before.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    outcome(
        enough && same_losses && same_bytes && same_logits,
        format!(
            "{} steps; first {P8_STEPS} losses bitwise equal: {same_losses}; save→load→save identical: {same_bytes}; eval logits identical: {same_logits}",
            l1.steps.len()
        ),
    )
}

fn p9() -> Outcome {
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let mut frozen = true;
    let mut batch_ok = true;
    for seed in 0..P9_SEEDS {
        let ds = small_synth(4, 20, 10, 90 + seed);
        let cfg = TrainConfig {
            epochs: 2,
            seed,
            gan: SMALL_GAN,
            ..TrainConfig::default()
        };
        let (model, log) = train(&cfg, &ds).unwrap();
        // one real sample per class and its translation on each side
        batch_ok &= log.steps.len() == cfg.epochs * ds.train.len() / 2;
        let (tuned, _) = fine_tune(&model, &ds, cfg.fine_tune_epochs, &cfg).unwrap();
        frozen &= model.translators == tuned.translators;
        before.push(evaluate(&model, &ds.test, &FAR_TARGETS).unwrap().accuracy);
        after.push(evaluate(&tuned, &ds.test, &FAR_TARGETS).unwrap().accuracy);
    }
    let (mb, ma) = (median(before), median(after));
    outcome(
        ma >= mb - P9_MAX_DROP && frozen && batch_ok,
        format!(
            "median acc before {:.2}% after fine-tune {:.2}% (max drop {:.0}%); translators frozen: {frozen}; size-4 batches: {batch_ok}",
            100.0 * mb,
            100.0 * ma,
            100.0 * P9_MAX_DROP
        ),
    )
}

fn p10() -> Outcome {
    let ds = small_synth(2, 4, 2, 10);
    let gen = Generator::new(GeneratorConfig { width: 8, blocks: 2 }, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let x = stack(ds.train.iter().take(2).map(|i| &i.pixels)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draw = |mode, rng: &mut ChaCha8Rng| gen.translate(&x, &noise_for(mode, 2, 8, rng)).unwrap();
    let s1 = draw(NoiseMode::Stochastic, &mut rng);
    let s2 = draw(NoiseMode::Stochastic, &mut rng);
    let z1 = draw(NoiseMode::Zero, &mut rng);
    let z2 = draw(NoiseMode::Zero, &mut rng);
    let st = s1.mean_abs_diff(&s2).unwrap();
    let zero = z1.mean_abs_diff(&z2).unwrap();
    outcome(
        st > 0.0 && z1 == z2,
        format!("mean L1 between two noise draws: ST on {st:.3e}, ST off {zero:.1e}"),
    )
}

#[test]
fn acceptance() {
    let checks: [(&str, &str, fn() -> Outcome); 10] = [
        ("P1", "parameter accounting", p1),
        ("P2", "compute accounting", p2),
        ("P3", "gradient correctness", p3),
        ("P4", "loss oracles", p4),
        ("P5", "metric oracle equivalence", p5),
        ("P6", "fade-in gradient sign", p6),
        ("P7", "desk-scale ablation", p7),
        ("P8", "determinism and persistence", p8),
        ("P9", "multi-class fine-tune", p9),
        ("P10", "stochastic translation", p10),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in checks {
        let o = check();
        line(&format!("{id} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail));
        if !o.pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
