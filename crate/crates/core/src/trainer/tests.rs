use super::*;
use crate::data::{synth_generate, SynthConfig};
use crate::models::{GanConfig, GeneratorConfig};

const TINY_GAN: GanConfig = GanConfig {
    generator: GeneratorConfig { width: 4, blocks: 1 },
    disc_width: 4,
};

fn tiny_data(classes: usize, per_class: usize) -> Dataset {
    let cfg = SynthConfig {
        classes,
        per_class,
        test_per_class: 2,
        res: 32,
        ..SynthConfig::default()
    };
    synth_generate(&cfg, 1).unwrap()
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        gan: TINY_GAN,
        seed: 42,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let ds = tiny_data(2, 4);
    let cfg = tiny_cfg();
    let (m1, l1) = train(&cfg, &ds).unwrap();
    let (m2, l2) = train(&cfg, &ds).unwrap();
    assert_eq!(l1.steps.len(), 2 * 2);
    assert_eq!(l1, l2);
    assert_eq!(m1.to_archive().to_bytes().unwrap(), m2.to_archive().to_bytes().unwrap());
    let other = TrainConfig { seed: 43, ..cfg };
    assert_ne!(train(&other, &ds).unwrap().1, l1);
}

#[test]
fn fade_weights_fixed_without_af() {
    let ds = tiny_data(2, 4);
    let cfg = TrainConfig {
        toggles: Toggles::parse("joint,ql,st").unwrap(),
        ..tiny_cfg()
    };
    let (model, log) = train(&cfg, &ds).unwrap();
    assert!(log.steps.iter().all(|r| r.losses.alpha == 0.5 && r.losses.beta == 0.5));
    assert_eq!(model.alpha(), 0.5);
    let with_af = train(&tiny_cfg(), &ds).unwrap().0;
    assert_ne!(with_af.alpha(), 0.5);
}

#[test]
fn quadruplet_off_reports_zero() {
    let ds = tiny_data(2, 4);
    let cfg = TrainConfig {
        toggles: Toggles::parse("joint,af,st").unwrap(),
        ..tiny_cfg()
    };
    let log = train(&cfg, &ds).unwrap().1;
    assert!(log.steps.iter().all(|r| r.losses.l_quad == 0.0));
}

#[test]
fn baseline_has_no_translators() {
    let ds = tiny_data(2, 8);
    let cfg = TrainConfig {
        mode: TrainMode::CnnBaseline,
        ..tiny_cfg()
    };
    let (model, log) = train(&cfg, &ds).unwrap();
    assert!(model.translators.is_none());
    assert!(model.to_archive().iter().all(|(n, _)| !n.starts_with("g_") && !n.starts_with("d_")));
    // 16 samples in batches of 8
    assert_eq!(log.steps.len(), 2 * 2);
}

#[test]
fn separate_mode_freezes_each_phase() {
    let ds = tiny_data(2, 4);
    let cfg = TrainConfig {
        mode: TrainMode::Separate,
        ..tiny_cfg()
    };
    let (model, log) = train(&cfg, &ds).unwrap();
    assert_eq!(log.steps.len(), 2 * 2 * 2);
    // translator phase never touches the classifier
    assert!(log.steps[..4].iter().all(|r| r.losses.l_cls == 0.0));
    assert!(log.steps[4..].iter().all(|r| r.losses.l_adv_a == 0.0 && r.losses.l_cls > 0.0));
    assert!(model.translators.is_some());
}

#[test]
fn step_plan_freezes_translators() {
    let ds = tiny_data(2, 4);
    let cfg = tiny_cfg();
    let model = GtcnModel::new(arch_for(&cfg, &ds), &mut stream(0, &[tag("init")])).unwrap();
    let mut state = TrainState::new(model.clone(), &cfg);
    let xa = stack(ds.train[..2].iter().map(|i| &i.pixels)).unwrap();
    let xb = stack(ds.train[4..6].iter().map(|i| &i.pixels)).unwrap();
    let ctx = StepCtx {
        cfg: &cfg,
        step: 0,
        lr: 1e-3,
    };
    let plan = StepPlan {
        update_gan: false,
        update_c: true,
        joint: false,
    };
    gtcn_step(&mut state.model, &mut state.opt, xa.clone(), xb.clone(), (0, 1), plan, &ctx).unwrap();
    let (before, after) = (model.translators.as_ref().unwrap(), state.model.translators.as_ref().unwrap());
    assert_eq!(before, after);
    assert_ne!(model.classifier.params, state.model.classifier.params);

    let mut state = TrainState::new(model.clone(), &cfg);
    let plan = StepPlan {
        update_gan: true,
        update_c: false,
        joint: true,
    };
    gtcn_step(&mut state.model, &mut state.opt, xa, xb, (0, 1), plan, &ctx).unwrap();
    assert_eq!(model.classifier, state.model.classifier);
    assert_eq!(model.fade, state.model.fade);
    assert_ne!(model.translators, state.model.translators);
}

#[test]
fn fine_tune_leaves_translators_frozen() {
    let ds = tiny_data(2, 8);
    let cfg = tiny_cfg();
    let (model, _) = train(&cfg, &ds).unwrap();
    let (tuned, log) = fine_tune(&model, &ds, 2, &cfg).unwrap();
    assert_eq!(log.steps.len(), 2 * 2);
    assert_eq!(model.translators, tuned.translators);
    assert_eq!(model.fade, tuned.fade);
    assert_ne!(model.classifier.params, tuned.classifier.params);
}

#[test]
fn multiclass_uses_pairwise_batches() {
    let ds = tiny_data(4, 3);
    let (model, log) = train(&tiny_cfg(), &ds).unwrap();
    assert_eq!(model.arch.classes, 4);
    // 12 samples, two per step
    assert_eq!(log.steps.len(), 2 * 6);
}

#[test]
fn state_round_trip_is_byte_identical() {
    let ds = tiny_data(2, 4);
    let cfg = tiny_cfg();
    let (state, _) = train_state(&cfg, &ds).unwrap();
    let bytes = state.to_archive().to_bytes().unwrap();
    let restored = TrainState::from_archive(&Archive::from_bytes(&bytes).unwrap(), &cfg).unwrap();
    assert_eq!(restored, state);
    assert_eq!(restored.to_archive().to_bytes().unwrap(), bytes);
}

#[test]
fn checkpoints_written_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_data(2, 4);
    let cfg = TrainConfig {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        epoch_eval: true,
        ..tiny_cfg()
    };
    let (model, log) = train(&cfg, &ds).unwrap();
    assert!(dir.path().join("gtcn_epoch_000.gtcn").exists());
    assert!(dir.path().join("gtcn_epoch_001.gtcn").exists());
    let fin = load_checkpoint(&dir.path().join("final.gtcn")).unwrap();
    assert_eq!(fin, model);
    assert!(log.epochs.iter().all(|e| e.test_accuracy.is_some()));
    let csv = log.to_csv();
    assert!(csv.starts_with(LOG_HEADER));
    assert_eq!(csv.lines().count(), 1 + log.steps.len());
}

#[test]
fn rejects_bad_inputs() {
    let ds = tiny_data(2, 4);
    assert!(train(&TrainConfig { epochs: 3, ..tiny_cfg() }, &ds).is_err());
    let mut lopsided = ds.clone();
    lopsided.train.retain(|im| im.label == 0);
    assert!(train(&tiny_cfg(), &lopsided).is_err());
}
