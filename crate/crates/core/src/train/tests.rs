use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{ModelConfig, ModelOutput, FORMANT_RANGES};

fn tiny() -> ModelConfig {
    ModelConfig {
        dim: 8,
        n_frames: 8,
        n_bins: 16,
        enc_layers: 1,
        enc_heads: 2,
        enc_head_dim: 4,
        pred_layers: 1,
        pred_heads: 2,
        pred_head_dim: 4,
        mlp_dim: 12,
        pool_heads: 2,
        formant_ranges: FORMANT_RANGES,
        seed: 11,
    }
}

fn random_annotation(rng: &mut ChaCha8Rng, frames: usize) -> FrameAnnotation {
    let voiced: Vec<bool> = (0..frames).map(|_| rng.random_bool(0.6)).collect();
    FrameAnnotation {
        f0_hz: voiced.iter().map(|&v| v.then(|| rng.random_range(90.0..300.0))).collect(),
        f1_hz: (0..frames).map(|_| rng.random_range(300.0..800.0)).collect(),
        f2_hz: (0..frames).map(|_| rng.random_range(900.0..2400.0)).collect(),
        voiced,
    }
}

fn random_example(cfg: &ModelConfig, seed: u64, label: Label) -> Example<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_frames * cfg.n_bins;
    let shift = if label == Label::Fake { 0.5 } else { -0.5 };
    let mag = (0..n).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
    let phase = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let shape = [cfg.n_frames, cfg.n_bins];
    Example {
        mag: Tensor::new(&shape, mag).unwrap(),
        phase: Tensor::new(&shape, phase).unwrap(),
        annotation: random_annotation(&mut rng, cfg.n_frames),
        label,
    }
}

fn toy_set(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<Example<f64>> {
    (0..n)
        .map(|i| random_example(cfg, seed + i as u64, if i % 2 == 0 { Label::Real } else { Label::Fake }))
        .collect()
}

fn scaler_for(set: &[Example<f64>]) -> FormantScaler {
    FormantScaler::fit(set.iter().map(|e| &e.annotation), FORMANT_RANGES).unwrap()
}

fn single(f0: Option<f64>, f1: f64, f2: f64) -> FrameAnnotation {
    FrameAnnotation {
        voiced: vec![f0.is_some()],
        f0_hz: vec![f0],
        f1_hz: vec![f1],
        f2_hz: vec![f2],
    }
}

#[test]
fn scaler_two_frame_statistics() {
    let mut a = single(Some(100.0), 300.0, 1000.0);
    let b = single(Some(400.0), 600.0, 2000.0);
    a.voiced.extend(b.voiced);
    a.f0_hz.extend(b.f0_hz);
    a.f1_hz.extend(b.f1_hz);
    a.f2_hz.extend(b.f2_hz);
    let s = FormantScaler::fit([&a], FORMANT_RANGES).unwrap();
    let (l100, l400) = (libm::log(100.0), libm::log(400.0));
    assert!((s.mean[0] - (l100 + l400) / 2.0).abs() < 1e-15);
    assert!((s.std[0] - (l400 - l100).abs() / 2.0).abs() < 1e-15);
}

#[test]
fn scaler_rejects_constant_pitch() {
    let frames: Vec<FrameAnnotation> = (0..4).map(|i| single(Some(200.0), 300.0 + 50.0 * i as f64, 1200.0 + 100.0 * i as f64)).collect();
    assert!(matches!(FormantScaler::fit(&frames, FORMANT_RANGES), Err(TrainError::DegenerateData(_))));
}

#[test]
fn scaler_needs_voiced_frames() {
    let a = single(None, 500.0, 1500.0);
    assert!(matches!(FormantScaler::fit([&a], FORMANT_RANGES), Err(TrainError::DegenerateData(_))));
}

#[test]
fn scaler_round_trip() {
    let set = toy_set(&tiny(), 4, 0);
    let s = scaler_for(&set);
    for hz in [[100.0, 500.0, 1500.0], [61.0, 201.0, 2699.0], [399.0, 849.0, 801.0]] {
        let back = s.invert(s.apply(hz));
        for i in 0..3 {
            assert!((back[i] - hz[i]).abs() < 1e-9);
        }
    }
}

fn output_for(truth: &FrameAnnotation, score: f64) -> ModelOutput {
    let n = truth.n_frames();
    ModelOutput {
        formants: (0..n)
            .map(|t| [truth.f0_hz[t].unwrap_or(150.0), truth.f1_hz[t], truth.f2_hz[t]])
            .collect(),
        voicing_prob: truth.voiced.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        v_mask: truth.voiced.clone(),
        score,
        frame_weights: vec![1.0 / n as f64; n],
    }
}

#[test]
fn perfect_predictions_cost_nothing() {
    let ex = random_example(&tiny(), 1, Label::Fake);
    let s = scaler_for(&[ex.clone()]);
    let c = compound_loss(&output_for(&ex.annotation, 1.0), &ex.annotation, Label::Fake, &s, &LossWeights::default()).unwrap();
    assert!(c.bce_p < 1e-5 && c.bce_v < 1e-5 && c.mse_f < 1e-5, "{c:?}");
}

#[test]
fn chance_score_costs_ln2() {
    let ex = random_example(&tiny(), 2, Label::Fake);
    let s = scaler_for(&[ex.clone()]);
    let c = compound_loss(&output_for(&ex.annotation, 0.5), &ex.annotation, Label::Fake, &s, &LossWeights::default()).unwrap();
    assert!((c.total - core::f64::consts::LN_2).abs() < 1e-5);
}

#[test]
fn total_is_weighted_sum() {
    let cfg = tiny();
    let model = Model::<f64>::new(cfg.clone()).unwrap();
    let set = toy_set(&cfg, 6, 20);
    let s = scaler_for(&set);
    let w = LossWeights::default();
    for ex in &set {
        let out = model.forward(&ex.mag, &ex.phase).unwrap();
        let c = compound_loss(&out, &ex.annotation, ex.label, &s, &w).unwrap();
        assert_eq!(c.total, c.bce_p + 0.3 * c.bce_v + 0.3 * c.mse_f);
        assert!(c.bce_p >= 0.0 && c.bce_v >= 0.0 && c.mse_f >= 0.0);
    }
}

#[test]
fn graph_and_plain_losses_agree() {
    let cfg = tiny();
    let model = Model::<f64>::new(cfg.clone()).unwrap();
    let set = toy_set(&cfg, 4, 30);
    let s = scaler_for(&set);
    let w = LossWeights::default();
    for ex in &set {
        let plain = compound_loss(&model.forward(&ex.mag, &ex.phase).unwrap(), &ex.annotation, ex.label, &s, &w).unwrap();
        let mut g = Graph::new();
        let b = model.bind(&mut g, false);
        let (m, p) = (g.constant(ex.mag.clone()), g.constant(ex.phase.clone()));
        let vars = model.forward_graph(&mut g, &b, m, p).unwrap();
        let graph = compound_loss_graph(&mut g, &vars, &ex.annotation, ex.label, &s, &w).unwrap().components(&g);
        for (a, b) in [(plain.total, graph.total), (plain.bce_p, graph.bce_p), (plain.bce_v, graph.bce_v), (plain.mse_f, graph.mse_f)] {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn unvoiced_utterance_has_no_formant_term() {
    let cfg = tiny();
    let mut ex = random_example(&cfg, 3, Label::Real);
    let s = scaler_for(&[ex.clone()]);
    ex.annotation.voiced.iter_mut().for_each(|v| *v = false);
    ex.annotation.f0_hz.iter_mut().for_each(|f| *f = None);
    let model = Model::<f64>::new(cfg).unwrap();
    let out = model.forward(&ex.mag, &ex.phase).unwrap();
    let c = compound_loss(&out, &ex.annotation, ex.label, &s, &LossWeights::default()).unwrap();
    assert_eq!(c.mse_f, 0.0);
    let mut g = Graph::new();
    let b = model.bind(&mut g, true);
    let (m, p) = (g.constant(ex.mag.clone()), g.constant(ex.phase.clone()));
    let vars = model.forward_graph(&mut g, &b, m, p).unwrap();
    let l = compound_loss_graph(&mut g, &vars, &ex.annotation, ex.label, &s, &LossWeights::default()).unwrap();
    assert_eq!(g.value(l.mse_f).item(), 0.0);
    g.backward(l.total).unwrap();
}

#[test]
fn misaligned_truth_is_rejected() {
    let cfg = tiny();
    let ex = random_example(&cfg, 4, Label::Real);
    let s = scaler_for(&[ex.clone()]);
    let short = single(Some(120.0), 500.0, 1500.0);
    let out = output_for(&ex.annotation, 0.3);
    assert!(matches!(
        compound_loss(&out, &short, Label::Real, &s, &LossWeights::default()),
        Err(TrainError::Alignment { predicted: 8, annotated: 1 })
    ));
}

#[test]
fn balancing_cycles_the_minority() {
    let items: Vec<(u8, Label)> = (0..10).map(|i| (i, Label::Fake)).chain((10..15).map(|i| (i, Label::Real))).collect();
    let out = balance_classes(&items, |e| e.1).unwrap();
    assert_eq!(out.len(), 20);
    for r in 10..15 {
        assert_eq!(out.iter().filter(|e| e.0 == r).count(), 2);
    }

    let items: Vec<(u8, Label)> = (0..7).map(|i| (i, Label::Fake)).chain((7..10).map(|i| (i, Label::Real))).collect();
    let out = balance_classes(&items, |e| e.1).unwrap();
    let reals: Vec<u8> = out.iter().filter(|e| e.1 == Label::Real).map(|e| e.0).collect();
    assert_eq!(reals, [7, 8, 9, 7, 8, 9, 7]);

    let even: Vec<(u8, Label)> = vec![(0, Label::Real), (1, Label::Fake)];
    assert_eq!(balance_classes(&even, |e| e.1).unwrap(), even);
    let one_class: Vec<(u8, Label)> = vec![(0, Label::Fake)];
    assert_eq!(balance_classes(&one_class, |e| e.1), Err(TrainError::ClassMissing(Label::Real)));
}

#[test]
fn every_parameter_receives_gradient() {
    let cfg = tiny();
    let mut model = Model::<f64>::new(cfg.clone()).unwrap();
    let set = toy_set(&cfg, 2, 40);
    let s = scaler_for(&set);
    for ex in &set {
        accumulate_utterance(&mut model, ex, &s, &LossWeights::default(), 1.0).unwrap();
    }
    for (name, t) in model.params.iter() {
        let g = t.grad.as_ref().unwrap_or_else(|| panic!("{name} has no gradient"));
        assert!(g.iter().any(|v| *v != 0.0), "{name} has an all-zero gradient");
    }
}

#[test]
fn small_step_descends() {
    let cfg = tiny();
    let mut model = Model::<f64>::new(cfg.clone()).unwrap();
    let set = toy_set(&cfg, 4, 50);
    let s = scaler_for(&set);
    let w = LossWeights::default();
    let before = evaluate_loss(&model, &set, &s, &w).unwrap().total;
    model.params.zero_grads();
    for ex in &set {
        accumulate_utterance(&mut model, ex, &s, &w, 0.25).unwrap();
    }
    let mut opt = AdamW::new(AdamWConfig::default(), &model.params);
    opt.step(&mut model.params, 1e-6);
    let after = evaluate_loss(&model, &set, &s, &w).unwrap().total;
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn zero_lr_stops_at_epoch_21_with_first_checkpoint() {
    let cfg = tiny();
    let model = Model::<f64>::new(cfg.clone()).unwrap();
    let set = toy_set(&cfg, 4, 60);
    let s = scaler_for(&set);
    let tc = TrainConfig {
        lr: 0.0,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let out = train_loop(model.clone(), &set, &set[..2], &s, &tc, |_| {}).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.history.len(), 21);
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.best.params, model.params);
    let lrs: Vec<f64> = out.history.iter().map(|r| r.lr).collect();
    assert!(lrs[..11].iter().all(|&l| l == 0.0));
}

#[test]
fn lr_halves_once_on_a_plateau() {
    let cfg = tiny();
    let model = Model::<f64>::new(cfg.clone()).unwrap();
    let set = toy_set(&cfg, 2, 70);
    let s = scaler_for(&set);
    // a vanishing rate keeps validation flat to within the tolerance
    let tc = TrainConfig {
        lr: 1e-30,
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let out = train_loop(model, &set, &set, &s, &tc, |_| {}).unwrap();
    let lrs: Vec<f64> = out.history.iter().map(|r| r.lr).collect();
    assert!(lrs[..11].iter().all(|&l| l == 1e-30));
    assert!(lrs[11..].iter().all(|&l| l == 0.5e-30));
}

#[test]
fn training_is_reproducible() {
    let cfg = tiny();
    let set = toy_set(&cfg, 6, 80);
    let s = scaler_for(&set);
    let tc = TrainConfig {
        lr: 3e-3,
        batch_size: 4,
        max_epochs: 4,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = || train_loop(Model::<f64>::new(cfg.clone()).unwrap(), &set, &set[..2], &s, &tc, |_| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.best.params, b.best.params);
}

#[test]
fn non_finite_input_aborts_with_location() {
    let cfg = tiny();
    let mut set = toy_set(&cfg, 4, 90);
    let s = scaler_for(&set);
    for ex in set.iter_mut() {
        ex.mag.values_mut()[0] = f64::NAN;
    }
    let tc = TrainConfig {
        batch_size: 2,
        ..TrainConfig::default()
    };
    let err = train_loop(Model::<f64>::new(cfg).unwrap(), &set, &set, &s, &tc, |_| {}).unwrap_err();
    assert!(matches!(err, TrainError::NonFinite { epoch: 1, batch: Some(1), .. }), "{err:?}");
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(bad.validate().is_err());
    let mut bad = TrainConfig::default();
    bad.loss_weights.voicing = 0.0;
    assert!(bad.validate().is_err());
}
