use act_core::data::{stratified_folds, synth_generate, Dataset, SynthConfig};
use act_core::train::{
    adamw_step, batch_gradients, evaluate, label_smoothed_ce, lr_schedule, train_one, train_step, Example,
    OptimizerState, SubSeeds,
};
use act_core::{ActParams, ModelConfig, Split, Tensor, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(features: usize, classes: usize) -> ModelConfig {
    ModelConfig {
        max_frames: 30,
        features,
        num_classes: classes,
        d_model: 16,
        heads: 2,
        head_dim: 8,
        layers: 1,
        d_ffn: 32,
        d_head_hidden: 8,
        dropout: 0.0,
    }
}

fn dataset() -> Dataset {
    synth_generate(&SynthConfig {
        classes: 3,
        train_per_class: 10,
        test_per_class: 3,
        features: 52,
        seed: 2,
    })
    .unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        folds: 3,
        ..TrainConfig::default()
    }
}

fn examples(n: usize, p: usize, classes: usize, seed: u64) -> Vec<Example<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(3..=12);
            Example {
                features: Tensor::from_fn(&[len, p], |_| rng.random_range(-1.0..1.0)),
                label: rng.random_range(0..classes),
            }
        })
        .collect()
}

fn train_labels(ds: &Dataset) -> Vec<usize> {
    ds.split(Split::Train).iter().map(|s| s.label).collect()
}

#[test]
fn history_has_one_record_per_epoch() {
    let ds = dataset();
    let cfg = quick(3);
    let folds = stratified_folds(&train_labels(&ds), &ds.class_names, cfg.folds, cfg.val_fraction, 0).unwrap();
    let out = train_one::<f32>(&small(52, 3), &ds, &folds, 1, &cfg).unwrap();
    assert_eq!(out.history.len(), 3);
    assert_eq!(out.history.iter().map(|r| r.epoch).collect::<Vec<_>>(), [1, 2, 3]);
    assert!((1..=3).contains(&out.best_epoch));
    assert_eq!(out.seeds, SubSeeds::derive(0, 1));
    let best = out.history[out.best_epoch - 1].val_balanced_accuracy;
    assert!(out.history[..out.best_epoch - 1]
        .iter()
        .all(|r| r.val_balanced_accuracy < best));

    let one = train_one::<f32>(&small(52, 3), &ds, &folds, 0, &quick(1)).unwrap();
    assert_eq!((one.history.len(), one.best_epoch), (1, 1));
}

#[test]
fn training_is_deterministic_for_a_fixed_seed() {
    let ds = dataset();
    let cfg = quick(2);
    let folds = stratified_folds(&train_labels(&ds), &ds.class_names, 3, 0.1, 0).unwrap();
    let a = train_one::<f64>(&small(52, 3), &ds, &folds, 0, &cfg).unwrap();
    let b = train_one::<f64>(&small(52, 3), &ds, &folds, 0, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    let c = train_one::<f64>(&small(52, 3), &ds, &folds, 0, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.params.checksum(), c.params.checksum());
}

#[test]
fn training_rejects_bad_fold_and_width() {
    let ds = dataset();
    let cfg = quick(1);
    let folds = stratified_folds(&train_labels(&ds), &ds.class_names, 3, 0.1, 0).unwrap();
    assert!(train_one::<f32>(&small(52, 3), &ds, &folds, 3, &cfg).is_err());
    let err = train_one::<f32>(&small(68, 3), &ds, &folds, 0, &cfg).unwrap_err();
    assert_eq!(err.category(), "config");
}

#[test]
fn evaluation_ignores_sample_order() {
    let ds = dataset();
    let params = ActParams::<f32>::init(&small(52, 3), 4).unwrap();
    let mut samples = ds.split(Split::Train);
    let before = evaluate(&params, &samples, 3, None).unwrap();
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(evaluate(&params, &samples, 3, None).unwrap(), before);
}

#[test]
fn batch_gradient_is_the_mean_of_example_gradients() {
    let params = ActParams::<f64>::init(&small(6, 4), 5).unwrap();
    // more than one gradient chunk
    let ex = examples(21, 6, 4, 6);
    let (loss, grads) = batch_gradients(&params, &ex, 0.1, None).unwrap();
    let mut mean_loss = 0.0;
    let mut mean: Vec<Tensor<f64>> = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
    for e in &ex {
        let (l, g) = batch_gradients(&params, std::slice::from_ref(e), 0.1, None).unwrap();
        mean_loss += l / 21.0;
        for (m, gi) in mean.iter_mut().zip(&g) {
            for (a, b) in m.data_mut().iter_mut().zip(gi.data()) {
                *a += b / 21.0;
            }
        }
    }
    assert!((loss - mean_loss).abs() <= 1e-12);
    for (g, m) in grads.iter().zip(&mean) {
        assert!(g.max_abs_diff(m) <= 1e-12);
    }
}

#[test]
fn dropout_free_steps_reduce_loss_on_a_fixed_batch() {
    let mut params = ActParams::<f64>::init(&small(6, 3), 8).unwrap();
    let mut state = OptimizerState::new(&params);
    let ex = examples(12, 6, 3, 9);
    let cfg = TrainConfig::default();
    let mut losses = Vec::new();
    for _ in 0..10 {
        losses.push(train_step(&mut params, &mut state, &ex, 1e-3, &cfg, None).unwrap());
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn schedule_is_continuous_at_the_warmup_peak() {
    let cfg = TrainConfig::default();
    let (total, d) = (2500, 64);
    let warmup = 1000.0_f64;
    let peak = lr_schedule(1000, total, &cfg, d);
    let rising = (d as f64).powf(-0.5) * 1000.0 * warmup.powf(-1.5);
    let decaying = (d as f64).powf(-0.5) * 1000.0_f64.powf(-0.5);
    assert!((peak - rising).abs() <= 1e-12);
    assert!((peak - decaying).abs() <= 1e-12);
    assert!(lr_schedule(999, total, &cfg, d) < peak);
    assert!(lr_schedule(1001, total, &cfg, d) < peak);
    assert!((lr_schedule(1999, total, &cfg, d) - (d as f64).powf(-0.5) / 1999.0_f64.sqrt()).abs() <= 1e-15);
    assert_eq!(lr_schedule(2000, total, &cfg, d), cfg.post_step_lr);
}

#[test]
fn uniform_logits_give_log_class_count() {
    for c in [2usize, 3, 20] {
        let logits = Tensor::<f64>::full(&[4, c], 0.7);
        let loss = label_smoothed_ce(&logits, &[0, 1, 1, 0], 0.1).unwrap();
        assert!((loss - (c as f64).ln()).abs() <= 1e-9);
    }
}

#[test]
fn adamw_minimizes_a_quadratic() {
    // loss = sum of theta^2 / 2, so the gradient is theta itself
    let mut params = ActParams::<f64>::init(&small(4, 2), 10).unwrap();
    let cfg = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let norm = |p: &ActParams<f64>| p.tensors().iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>();
    let start = norm(&params);
    let mut state = OptimizerState::new(&params);
    for _ in 0..200 {
        let grads: Vec<Tensor<f64>> = params.tensors().into_iter().cloned().collect();
        adamw_step(&mut params, &grads, &mut state, 1e-2, &cfg).unwrap();
    }
    assert!(norm(&params) < 0.05 * start, "{} -> {}", start, norm(&params));
}
