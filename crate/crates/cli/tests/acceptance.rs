//! Acceptance suite. Runs every criterion, prints one `PASS` or `FAIL` line
//! per criterion and exits nonzero if any failed.
//!
//! The extended headline run (full recipe, ten folds on an exported public
//! dataset) only runs when `ACT_HEADLINE_DATA` names a POSEPACK directory;
//! its outcome is informational.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use act_bench::{benchmark, sweep, BenchConfig};
use act_core::data::{load_dataset, save_dataset, stratified_folds, synth_generate, SynthConfig};
use act_core::infer::{attention_maps, ensemble_logits, frame_drop_sweep, logits_for, Alignment, DropFrom};
use act_core::model::{forward_on_tape, Clip, ParamVars};
use act_core::numerics::{grad_check, GradCheckOptions};
use act_core::train::{
    argmax, evaluate, label_smoothed_ce, lr_schedule, steps_per_epoch, train_one, train_step, Example, OptimizerState,
    Summary,
};
use act_core::{ActParams, ModelConfig, Preset, Split, Tape, Tensor, TrainConfig, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Independent closed-form count: embedding, encoder layers, head.
fn count_by_hand(p: usize, t: usize, c: usize, d: usize, layers: usize, hh: usize) -> usize {
    let f = 4 * d;
    let embedding = p * d + d + d + (t + 1) * d;
    let layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d;
    let head = d * hh + hh + hh * c + c;
    embedding + layers * layer + head
}

fn parameter_counts() -> Outcome {
    let expected = [
        (Preset::Micro, 52, 227_156, 227),
        (Preset::Small, 52, 1_040_404, 1_040),
        (Preset::Medium, 52, 2_740_052, 2_740),
        (Preset::Large, 52, 4_902_164, 4_902),
        (Preset::Micro, 68, 228_180, 228),
        (Preset::Small, 68, 0, 1_042),
        (Preset::Medium, 68, 0, 2_743),
    ];
    let mut seen = Vec::new();
    for (preset, p, exact, thousands) in expected {
        let config = ModelConfig::preset_with(preset, p, 20);
        let formula = config.param_count();
        let allocated = ActParams::<f32>::init(&config, 0)
            .map_err(|e| e.to_string())?
            .scalar_count();
        let oracle = count_by_hand(p, 30, 20, config.d_model, config.layers, config.d_head_hidden);
        ensure(formula == allocated, || {
            format!("{preset} P={p}: formula {formula} != allocated {allocated}")
        })?;
        ensure(formula == oracle, || {
            format!("{preset} P={p}: formula {formula} != oracle {oracle}")
        })?;
        ensure(exact == 0 || formula == exact, || {
            format!("{preset} P={p}: {formula} != {exact}")
        })?;
        let rounded = (formula + 500) / 1000;
        ensure(rounded == thousands, || {
            format!("{preset} P={p}: {rounded}k != {thousands}k")
        })?;
        seen.push(format!("{preset}/{p}={formula}"));
    }
    Ok(seen.join(" "))
}

fn tiny() -> ModelConfig {
    ModelConfig {
        max_frames: 5,
        features: 8,
        num_classes: 3,
        d_model: 16,
        heads: 2,
        head_dim: 8,
        layers: 2,
        d_ffn: 64,
        d_head_hidden: 12,
        dropout: 0.3,
    }
}

fn check(
    name: &str,
    f: impl Fn(&mut Tape<'_, f64>, &[Var]) -> act_core::Result<Var>,
    params: &[Tensor<f64>],
) -> Result<f64, String> {
    let report = grad_check(
        f,
        params,
        GradCheckOptions {
            step: 1e-5,
            floor: 1e-6,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(report.max_relative_error <= 1e-4, || {
        format!(
            "{name}: relative error {} at {:?}",
            report.max_relative_error, report.worst
        )
    })?;
    Ok(report.max_relative_error)
}

fn project(tape: &mut Tape<'_, f64>, out: Var, seed: u64) -> act_core::Result<Var> {
    let w = tape.constant(random(tape.value(out).shape(), seed, 1.0));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn gradient_correctness() -> Outcome {
    let config = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params: Vec<Tensor<f64>> = ActParams::<f64>::init(&config, 3)
        .map_err(|e| e.to_string())?
        .into_tensors()
        .into_iter()
        .map(|t| {
            let noise: Vec<f64> = (0..t.len()).map(|_| rng.random_range(-0.3..0.3)).collect();
            Tensor::from_fn(t.shape(), |i| t.data()[i] + noise[i])
        })
        .collect();
    let (a, b) = (random(&[5, 8], 10, 1.0), random(&[3, 8], 11, 1.0));
    let model_err = check(
        "model",
        |tape, vars| {
            let pv = ParamVars::from_vars(&config, vars)?;
            let clips = [Clip::from_tensor(&a), Clip::from_tensor(&b).with_start(1)];
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let out = forward_on_tape(tape, &pv, &config, &clips, Some(&mut rng))?;
            tape.smoothed_cross_entropy(out.logits, &[2, 0], 0.1)
        },
        &params,
    )?;

    let mut worst: f64 = 0.0;
    for seed in 0..4u64 {
        let (m, k, n) = (2 + seed as usize, 3 + (seed as usize % 3), 4);
        let r = |shape: &[usize], s: u64| random(shape, seed * 100 + s, 1.0);
        let cases: Vec<(&str, Vec<Tensor<f64>>)> = vec![
            ("matmul", vec![r(&[m, k], 1), r(&[k, n], 2)]),
            ("matmul_nt", vec![r(&[m, k], 3), r(&[n, k], 4)]),
            ("linear", vec![r(&[m, k], 5), r(&[k, n], 6), r(&[n], 7)]),
            ("elementwise", vec![r(&[m, n], 8), r(&[m, n], 9), r(&[n], 10)]),
            ("softmax", vec![r(&[m, n], 11).map(|x| 3.0 * x)]),
            ("layer_norm", vec![r(&[m, n], 12), r(&[n], 13), r(&[n], 14)]),
            ("gelu", vec![r(&[m, n], 15).map(|x| 4.0 * x)]),
            ("dropout", vec![r(&[m, n], 16)]),
            ("slicing", vec![r(&[m, n], 17), r(&[m, 3], 18)]),
            ("cross_entropy", vec![r(&[m, n], 19).map(|x| 2.0 * x)]),
        ];
        for (name, params) in cases {
            let err = check(
                name,
                |t, v| {
                    let y = match name {
                        "matmul" => t.matmul(v[0], v[1])?,
                        "matmul_nt" => t.matmul_nt(v[0], v[1])?,
                        "linear" => t.linear(v[0], v[1], v[2])?,
                        "elementwise" => {
                            let s = t.add(v[0], v[1])?;
                            let p = t.mul(s, v[1])?;
                            let q = t.add_row(p, v[2])?;
                            t.scale(q, 0.7)
                        }
                        "softmax" => t.softmax(v[0]),
                        "layer_norm" => t.layer_norm(v[0], v[1], v[2], 1e-6)?,
                        "gelu" => t.gelu(v[0]),
                        "dropout" => {
                            let mut rng = ChaCha8Rng::seed_from_u64(seed);
                            t.dropout(v[0], 0.3, &mut rng, true)?
                        }
                        "slicing" => {
                            let top = t.block(v[0], 1, m - 1, 0, n)?;
                            let left = t.block(v[1], 0, m - 1, 1, 2)?;
                            let joined = t.concat_cols(&[top, left])?;
                            let stacked = t.concat_rows(&[joined, joined])?;
                            t.gather_rows(stacked, &[0, 0, m - 2])?
                        }
                        _ => {
                            let labels: Vec<usize> = (0..m).map(|i| i % n).collect();
                            return t.smoothed_cross_entropy(v[0], &labels, 0.1);
                        }
                    };
                    project(t, y, seed)
                },
                &params,
            )?;
            worst = worst.max(err);
        }
    }
    Ok(format!(
        "model max rel err {model_err:.2e}, ops max rel err {worst:.2e}"
    ))
}

fn invariants() -> Outcome {
    let micro = ActParams::<f64>::init(&ModelConfig::preset(Preset::Micro), 1).map_err(|e| e.to_string())?;
    for (i, len) in [1usize, 7, 30].into_iter().enumerate() {
        let maps = attention_maps(&micro, &random(&[len, 52], i as u64, 2.0)).map_err(|e| e.to_string())?;
        for l in 0..maps.layers() {
            for h in 0..maps.heads() {
                let a = maps.get(l, h);
                for r in 0..a.rows() {
                    let s: f64 = a.row(r).iter().sum();
                    ensure((s - 1.0).abs() <= 1e-6, || format!("attention row sums to {s}"))?;
                }
            }
        }
    }

    let seqs: Vec<Tensor<f64>> = (0..6).map(|i| random(&[10 + 3 * i, 52], 40 + i as u64, 1.0)).collect();
    let refs: Vec<&Tensor<f64>> = seqs.iter().collect();
    let single = logits_for(&micro, &refs, None).map_err(|e| e.to_string())?;
    let ens = ensemble_logits(&[&micro, &micro, &micro], &refs, None).map_err(|e| e.to_string())?;
    ensure(single.max_abs_diff(&ens) <= 1e-6, || "ensemble logits differ".into())?;
    ensure(
        (0..single.rows()).all(|r| argmax(single.row(r)) == argmax(ens.row(r))),
        || "ensemble argmax differs".into(),
    )?;

    let ds = synth_generate(&SynthConfig {
        classes: 4,
        train_per_class: 3,
        test_per_class: 5,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let model =
        ActParams::<f64>::init(&ModelConfig::preset_with(Preset::Micro, 52, 4), 2).map_err(|e| e.to_string())?;
    let test = ds.split(Split::Test);
    let plain = evaluate(&model, &test, 4, None).map_err(|e| e.to_string())?;
    for from in [DropFrom::Head, DropFrom::Tail] {
        let curve = frame_drop_sweep(&model, &test, 4, from, Alignment::Original).map_err(|e| e.to_string())?;
        ensure(curve[0].balanced_accuracy == plain.balanced_accuracy, || {
            "sweep at full length differs".into()
        })?;
    }

    let cfg = TrainConfig::default();
    let peak = lr_schedule(1000, 2500, &cfg, 64);
    let rising = 64f64.powf(-0.5) * 1000.0 * 1000f64.powf(-1.5);
    let decaying = 64f64.powf(-0.5) * 1000f64.powf(-0.5);
    ensure(
        (peak - rising).abs() <= 1e-12 && (peak - decaying).abs() <= 1e-12,
        || format!("schedule peak {peak} vs {rising} / {decaying}"),
    )?;

    for c in [2usize, 5, 20] {
        let loss =
            label_smoothed_ce(&Tensor::<f64>::full(&[3, c], -1.3), &[0, 1, c - 1], 0.1).map_err(|e| e.to_string())?;
        ensure((loss - (c as f64).ln()).abs() <= 1e-9, || {
            format!("uniform CE {loss} for C={c}")
        })?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_dataset(&ds, dir.path()).map_err(|e| e.to_string())?;
    let back = load_dataset(dir.path()).map_err(|e| e.to_string())?;
    ensure(back == ds, || "dataset round trip changed the data".into())?;
    Ok("attention rows, ensemble identity, sweep, schedule peak, uniform CE, round trip".into())
}

/// Epoch budget of the desk-scale run; the criterion allows up to 50.
const DESK_EPOCHS: usize = 30;
const DESK_BATCH: usize = 32;

fn desk_scale_learning() -> Outcome {
    let ds = synth_generate(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: DESK_EPOCHS,
        batch_size: DESK_BATCH,
        ..TrainConfig::default()
    };
    let labels: Vec<usize> = ds.split(Split::Train).iter().map(|s| s.label).collect();
    let folds =
        stratified_folds(&labels, &ds.class_names, cfg.folds, cfg.val_fraction, cfg.seed).map_err(|e| e.to_string())?;
    let model = ModelConfig::preset(Preset::Micro);

    // first ten steps on one fixed batch: no dropout, no augmentation
    let train = ds.split(Split::Train);
    let batch: Vec<Example<f64>> = folds[0].train[..DESK_BATCH]
        .iter()
        .map(|&i| Example {
            features: train[i].features.cast(),
            label: train[i].label,
        })
        .collect();
    let mut params = ActParams::<f64>::init(&model, 0).map_err(|e| e.to_string())?;
    let mut state = OptimizerState::new(&params);
    let (steps, _) = steps_per_epoch(folds[0].train.len(), &cfg);
    let mut losses = Vec::new();
    for step in 1..=10 {
        let lr = lr_schedule(step, steps * cfg.epochs, &cfg, model.d_model);
        losses.push(train_step(&mut params, &mut state, &batch, lr, &cfg, None).map_err(|e| e.to_string())?);
    }
    ensure(losses.windows(2).all(|w| w[1] < w[0]), || {
        format!("loss not strictly decreasing: {losses:?}")
    })?;

    let start = Instant::now();
    let outcome = train_one::<f32>(&model, &ds, &folds, 0, &cfg).map_err(|e| e.to_string())?;
    let metrics =
        evaluate(&outcome.params, &ds.split(Split::Test), ds.num_classes(), None).map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();
    let detail = format!(
        "test balanced accuracy {:.4} after {DESK_EPOCHS} epochs (best epoch {}) in {seconds:.0} s; first-step losses {:.4} -> {:.4}",
        metrics.balanced_accuracy, outcome.best_epoch, losses[0], losses[9]
    );
    ensure(metrics.balanced_accuracy >= 0.95, || detail.clone())?;
    ensure(seconds <= 900.0, || detail.clone())?;
    Ok(detail)
}

fn benchmark_protocol() -> Outcome {
    let defaults = BenchConfig::default();
    ensure(
        (defaults.warmup_runs, defaults.timed_runs, defaults.threads) == (10, 100, 8),
        || format!("defaults {defaults:?}"),
    )?;
    let params = ActParams::<f32>::init(&ModelConfig::preset(Preset::Micro), 0).map_err(|e| e.to_string())?;
    let before = params.checksum();
    let report = benchmark(&params, "micro", &defaults).map_err(|e| e.to_string())?;
    ensure(params.checksum() == before, || "parameters changed".into())?;
    ensure(
        report.warmup_runs == 10 && report.timed_runs == 100 && report.latencies_ms.len() == 100,
        || format!("report counts {} / {}", report.warmup_runs, report.timed_runs),
    )?;
    ensure(report.threads_requested == 8 && report.threads == 8, || {
        format!("threads {}", report.threads)
    })?;

    let reports = sweep(&Preset::ALL, 52, 20, &defaults).map_err(|e| e.to_string())?;
    let means: Vec<f64> = reports.iter().map(|r| r.stats.mean).collect();
    ensure(means.windows(2).all(|w| w[1] >= w[0]), || {
        format!("mean latencies not monotone: {means:?}")
    })?;
    let shown: Vec<String> = reports
        .iter()
        .map(|r| format!("{}={:.3}ms", r.model, r.stats.mean))
        .collect();
    Ok(format!(
        "10 warmups, 100 runs, 8 threads, checksum unchanged; {}",
        shown.join(" ")
    ))
}

/// Optional: full recipe, ten folds, on an exported public dataset.
fn headline() -> Option<Outcome> {
    let dir = std::env::var_os("ACT_HEADLINE_DATA")?;
    Some((|| {
        let ds = load_dataset(&dir).map_err(|e| e.to_string())?;
        let cfg = TrainConfig::default();
        let labels: Vec<usize> = ds.split(Split::Train).iter().map(|s| s.label).collect();
        let folds = stratified_folds(&labels, &ds.class_names, cfg.folds, cfg.val_fraction, cfg.seed)
            .map_err(|e| e.to_string())?;
        let model = ModelConfig::preset_with(Preset::Micro, ds.features, ds.num_classes());
        let mut accuracy = Vec::new();
        for k in 0..cfg.folds {
            let out = train_one::<f32>(&model, &ds, &folds, k, &cfg).map_err(|e| e.to_string())?;
            accuracy.push(
                evaluate(&out.params, &ds.split(Split::Test), ds.num_classes(), None)
                    .map_err(|e| e.to_string())?
                    .accuracy,
            );
        }
        let summary = Summary::of(&accuracy).map_err(|e| e.to_string())?;
        let detail = format!(
            "micro accuracy {summary} over {} folds (ballpark 88 to 92)",
            summary.count
        );
        ensure((0.88..=0.92).contains(&summary.mean), || detail.clone())?;
        Ok(detail)
    })())
}

fn run(name: &str, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS {name} ({secs:.1} s): {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {name} ({secs:.1} s): {detail}");
            false
        }
    }
}

fn main() -> ExitCode {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 5] = [
        ("parameter-counts", parameter_counts),
        ("gradient-correctness", gradient_correctness),
        ("invariant-suite", invariants),
        ("benchmark-protocol", benchmark_protocol),
        ("desk-scale-learning", desk_scale_learning),
    ];
    let mut ok = true;
    for (name, f) in criteria {
        if filter.as_deref().is_none_or(|f| name.contains(f)) {
            ok &= run(name, f);
        }
    }
    match headline() {
        Some(Ok(detail)) => println!("PASS headline-accuracy (optional): {detail}"),
        Some(Err(detail)) => println!("FAIL headline-accuracy (optional, not counted): {detail}"),
        None => println!("SKIP headline-accuracy (optional): set ACT_HEADLINE_DATA to an exported dataset directory"),
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
