use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{augment_flip, augment_noise, Dataset, Fold, PoseSample};
use crate::error::{Error, Result};
use crate::infer::{logits_for, Truncation};
use crate::model::{forward_on_tape, register, ActParams, Clip, ModelConfig};
use crate::numerics::{Scalar, Tape, Tensor};

use super::metrics::{argmax, Metrics};
use super::optimizer::{adamw_step, OptimizerState};
use super::schedule::lr_schedule;
use super::TrainConfig;

/// Sequences per tape during gradient computation. Chunks run in parallel
/// and their gradients are summed in chunk order.
pub const GRAD_CHUNK: usize = 16;

/// Per-purpose seeds expanded from one master seed and a fold index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubSeeds {
    pub init: u64,
    pub shuffle: u64,
    pub augment: u64,
    pub dropout: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SubSeeds {
    pub fn derive(seed: u64, fold: usize) -> Self {
        let base = splitmix(seed ^ splitmix(fold as u64));
        Self {
            init: splitmix(base ^ 1),
            shuffle: splitmix(base ^ 2),
            augment: splitmix(base ^ 3),
            dropout: splitmix(base ^ 4),
        }
    }
}

/// One labelled training sequence.
#[derive(Debug, Clone)]
pub struct Example<F> {
    pub features: Tensor<F>,
    pub label: usize,
}

/// Mean label-smoothed loss of `examples` and its gradient for every
/// parameter, in canonical order. `dropout_seed = None` disables dropout.
pub fn batch_gradients<F: Scalar>(
    params: &ActParams<F>,
    examples: &[Example<F>],
    label_smoothing: f64,
    dropout_seed: Option<u64>,
) -> Result<(F, Vec<Tensor<F>>)> {
    if examples.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let total = F::of(examples.len() as f64);
    let parts = examples
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(i, chunk)| -> Result<(F, Vec<Tensor<F>>)> {
            let mut tape = Tape::new();
            let vars = register(params, &mut tape, true);
            let clips: Vec<Clip<'_, F>> = chunk.iter().map(|e| Clip::from_tensor(&e.features)).collect();
            let labels: Vec<usize> = chunk.iter().map(|e| e.label).collect();
            let mut rng = dropout_seed.map(|s| ChaCha8Rng::seed_from_u64(s ^ splitmix(i as u64)));
            let out = forward_on_tape(&mut tape, &vars, &params.config, &clips, rng.as_mut())?;
            let loss = tape.smoothed_cross_entropy(out.logits, &labels, F::of(label_smoothing))?;
            // weight the chunk mean so the chunk sum is the batch mean
            let weight = F::of(chunk.len() as f64) / total;
            let scaled = tape.scale(loss, weight);
            let mut grads = tape.backward(scaled)?;
            let value = tape.value(scaled).data()[0];
            let g = vars
                .vars()
                .into_iter()
                .map(|v| grads.take(v).unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
                .collect();
            Ok((value, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut parts = parts.into_iter();
    let (mut loss, mut grads) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        for (acc, t) in grads.iter_mut().zip(g) {
            for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += *b;
            }
        }
    }
    Ok((loss, grads))
}

/// Gradient computation followed by one optimizer update; returns the batch loss.
pub fn train_step<F: Scalar>(
    params: &mut ActParams<F>,
    state: &mut OptimizerState<F>,
    examples: &[Example<F>],
    lr: f64,
    config: &TrainConfig,
    dropout_seed: Option<u64>,
) -> Result<F> {
    let (loss, grads) = batch_gradients(params, examples, config.label_smoothing, dropout_seed)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss became {loss}")));
    }
    adamw_step(params, &grads, state, lr, config)?;
    Ok(loss)
}

/// Inference-mode metrics over `samples`; argmax ties go to the lowest class.
pub fn evaluate<F: Scalar>(
    params: &ActParams<F>,
    samples: &[&PoseSample],
    num_classes: usize,
    truncation: Option<&Truncation>,
) -> Result<Metrics> {
    if let Some(s) = samples.iter().find(|s| s.width() != params.config.features) {
        return Err(Error::Config(format!(
            "model expects {} features per frame but sample {} has {}",
            params.config.features,
            s.id,
            s.width()
        )));
    }
    if num_classes != params.config.num_classes {
        return Err(Error::Config(format!(
            "model has {} classes, dataset has {num_classes}",
            params.config.num_classes
        )));
    }
    let features: Vec<Tensor<F>> = samples.iter().map(|s| s.features.cast()).collect();
    let refs: Vec<&Tensor<F>> = features.iter().collect();
    let logits = logits_for(params, &refs, truncation)?;
    let predictions: Vec<usize> = (0..logits.rows()).map(|r| argmax(logits.row(r))).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Metrics::from_predictions(&labels, &predictions, num_classes)
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Rate used by the epoch's last step.
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_balanced_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters from the epoch with the best validation balanced accuracy.
    pub params: ActParams<F>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub seeds: SubSeeds,
}

/// Steps per epoch and the effective batch size for `n` training samples.
pub fn steps_per_epoch(n: usize, config: &TrainConfig) -> (usize, usize) {
    let batch = config.batch_size.min(n).max(1);
    (n.div_ceil(batch), batch)
}

/// Trains one model on fold `fold_index` and keeps the best validation checkpoint.
pub fn train_one<F: Scalar>(
    model: &ModelConfig,
    dataset: &Dataset,
    folds: &[Fold],
    fold_index: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    train_with_progress(model, dataset, folds, fold_index, config, |_| {})
}

/// [`train_one`] with a callback after every epoch.
pub fn train_with_progress<F: Scalar>(
    model: &ModelConfig,
    dataset: &Dataset,
    folds: &[Fold],
    fold_index: usize,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    let fold = folds.get(fold_index).ok_or_else(|| {
        Error::Parameter(format!(
            "fold {fold_index} out of range; {} folds available",
            folds.len()
        ))
    })?;
    if model.features != dataset.features {
        return Err(Error::Config(format!(
            "model expects {} features per frame, dataset has {}",
            model.features, dataset.features
        )));
    }
    if model.num_classes != dataset.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, dataset has {}",
            model.num_classes,
            dataset.num_classes()
        )));
    }
    let train_pool = dataset.split(crate::data::Split::Train);
    let pick = |idx: &[usize]| -> Result<Vec<&PoseSample>> {
        idx.iter()
            .map(|&i| {
                train_pool
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("fold index {i} beyond the training split")))
            })
            .collect()
    };
    let train = pick(&fold.train)?;
    let validation = pick(&fold.validation)?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Data("fold has an empty training or validation part".into()));
    }

    let seeds = SubSeeds::derive(config.seed, fold_index);
    let mut model = model.clone();
    model.dropout = config.dropout;
    let mut params = ActParams::<F>::init(&model, seeds.init)?;
    let mut state = OptimizerState::new(&params);
    let (steps, batch) = steps_per_epoch(train.len(), config);
    if batch < config.batch_size {
        log::warn!(
            "batch size {} exceeds the {} training samples; using {batch}",
            config.batch_size,
            train.len()
        );
    }
    let total_steps = steps * config.epochs;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds.shuffle);
    let mut augment_rng = ChaCha8Rng::seed_from_u64(seeds.augment);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seeds.dropout);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ActParams<F>)> = None;
    let mut step = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for idx in order.chunks(batch) {
            step += 1;
            lr = lr_schedule(step, total_steps, config, model.d_model);
            let mut examples = Vec::with_capacity(idx.len());
            for &i in idx {
                let mut features: Tensor<F> = train[i].features.cast();
                augment_flip(&mut features, config.flip_probability, &mut augment_rng);
                augment_noise(&mut features, config.noise_sigma, &mut augment_rng)?;
                examples.push(Example {
                    features,
                    label: train[i].label,
                });
            }
            let seed = rand::Rng::random(&mut dropout_rng);
            let loss = train_step(&mut params, &mut state, &examples, lr, config, Some(seed))?;
            loss_sum += loss.as_f64();
        }
        let metrics = evaluate(&params, &validation, dataset.num_classes(), None)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / steps as f64,
            val_accuracy: metrics.accuracy,
            val_balanced_accuracy: metrics.balanced_accuracy,
        };
        log::info!(
            "fold {fold_index} epoch {epoch}: loss {:.4} val bal-acc {:.4}",
            record.train_loss,
            record.val_balanced_accuracy
        );
        progress(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(b, _, _)| metrics.balanced_accuracy > *b) {
            best = Some((metrics.balanced_accuracy, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
        seeds,
    })
}
