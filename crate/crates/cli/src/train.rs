use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use act_core::data::{load_dataset, stratified_folds, Dataset, Fold};
use act_core::train::{evaluate, train_with_progress, EpochRecord, Summary};
use act_core::{Checkpoint, Error, Metrics, ModelConfig, Preset, Result, Split, TrainConfig};
use clap::Args;
use serde::Serialize;

use crate::{create_dir, write_json, write_manifest, write_text};

/// `--fold` value: one fold index or every fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldSelection {
    One(usize),
    All,
}

impl FromStr for FoldSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(FoldSelection::All);
        }
        s.parse()
            .map(FoldSelection::One)
            .map_err(|_| Error::Parameter(format!("invalid fold {s:?}; expected an index or \"all\"")))
    }
}

impl fmt::Display for FoldSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FoldSelection::One(k) => write!(f, "{k}"),
            FoldSelection::All => f.write_str("all"),
        }
    }
}

/// Help epilogue listing the built-in training recipe.
pub(crate) fn defaults_help() -> String {
    let mut text = String::from("Training defaults (override with --config FILE, flags override the file):\n");
    for line in TrainConfig::default().to_toml().lines() {
        text.push_str("  ");
        text.push_str(line);
        text.push('\n');
    }
    text
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset directory (POSEPACK v1).
    #[arg(long)]
    pub data: PathBuf,
    /// Model size: micro, small, medium or large.
    #[arg(long, default_value_t = Preset::Micro)]
    pub preset: Preset,
    /// Fold index, or "all" to train every fold.
    #[arg(long, default_value_t = FoldSelection::One(0))]
    pub fold: FoldSelection,
    /// Number of cross-validation folds [default: 10].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Flat `key = value` file overriding training defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for checkpoints, histories and reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training epochs [default: 350].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Sequences per optimizer step [default: 512].
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl TrainArgs {
    /// Defaults, then the config file, then explicit flags.
    pub fn resolve_config(&self) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                TrainConfig::from_toml(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                    other => other,
                })?
            }
            None => TrainConfig::default(),
        };
        if let Some(v) = self.folds {
            config.folds = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize)]
struct FoldReport {
    fold: usize,
    best_epoch: usize,
    best_val_balanced_accuracy: f64,
    test: Metrics,
}

pub(crate) fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold-{fold:02}"))
}

fn train_fold(
    model: &ModelConfig,
    dataset: &Dataset,
    folds: &[Fold],
    fold: usize,
    config: &TrainConfig,
    out: &Path,
) -> Result<FoldReport> {
    let dir = fold_dir(out, fold);
    create_dir(&dir)?;
    let mut history = String::new();
    let outcome = train_with_progress::<f32>(model, dataset, folds, fold, config, |r: &EpochRecord| {
        history.push_str(&serde_json::to_string(r).expect("record serializes"));
        history.push('\n');
    })?;
    write_text(&dir.join("history.jsonl"), &history)?;
    Checkpoint::new(&outcome.params, dataset.class_names.clone(), config.seed).save(dir.join("model.ckpt"))?;

    let test = dataset.split(Split::Test);
    let metrics = evaluate(&outcome.params, &test, dataset.num_classes(), None)?;
    let report = FoldReport {
        fold,
        best_epoch: outcome.best_epoch,
        best_val_balanced_accuracy: outcome.history[outcome.best_epoch - 1].val_balanced_accuracy,
        test: metrics,
    };
    write_json(
        &dir.join("metrics.json"),
        &serde_json::json!({ "report": &report, "seeds": outcome.seeds }),
    )?;
    println!(
        "fold {fold}: best epoch {} test accuracy {:.4} balanced accuracy {:.4}",
        report.best_epoch, report.test.accuracy, report.test.balanced_accuracy
    );
    Ok(report)
}

pub(crate) fn run(args: &TrainArgs) -> Result<()> {
    let config = args.resolve_config()?;
    let dataset = load_dataset(&args.data)?;
    let model = ModelConfig {
        dropout: config.dropout,
        ..ModelConfig::preset_with(args.preset, dataset.features, dataset.num_classes())
    };
    model.validate()?;
    let selected: Vec<usize> = match args.fold {
        FoldSelection::All => (0..config.folds).collect(),
        FoldSelection::One(k) if k < config.folds => vec![k],
        FoldSelection::One(k) => {
            return Err(Error::Parameter(format!(
                "fold {k} out of range; valid folds are 0..={}",
                config.folds - 1
            )))
        }
    };
    let labels: Vec<usize> = dataset.split(Split::Train).iter().map(|s| s.label).collect();
    let folds = stratified_folds(
        &labels,
        &dataset.class_names,
        config.folds,
        config.val_fraction,
        config.seed,
    )?;

    create_dir(&args.out)?;
    write_manifest(
        &args.out,
        "train",
        serde_json::json!({
            "data": args.data,
            "preset": args.preset,
            "folds_trained": selected,
            "model": model,
            "train": config,
        }),
    )?;
    let reports = selected
        .iter()
        .map(|&k| train_fold(&model, &dataset, &folds, k, &config, &args.out))
        .collect::<Result<Vec<_>>>()?;

    if args.fold == FoldSelection::All {
        let acc: Vec<f64> = reports.iter().map(|r| r.test.accuracy).collect();
        let bal: Vec<f64> = reports.iter().map(|r| r.test.balanced_accuracy).collect();
        let (acc, bal) = (Summary::of(&acc)?, Summary::of(&bal)?);
        write_json(
            &args.out.join("summary.json"),
            &serde_json::json!({
                "folds": reports.len(),
                "accuracy": acc,
                "balanced_accuracy": bal,
                "per_fold": reports,
            }),
        )?;
        let text = format!("models: {}\naccuracy: {acc}\nbalanced_accuracy: {bal}\n", reports.len());
        write_text(&args.out.join("summary.txt"), &text)?;
        print!("{text}");
    }
    Ok(())
}
