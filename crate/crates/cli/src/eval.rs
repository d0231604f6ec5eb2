use std::fmt::Write as _;
use std::path::PathBuf;

use act_core::data::{load_dataset, Dataset};
use act_core::infer::{ensemble_logits, Alignment, DropFrom, Truncation};
use act_core::train::argmax;
use act_core::{Checkpoint, Error, Metrics, Result, Split, Tensor};
use clap::Args;

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Dataset directory (POSEPACK v1).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Further ensemble members; their logits are averaged with --model.
    #[arg(long, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Keep at most this many frames per sequence.
    #[arg(long)]
    pub max_frames: Option<usize>,
    /// Which end loses frames under --max-frames: head or tail.
    #[arg(long, default_value_t = DropFrom::Tail)]
    pub drop_from: DropFrom,
    /// Positions of frames kept after a head drop: original or reindex.
    #[arg(long, default_value = "original")]
    pub alignment: Alignment,
    /// Split to evaluate: train or test.
    #[arg(long, default_value_t = Split::Test)]
    pub split: Split,
}

/// Loads every checkpoint and checks it against the dataset.
pub(crate) fn load_members(paths: &[PathBuf], dataset: &Dataset) -> Result<Vec<Checkpoint>> {
    if paths.is_empty() {
        return Err(Error::Parameter("no model given; pass --model or --models".into()));
    }
    paths
        .iter()
        .map(|p| {
            let ckpt = Checkpoint::load(p)?;
            if ckpt.config().features != dataset.features {
                return Err(Error::Config(format!(
                    "{} expects {} features per frame, dataset has {}",
                    p.display(),
                    ckpt.config().features,
                    dataset.features
                )));
            }
            if ckpt.class_names != dataset.class_names {
                return Err(Error::Config(format!(
                    "{} was trained on different classes than the dataset",
                    p.display()
                )));
            }
            Ok(ckpt)
        })
        .collect()
}

pub(crate) fn format_metrics(metrics: &Metrics, class_names: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "accuracy: {:.6}", metrics.accuracy);
    let _ = writeln!(out, "balanced_accuracy: {:.6}", metrics.balanced_accuracy);
    let _ = writeln!(out, "confusion (rows: true class, columns: predicted class):");
    let width = class_names.iter().map(String::len).max().unwrap_or(0);
    for (name, row) in class_names.iter().zip(&metrics.confusion) {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:4}")).collect();
        let _ = writeln!(out, "  {name:>width$} {}", cells.join(""));
    }
    out
}

/// Metrics of the ensemble of `members` on `split`.
pub fn evaluate_members(
    members: &[Checkpoint],
    dataset: &Dataset,
    split: Split,
    truncation: Option<&Truncation>,
) -> Result<Metrics> {
    let samples = dataset.split(split);
    if samples.is_empty() {
        return Err(Error::Data(format!("dataset has no {split} samples")));
    }
    let params: Vec<_> = members.iter().map(|c| &c.params).collect();
    let features: Vec<&Tensor<f32>> = samples.iter().map(|s| &s.features).collect();
    let logits = ensemble_logits(&params, &features, truncation)?;
    let predictions: Vec<usize> = (0..logits.rows()).map(|r| argmax(logits.row(r))).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Metrics::from_predictions(&labels, &predictions, dataset.num_classes())
}

pub(crate) fn run(args: &EvalArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let paths: Vec<PathBuf> = args.model.iter().chain(&args.models).cloned().collect();
    let members = load_members(&paths, &dataset)?;
    let truncation = args.max_frames.map(|t| Truncation {
        retain: t,
        from: args.drop_from,
        alignment: args.alignment,
    });
    let metrics = evaluate_members(&members, &dataset, args.split, truncation.as_ref())?;
    println!("models: {}", members.len());
    println!("split: {}", args.split);
    println!("samples: {}", dataset.split(args.split).len());
    if let Some(t) = &truncation {
        println!("max_frames: {} (dropped from {})", t.retain, t.from);
    }
    print!("{}", format_metrics(&metrics, &dataset.class_names));
    Ok(())
}
