use std::fs;
use std::path::PathBuf;

use act_core::data::{save_dataset, synth_generate, SynthConfig};
use act_core::{Error, Result, Split};
use clap::Args;

use crate::write_manifest;

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory for the dataset.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 20)]
    pub test_per_class: usize,
    /// Features per frame (x, y, vx, vy per joint).
    #[arg(long, default_value_t = 52)]
    pub features: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

pub(crate) fn run(args: &SynthArgs) -> Result<()> {
    let occupied = fs::read_dir(&args.out).is_ok_and(|mut d| d.next().is_some());
    if occupied && !args.force {
        return Err(Error::Parameter(format!(
            "output directory {} is not empty; pass --force to overwrite",
            args.out.display()
        )));
    }
    let config = SynthConfig {
        classes: args.classes,
        train_per_class: args.train_per_class,
        test_per_class: args.test_per_class,
        features: args.features,
        seed: args.seed,
    };
    let dataset = synth_generate(&config)?;
    save_dataset(&dataset, &args.out)?;
    write_manifest(
        &args.out,
        "synth",
        serde_json::json!({
            "classes": config.classes,
            "train_per_class": config.train_per_class,
            "test_per_class": config.test_per_class,
            "features": config.features,
            "seed": config.seed,
        }),
    )?;
    println!("dataset: {}", args.out.display());
    println!("detector: {}", dataset.detector);
    println!("features: {}", dataset.features);
    println!("classes: {}", dataset.num_classes());
    println!("train_samples: {}", dataset.split(Split::Train).len());
    println!("test_samples: {}", dataset.split(Split::Test).len());
    Ok(())
}
