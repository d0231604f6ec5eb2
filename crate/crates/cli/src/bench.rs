use std::path::PathBuf;

use act_bench::{benchmark, sweep, BenchConfig, BenchReport};
use act_core::model::{DEFAULT_CLASSES, DEFAULT_FEATURES};
use act_core::{ActParams, Checkpoint, ModelConfig, Preset, Result};
use clap::Args;

use crate::{create_dir, write_json, write_manifest, write_text};

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Checkpoint to time; without it a freshly initialized --preset model is used.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Model size when no checkpoint is given.
    #[arg(long, default_value_t = Preset::Micro)]
    pub preset: Preset,
    /// Time every preset instead of one model.
    #[arg(long, conflicts_with = "model")]
    pub sweep: bool,
    /// Untimed passes before measuring.
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    /// Timed passes.
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Worker threads for the forward passes.
    #[arg(long, default_value_t = 8)]
    pub threads: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    /// Frames per input sequence.
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
    /// Seed of the synthetic input and of fresh parameters.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the report and raw latency series.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl BenchArgs {
    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            warmup_runs: self.warmup,
            timed_runs: self.runs,
            threads: self.threads,
            batch_size: self.batch_size,
            sequence_length: self.frames,
            seed: self.seed,
        }
    }
}

fn reports(args: &BenchArgs, config: &BenchConfig) -> Result<Vec<BenchReport>> {
    if args.sweep {
        return sweep(&Preset::ALL, DEFAULT_FEATURES, DEFAULT_CLASSES, config);
    }
    let (params, label) = match &args.model {
        Some(path) => (Checkpoint::load(path)?.params, path.display().to_string()),
        None => {
            let model = ModelConfig::preset_with(args.preset, DEFAULT_FEATURES, DEFAULT_CLASSES);
            (ActParams::init(&model, config.seed)?, args.preset.to_string())
        }
    };
    Ok(vec![benchmark(&params, &label, config)?])
}

pub(crate) fn run(args: &BenchArgs) -> Result<()> {
    let config = args.bench_config();
    config.validate()?;
    let reports = reports(args, &config)?;
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            println!();
        }
        print!("{}", r.to_text());
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_manifest(out, "bench", serde_json::to_value(&config).expect("config serializes"))?;
        write_json(&out.join("report.json"), &reports)?;
        let text: Vec<String> = reports.iter().map(BenchReport::to_text).collect();
        write_text(&out.join("report.txt"), &text.join("\n"))?;
        for r in &reports {
            let name = r.model.rsplit(['/', '\\']).next().unwrap_or(&r.model).to_string();
            r.write_series(out.join(format!("latencies-{name}.txt")))?;
        }
    }
    Ok(())
}
