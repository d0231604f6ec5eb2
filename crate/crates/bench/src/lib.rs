//! Latency measurement: untimed warm-up passes, then a fixed number of timed
//! forward passes on a dedicated thread pool.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use act_core::model::forward_batch;
use act_core::{ActParams, Error, ModelConfig, Preset, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub warmup_runs: usize,
    pub timed_runs: usize,
    pub threads: usize,
    pub batch_size: usize,
    pub sequence_length: usize,
    /// Seed of the synthetic input batch.
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup_runs: 10,
            timed_runs: 100,
            threads: 8,
            batch_size: 1,
            sequence_length: 30,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_runs == 0
            || self.timed_runs == 0
            || self.threads == 0
            || self.batch_size == 0
            || self.sequence_length == 0
        {
            return Err(Error::Config("benchmark counts must all be positive".into()));
        }
        Ok(())
    }
}

/// Summary of a latency series, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

/// Percentile by linear interpolation between closest ranks.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl LatencyStats {
    pub fn from_series(series: &[f64]) -> Result<Self> {
        if series.is_empty() || series.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("latency series must be non-empty and finite".into()));
        }
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let std = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = series.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean,
            std,
            median: percentile(&sorted, 0.5),
            p95: percentile(&sorted, 0.95),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub param_count: usize,
    pub warmup_runs: usize,
    pub timed_runs: usize,
    pub threads_requested: usize,
    /// Threads of the pool that actually ran the passes.
    pub threads: usize,
    pub batch_size: usize,
    pub sequence_length: usize,
    pub host: String,
    pub stats: LatencyStats,
    /// One entry per timed pass, in run order.
    pub latencies_ms: Vec<f64>,
}

impl BenchReport {
    /// `key: value` summary, one field per line.
    pub fn to_text(&self) -> String {
        let s = &self.stats;
        let mut out = String::new();
        for (k, v) in [
            ("model", self.model.clone()),
            ("param_count", self.param_count.to_string()),
            ("warmup_runs", self.warmup_runs.to_string()),
            ("timed_runs", self.timed_runs.to_string()),
            ("threads_requested", self.threads_requested.to_string()),
            ("threads", self.threads.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("sequence_length", self.sequence_length.to_string()),
            ("host", self.host.clone()),
            ("mean_ms", format!("{:.6}", s.mean)),
            ("std_ms", format!("{:.6}", s.std)),
            ("median_ms", format!("{:.6}", s.median)),
            ("p95_ms", format!("{:.6}", s.p95)),
            ("min_ms", format!("{:.6}", s.min)),
            ("max_ms", format!("{:.6}", s.max)),
        ] {
            let _ = writeln!(out, "{k}: {v}");
        }
        out
    }

    /// Writes the raw series, one latency in milliseconds per line.
    pub fn write_series(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text: String = self.latencies_ms.iter().map(|v| format!("{v}\n")).collect();
        fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

pub fn host_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{} ({cpus} logical cpus)",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Fixed-seed input batch `[batch, length, features]` with values in [-1, 1).
pub fn synthetic_input(config: &ModelConfig, bench: &BenchConfig) -> Result<Tensor<f32>> {
    if bench.sequence_length > config.max_frames {
        return Err(Error::Length {
            len: bench.sequence_length,
            max: config.max_frames,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(bench.seed);
    Ok(Tensor::from_fn(
        &[bench.batch_size, bench.sequence_length, config.features],
        |_| rng.random_range(-1.0..1.0),
    ))
}

fn build_pool(threads: usize) -> Option<rayon::ThreadPool> {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => Some(pool),
        Err(e) => {
            log::warn!("cannot build a {threads}-thread pool ({e}); using the global pool");
            None
        }
    }
}

/// Times full logits-producing forward passes of `params`.
pub fn benchmark(params: &ActParams<f32>, label: &str, bench: &BenchConfig) -> Result<BenchReport> {
    bench.validate()?;
    let input = synthetic_input(&params.config, bench)?;
    let before = params.checksum();
    let run = || -> Result<(usize, Vec<f64>)> {
        for _ in 0..bench.warmup_runs {
            forward_batch(params, &input, None, false)?;
        }
        let mut series = Vec::with_capacity(bench.timed_runs);
        for _ in 0..bench.timed_runs {
            let start = Instant::now();
            let out = forward_batch(params, &input, None, false)?;
            series.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(out);
        }
        Ok((rayon::current_num_threads(), series))
    };
    let (threads, series) = match build_pool(bench.threads) {
        Some(pool) => pool.install(run)?,
        None => run()?,
    };
    if params.checksum() != before {
        return Err(Error::Parameter("parameters changed during benchmarking".into()));
    }
    Ok(BenchReport {
        model: label.to_string(),
        param_count: params.scalar_count(),
        warmup_runs: bench.warmup_runs,
        timed_runs: series.len(),
        threads_requested: bench.threads,
        threads,
        batch_size: bench.batch_size,
        sequence_length: bench.sequence_length,
        host: host_descriptor(),
        stats: LatencyStats::from_series(&series)?,
        latencies_ms: series,
    })
}

/// One report per preset, all on the same input seed.
pub fn sweep(presets: &[Preset], features: usize, num_classes: usize, bench: &BenchConfig) -> Result<Vec<BenchReport>> {
    presets
        .iter()
        .map(|&p| {
            let config = ModelConfig::preset_with(p, features, num_classes);
            let params = ActParams::<f32>::init(&config, bench.seed)?;
            benchmark(&params, p.name(), bench)
        })
        .collect()
}
