//! The `act` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use act_core::{Error, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

mod bench;
mod eval;
mod introspect;
mod synth;
mod train;

pub use bench::BenchArgs;
pub use eval::EvalArgs;
pub use introspect::IntrospectArgs;
pub use synth::SynthArgs;
pub use train::{FoldSelection, TrainArgs};

/// Name of the file recording the resolved configuration of a run.
pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Parser)]
#[command(
    name = "act",
    version,
    about = "Pose-sequence action classification with a transformer encoder"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pose dataset.
    Synth(SynthArgs),
    /// Train one fold or every fold of the cross-validation protocol.
    #[command(after_help = train::defaults_help())]
    Train(TrainArgs),
    /// Evaluate one model or an ensemble on the test split.
    Eval(EvalArgs),
    /// Export attention maps, frame scores, positional similarity and frame-drop curves.
    Introspect(IntrospectArgs),
    /// Measure forward-pass latency.
    Bench(BenchArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Introspect(a) => introspect::run(&a),
        Command::Bench(a) => bench::run(&a),
    }
}

/// One-line failure report, e.g. `error[config]: ...`.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("error[{}]: {msg}", e.category())
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    write_text(path, &(text + "\n"))
}

/// Writes the run manifest: the command name plus its resolved settings.
pub(crate) fn write_manifest(dir: &Path, command: &str, settings: serde_json::Value) -> Result<PathBuf> {
    let path = dir.join(RUN_MANIFEST);
    let manifest = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "settings": settings,
    });
    write_json(&path, &manifest)?;
    Ok(path)
}
