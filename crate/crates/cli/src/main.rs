//! `redlamp`: train, score and evaluate time-series anomaly detectors built
//! on pseudo-anomaly classification.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Ablation, RunConfig, SNAPSHOT_FILE};

const OUT_ENV: &str = "REDLAMP_OUT";
const DEFAULT_OUT: &str = "redlamp-out";

#[derive(Parser)]
#[command(name = "redlamp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file with `key = value` lines under `[section]` headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Series to read: `ucr:<path>` or `csv:<path>`.
    #[arg(long)]
    data: Option<String>,
    /// Output directory [default: $REDLAMP_OUT, then `out` from the config, then `redlamp-out`].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ablation variant; may be repeated.
    #[arg(long, value_enum)]
    ablate: Vec<Ablation>,
    /// Override any setting, e.g. `--set train.max_epochs=20`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes model.ckpt, train.log and config.snapshot.
    Train(Common),
    /// Score the test part of a series; writes scores.csv, faa.json and scores.svg.
    Score {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to load [default: <out>/model.ckpt].
        #[arg(long)]
        model: Option<PathBuf>,
        /// Smooth the final score with a moving average of half the window.
        #[arg(long)]
        smooth: bool,
    },
    /// Compute range-based metrics for a score trace, or for every row of a manifest.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Score CSV [default: <out>/scores.csv].
        #[arg(long, conflicts_with = "manifest")]
        scores: Option<PathBuf>,
        /// CSV with columns `series,scores`; paths are relative to the manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Append pseudo-anomalous windows to the training windows.
    Contaminate {
        #[command(flatten)]
        common: Common,
        /// Injected windows per 100 training windows.
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Write one instance of every augmentation kind for a training window.
    AugmentPreview {
        #[command(flatten)]
        common: Common,
        /// Training window to augment.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Write per-window embeddings with their split and kind.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to load [default: <out>/model.ckpt].
        #[arg(long)]
        model: Option<PathBuf>,
        /// Replace training windows by their augmented instances.
        #[arg(long)]
        augmented: bool,
    },
}

/// Base config, then `--set`, then dedicated flags. Without `--config`, a
/// snapshot next to `model` serves as the base.
fn resolve(common: &Common, model: Option<&PathBuf>) -> anyhow::Result<(RunConfig, PathBuf)> {
    let base = common.config.clone().or_else(|| {
        model
            .and_then(|m| m.parent())
            .map(|d| d.join(SNAPSHOT_FILE))
            .filter(|p| p.is_file())
    });
    let mut cfg = match base {
        Some(path) => RunConfig::load(&path)?,
        None => RunConfig::default(),
    };
    for s in &common.set {
        cfg.set(s)?;
    }
    if let Some(d) = &common.data {
        cfg.data.source = Some(d.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    for &a in &common.ablate {
        cfg.ablate(a);
    }
    if let Some(m) = model {
        cfg.checkpoint = Some(m.clone());
    }
    let out = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfg.out = Some(out.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(common) => {
            let (cfg, out) = resolve(&common, None)?;
            commands::train(&cfg, &out)
        }
        Command::Score { common, model, smooth } => {
            let (mut cfg, out) = resolve(&common, model.as_ref())?;
            cfg.score.smoothing |= smooth;
            commands::score(&cfg, &out)
        }
        Command::Evaluate {
            common,
            scores,
            manifest,
        } => {
            let (cfg, out) = resolve(&common, None)?;
            commands::evaluate_cmd(&cfg, &out, scores.as_deref(), manifest.as_deref())
        }
        Command::Contaminate { common, ratio } => {
            let (mut cfg, out) = resolve(&common, None)?;
            if let Some(r) = ratio {
                cfg.train.contamination = r;
            }
            commands::contaminate_cmd(&cfg, &out)
        }
        Command::AugmentPreview { common, index } => {
            let (cfg, out) = resolve(&common, None)?;
            commands::augment_preview(&cfg, &out, index)
        }
        Command::ExportEmbeddings {
            common,
            model,
            augmented,
        } => {
            let (cfg, out) = resolve(&common, model.as_ref())?;
            commands::export_embeddings(&cfg, &out, augmented)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
