use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use gnr_core::data::{Domain, DomainDataset, Split};
use gnr_core::trainer::{run_training, RunOptions};
use gnr_formats::RunConfig;

use crate::{create_dir, io_err, load_run_config, require_exists, run_dir, CliResult, CODE_VERSION};

/// Canonical copy of the configuration the run used.
pub const CONFIG_ECHO: &str = "config.txt";
pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Run configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Continue from a checkpoint written by an earlier run with the same config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many total iterations.
    #[arg(long)]
    pub stop_at: Option<u64>,
    /// Print losses to stderr every this many iterations.
    #[arg(long)]
    pub progress_every: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub run_dir: PathBuf,
    pub final_checkpoint: PathBuf,
}

pub(crate) fn load_split(root: &Path, domain: Domain, split: Split, resolution: usize) -> CliResult<DomainDataset> {
    let dir = DomainDataset::split_dir(root, domain, split);
    require_exists(&dir, "dataset directory")?;
    Ok(DomainDataset::load(root, domain, split, resolution)?)
}

pub(crate) fn write_manifest(dir: &Path, config: &RunConfig, command: &str) -> CliResult<()> {
    let echo = dir.join(CONFIG_ECHO);
    fs::write(&echo, config.to_text()).map_err(|e| io_err(&echo, e))?;
    let manifest = format!(
        "command = {command}\nconfig_hash = {}\nseed = {}\ncode_version = {CODE_VERSION}\n",
        config.hash(),
        config.train.seed,
    );
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| io_err(&path, e))
}

/// A checkpoint under `<run>/checkpoints/` belongs to `<run>`.
fn run_dir_of_checkpoint(ckpt: &Path) -> Option<PathBuf> {
    let parent = ckpt.parent()?;
    let dir = if parent.file_name()? == "checkpoints" { parent.parent()? } else { parent };
    dir.join(CONFIG_ECHO).exists().then(|| dir.to_path_buf())
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainResult> {
    let config = load_run_config(&args.config)?;
    let res = config.train.resolution;
    let data_x = load_split(&config.data_root, Domain::X, Split::Train, res)?;
    let data_y = load_split(&config.data_root, Domain::Y, Split::Train, res)?;
    if let Some(ckpt) = &args.resume {
        require_exists(ckpt, "checkpoint")?;
    }
    let dir = match &args.resume {
        Some(ckpt) if config.run_name.is_empty() => run_dir_of_checkpoint(ckpt).unwrap_or_else(|| run_dir(&config)),
        _ => run_dir(&config),
    };
    create_dir(&dir)?;
    write_manifest(&dir, &config, "train")?;
    let opts = RunOptions {
        resume: args.resume.clone(),
        stop_at: args.stop_at,
        progress_every: args.progress_every,
    };
    let outcome = run_training(&config.train, &data_x, &data_y, &dir, &opts)?;
    Ok(TrainResult {
        run_dir: outcome.run_dir,
        final_checkpoint: outcome.final_checkpoint,
    })
}
