//! The outer training loop: CSV log, periodic checkpoints and sample grids.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gnr_formats::TrainConfig;

use super::TrainState;
use crate::data::{DomainDataset, ImageTensor};
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::nets::{Generator, StyleCode};

pub const LOG_FILE: &str = "losses.csv";
pub const FINAL_CHECKPOINT: &str = "final.gnrckpt";
const GRID_ROWS: usize = 4;
const GRID_STYLES: usize = 6;
const GRID_STYLE_SEED: u64 = 0x9e37_79b9;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue from this checkpoint instead of initialising from the seed.
    pub resume: Option<PathBuf>,
    /// Stop after this many iterations even if the config asks for more.
    pub stop_at: Option<u64>,
    /// Print a progress line to stderr every this many iterations.
    pub progress_every: Option<u64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub final_checkpoint: PathBuf,
    /// Reports for the iterations run by this call, in order.
    pub reports: Vec<LossReport>,
    pub state: TrainState,
}

pub fn checkpoint_path(run_dir: &Path, iteration: u64) -> PathBuf {
    run_dir.join("checkpoints").join(format!("iter_{iteration:06}.gnrckpt"))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Rewrites the log keeping only rows up to `iteration`, so a resumed run
/// produces the same file as an uninterrupted one.
fn truncate_log(path: &Path, iteration: u64) -> Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut kept = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let it: u64 = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid(format!("{}: malformed iteration column", path.display())))?;
        if it <= iteration {
            kept.push(rec.iter().map(str::to_string).collect());
        }
    }
    Ok(kept)
}

fn log_row(iteration: u64, r: &LossReport) -> Vec<String> {
    std::iter::once(iteration.to_string())
        .chain(r.values().iter().map(|v| v.to_string()))
        .collect()
}

/// Rows are content sources; the first column is the source, the remaining
/// columns are its translations under each fixed style.
pub fn sample_grid(gen: &Generator, sources: &[ImageTensor], styles: &[StyleCode]) -> Result<RgbImage> {
    let size = gen.config.resolution;
    let cols = styles.len() + 1;
    let mut grid = RgbImage::from_pixel((cols * size) as u32, (sources.len() * size) as u32, Rgb([0, 0, 0]));
    for (row, src) in sources.iter().enumerate() {
        let repeated = vec![src.clone(); styles.len()];
        let outs = gen.translate(&repeated, styles)?;
        for (col, img) in std::iter::once(src).chain(outs.iter()).enumerate() {
            let rgb = img.to_rgb8();
            image::imageops::replace(&mut grid, &rgb, (col * size) as i64, (row * size) as i64);
        }
    }
    Ok(grid)
}

fn grid_inputs(ds: &DomainDataset, seed: u64) -> (Vec<ImageTensor>, Vec<StyleCode>) {
    let sources = ds.images().iter().take(GRID_ROWS).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ GRID_STYLE_SEED);
    let styles = (0..GRID_STYLES).map(|_| StyleCode::sample(&mut rng)).collect();
    (sources, styles)
}

fn write_grids(state: &TrainState, run_dir: &Path, data_x: &DomainDataset, data_y: &DomainDataset) -> Result<()> {
    let dir = run_dir.join("samples");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (tag, gen, ds) in [("xy", &state.gen_xy, data_x), ("yx", &state.gen_yx, data_y)] {
        let (sources, styles) = grid_inputs(ds, state.config.seed);
        let grid = sample_grid(gen, &sources, &styles)?;
        let path = dir.join(format!("{tag}_{:06}.png", state.iteration));
        grid.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}

/// Trains for `config.total_iterations` (or `opts.stop_at`) and writes logs,
/// samples and checkpoints under `run_dir`.
pub fn run_training(
    config: &TrainConfig,
    data_x: &DomainDataset,
    data_y: &DomainDataset,
    run_dir: &Path,
    opts: &RunOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    for ds in [data_x, data_y] {
        if ds.len() < config.batch_size {
            return Err(Error::invalid(format!(
                "{:?} training set has {} images, need at least batch_size = {}",
                ds.domain,
                ds.len(),
                config.batch_size
            )));
        }
        if ds.resolution() != Some(config.resolution) {
            return Err(Error::invalid(format!(
                "{:?} images are {:?} px, config expects {}",
                ds.domain,
                ds.resolution(),
                config.resolution
            )));
        }
    }
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;

    let mut state = match &opts.resume {
        Some(path) => {
            let s = TrainState::load(path)?;
            if &s.config != config {
                return Err(Error::invalid(format!(
                    "{}: checkpoint was trained with a different configuration",
                    path.display()
                )));
            }
            s
        }
        None => TrainState::new(config.clone())?,
    };

    let log_path = run_dir.join(LOG_FILE);
    let kept = if opts.resume.is_some() {
        truncate_log(&log_path, state.iteration)?
    } else {
        Vec::new()
    };
    let mut log = csv::Writer::from_path(&log_path).map_err(|e| csv_err(&log_path, e))?;
    let header: Vec<&str> = std::iter::once("iteration").chain(LossReport::FIELDS).collect();
    log.write_record(&header).map_err(|e| csv_err(&log_path, e))?;
    for row in &kept {
        log.write_record(row).map_err(|e| csv_err(&log_path, e))?;
    }

    let end = opts
        .stop_at
        .map_or(config.total_iterations, |s| s.min(config.total_iterations));
    let mut reports = Vec::new();
    while state.iteration < end {
        let batches = state.sample_batches(data_x, data_y)?;
        let report = state.train_step(&batches)?;
        log.write_record(log_row(state.iteration, &report))
            .map_err(|e| csv_err(&log_path, e))?;
        reports.push(report);
        let it = state.iteration;
        if let Some(every) = opts.progress_every {
            if it % every == 0 {
                eprintln!(
                    "iter {it}: scon {:.4} cyc {:.4} adv_g {:.4} adv_d {:.4} r1 {:.4}",
                    report.scon,
                    report.cyc(),
                    report.adv_g,
                    report.adv_d,
                    report.r1
                );
            }
        }
        if it % config.sample_every == 0 {
            write_grids(&state, run_dir, data_x, data_y)?;
        }
        if it % config.checkpoint_every == 0 {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            state.save(&checkpoint_path(run_dir, it))?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    write_grids(&state, run_dir, data_x, data_y)?;
    let final_checkpoint = run_dir.join("checkpoints").join(FINAL_CHECKPOINT);
    state.save(&final_checkpoint)?;
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        final_checkpoint,
        reports,
        state,
    })
}
