//! Batch commands behind the `gnr` binary. Each `cmd_*` function is a
//! complete entry point; the binary only parses arguments and maps errors to
//! exit codes.

mod eval;
mod explore;
mod toy;
mod train;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use gnr_core::data::{Domain, ImageTensor};
use gnr_formats::RunConfig;
use image::{Rgb, RgbImage};

pub use eval::{cmd_eval, EvalArgs, EvalOutput, METRICS_FILE, SUMMARY_FILE};
pub use explore::{cmd_sefa, cmd_translate, cmd_video, SefaArgs, TranslateArgs, VideoArgs, DIRECTIONS_FILE, EDITS_FILE};
pub use toy::{cmd_make_toy_data, ToyArgs};
pub use train::{cmd_train, TrainArgs, TrainResult, CONFIG_ECHO, MANIFEST};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

pub const CODE_VERSION: &str = concat!("gnr ", env!("CARGO_PKG_VERSION"), " (", env!("GNR_BUILD_REV"), ")");

/// A command failure, split by whether the inputs were rejected before any
/// work started or something broke while running.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        };
        // One line, whatever the underlying error looked like.
        f.write_str(&msg.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<gnr_core::Error> for CliError {
    fn from(e: gnr_core::Error) -> Self {
        match e {
            gnr_core::Error::InvalidArgument(_) | gnr_core::Error::Validation(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Translation direction; `xy` maps domain A images into domain B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Direction {
    #[default]
    Xy,
    Yx,
}

impl Direction {
    pub fn source(self) -> Domain {
        match self {
            Direction::Xy => Domain::X,
            Direction::Yx => Domain::Y,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Direction::Xy => "xy",
            Direction::Yx => "yx",
        }
    }
}

pub fn load_run_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: cannot read config: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// `<output_dir>/<run_name>`, or a timestamped name when the config leaves
/// `run_name` empty.
pub fn run_dir(config: &RunConfig) -> PathBuf {
    let name = if config.run_name.is_empty() {
        chrono::Local::now().format("%Y%m%d-%H%M%S").to_string()
    } else {
        config.run_name.clone()
    };
    config.output_dir.join(name)
}

pub(crate) fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub(crate) fn save_image(img: &RgbImage, path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    img.save(path).map_err(|e| io_err(path, e))
}

pub(crate) fn require_exists(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{what} not found: {}", path.display())))
    }
}

/// Tiles equally sized images row by row.
pub(crate) fn tile(rows: &[Vec<ImageTensor>]) -> RgbImage {
    let size = rows.first().and_then(|r| r.first()).map_or(0, ImageTensor::size);
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut grid = RgbImage::from_pixel((cols * size) as u32, (rows.len() * size) as u32, Rgb([0, 0, 0]));
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            image::imageops::replace(&mut grid, &img.to_rgb8(), (c * size) as i64, (r * size) as i64);
        }
    }
    grid
}
