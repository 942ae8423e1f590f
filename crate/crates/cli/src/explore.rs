use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use gnr_core::data::ImageTensor;
use gnr_core::explore::{edit_style, sefa_directions, translate_video, StyleTimeline};
use gnr_core::nets::StyleCode;
use gnr_core::trainer::{sample_grid, Translators};
use gnr_formats::{Interpolation, TimelineFile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{create_dir, io_err, require_exists, save_image, tile, CliError, CliResult, Direction};

#[derive(Debug, Clone, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Source images, one grid row each.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Sampled styles, one grid column each; 0 reconstructs each input with
    /// its own encoded style.
    #[arg(long, default_value_t = 6)]
    pub num_styles: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Direction::Xy)]
    pub direction: Direction,
    #[arg(long, default_value = "translate.png")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VideoArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of frames, read in file-name order.
    #[arg(long)]
    pub frames: PathBuf,
    /// Style keyframes; without one a single sampled style is used throughout.
    #[arg(long)]
    pub timeline: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Direction::Xy)]
    pub direction: Direction,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SefaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value_t = Direction::Xy)]
    pub direction: Direction,
    /// Optional image to edit along each direction.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Edit magnitudes, one grid column each.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-3.0, -1.5, 0.0, 1.5, 3.0])]
    pub magnitudes: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_translators(path: &Path) -> CliResult<Translators> {
    require_exists(path, "checkpoint")?;
    Ok(Translators::load(path)?)
}

fn load_image(path: &Path, size: usize) -> CliResult<ImageTensor> {
    require_exists(path, "input image")?;
    Ok(ImageTensor::load(path, size)?)
}

fn list_frames(dir: &Path) -> CliResult<Vec<PathBuf>> {
    require_exists(dir, "frame directory")?;
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(CliError::validation(format!("no frames in {}", dir.display())));
    }
    Ok(frames)
}

/// Rows are inputs, the first column is the source and column `j + 1` uses
/// sampled style `j` for every row.
pub fn cmd_translate(args: &TranslateArgs) -> CliResult<PathBuf> {
    let t = load_translators(&args.checkpoint)?;
    let gen = t.generator(args.direction.source());
    let inputs = args
        .inputs
        .iter()
        .map(|p| load_image(p, t.config.resolution))
        .collect::<CliResult<Vec<_>>>()?;
    let grid = if args.num_styles == 0 {
        let own = gen.encode_styles(&inputs)?;
        let recon = gen.translate(&inputs, &own)?;
        let rows: Vec<Vec<ImageTensor>> = inputs.into_iter().zip(recon).map(|(a, b)| vec![a, b]).collect();
        tile(&rows)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let styles: Vec<StyleCode> = (0..args.num_styles).map(|_| StyleCode::sample(&mut rng)).collect();
        sample_grid(gen, &inputs, &styles)?
    };
    save_image(&grid, &args.out)?;
    Ok(args.out.clone())
}

/// Writes `frame_NNNNN.png` for every input frame and returns their paths.
pub fn cmd_video(args: &VideoArgs) -> CliResult<Vec<PathBuf>> {
    let t = load_translators(&args.checkpoint)?;
    let frames = list_frames(&args.frames)?
        .iter()
        .map(|p| load_image(p, t.config.resolution))
        .collect::<CliResult<Vec<_>>>()?;
    let timeline = match &args.timeline {
        None => StyleTimeline::new(Vec::new(), Interpolation::Hold)?,
        Some(path) => {
            require_exists(path, "timeline")?;
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let file = TimelineFile::parse(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            StyleTimeline::from_file(&file)?
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let outs = translate_video(t.generator(args.direction.source()), &frames, &timeline, &mut rng)?;
    create_dir(&args.out)?;
    outs.iter()
        .enumerate()
        .map(|(i, img)| {
            let path = args.out.join(format!("frame_{i:05}.png"));
            save_image(&img.to_rgb8(), &path)?;
            Ok(path)
        })
        .collect()
}

pub const DIRECTIONS_FILE: &str = "directions.csv";
pub const EDITS_FILE: &str = "edits.png";

/// Writes the top directions as CSV and, given an input, a grid with one row
/// per direction and one column per edit magnitude.
pub fn cmd_sefa(args: &SefaArgs) -> CliResult<PathBuf> {
    let t = load_translators(&args.checkpoint)?;
    let gen = t.generator(args.direction.source());
    let dirs = sefa_directions(gen, args.top_k)?;
    create_dir(&args.out)?;
    let path = args.out.join(DIRECTIONS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    let mut header = vec!["rank".to_string(), "eigenvalue".to_string()];
    header.extend((0..gnr_formats::config::STYLE_DIM).map(|i| format!("v{i}")));
    header.push("layers".to_string());
    w.write_record(&header).map_err(|e| io_err(&path, e))?;
    for (rank, d) in dirs.iter().enumerate() {
        let mut row = vec![rank.to_string(), d.eigenvalue.to_string()];
        row.extend(d.vector.iter().map(f64::to_string));
        row.push(d.layer_scope.join(";"));
        w.write_record(&row).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    if let Some(input) = &args.input {
        let img = load_image(input, t.config.resolution)?;
        let base = gen.encode_styles(std::slice::from_ref(&img))?.remove(0);
        let mut rows = Vec::with_capacity(dirs.len());
        for d in &dirs {
            let styles: Vec<StyleCode> = args.magnitudes.iter().map(|&m| edit_style(&base, d, m)).collect();
            rows.push(gen.translate(&vec![img.clone(); styles.len()], &styles)?);
        }
        save_image(&tile(&rows), &args.out.join(EDITS_FILE))?;
    }
    Ok(path)
}
