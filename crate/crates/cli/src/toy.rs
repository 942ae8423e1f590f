use std::path::PathBuf;

use clap::Args;
use gnr_core::data::toy::{write_dataset, ToySpec};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    /// Dataset root to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Images per domain as `X,Y`.
    #[arg(long, value_delimiter = ',', default_values_t = [500, 500])]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Every n-th image goes to the test split.
    #[arg(long, default_value_t = 10)]
    pub test_every: usize,
}

/// Renders both toy domains under `out` and returns the dataset root.
pub fn cmd_make_toy_data(args: &ToyArgs) -> CliResult<PathBuf> {
    let [x, y] = args.counts[..] else {
        return Err(CliError::validation(format!("counts needs two values, got {:?}", args.counts)));
    };
    let spec = ToySpec {
        seed: args.seed,
        counts: (x, y),
        resolution: args.resolution,
        test_every: args.test_every,
    };
    Ok(write_dataset(&args.out, &spec)?)
}
