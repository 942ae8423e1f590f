use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gnr_cli::{
    cmd_eval, cmd_make_toy_data, cmd_sefa, cmd_train, cmd_translate, cmd_video, CliResult, EvalArgs, SefaArgs,
    ToyArgs, TrainArgs, TranslateArgs, VideoArgs,
};

/// Multimodal unpaired image-to-image translation.
#[derive(Debug, Parser)]
#[command(name = "gnr", version = gnr_cli::CODE_VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train both translators from a run configuration.
    Train(TrainArgs),
    /// Translate images under a fixed set of sampled styles into a grid.
    Translate(TranslateArgs),
    /// Translate a directory of frames with a style timeline.
    Video(VideoArgs),
    /// Compute DFID, FID, FID-infinity and pairwise diversity.
    Eval(EvalArgs),
    /// Find style directions by factorising the modulation weights.
    Sefa(SefaArgs),
    /// Render the two-domain procedural dataset.
    MakeToyData(ToyArgs),
}

fn run(cli: Cli) -> CliResult<String> {
    Ok(match cli.command {
        Command::Train(a) => cmd_train(&a)?.final_checkpoint.display().to_string(),
        Command::Translate(a) => cmd_translate(&a)?.display().to_string(),
        Command::Video(a) => a.out.join(format!("{} frames", cmd_video(&a)?.len())).display().to_string(),
        Command::Eval(a) => cmd_eval(&a)?.csv.display().to_string(),
        Command::Sefa(a) => cmd_sefa(&a)?.display().to_string(),
        Command::MakeToyData(a) => cmd_make_toy_data(&a)?.display().to_string(),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
