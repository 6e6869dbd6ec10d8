use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Run one obstacle, QVI, penalised or sweep experiment from a JSON config.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = impulse_qvi::cli::run(&args.config, args.output.as_deref(), args.quiet);
    ExitCode::from(code as u8)
}
