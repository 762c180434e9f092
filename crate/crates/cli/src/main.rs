use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use setkkl::commands::{cmd_diagnose, cmd_observe, cmd_transform_build};
use setkkl::config::{load_config, resolve, Resolved};
use setkkl::CliError;

#[derive(Parser)]
#[command(name = "setkkl", version, about = "Set-valued KKL observer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: String,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the pair and noise seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the transform atlas and conditioning map.
    TransformBuild(CommonArgs),
    /// Run the set-valued observer and serialize the record.
    Observe(CommonArgs),
    /// Run the toggled diagnostics (cardinality, characterization, ranks).
    Diagnose(CommonArgs),
}

type Action = fn(&Resolved, &std::path::Path, bool) -> Result<(), CliError>;

fn run(command: &Command) -> Result<(), CliError> {
    let (args, action): (&CommonArgs, Action) = match command {
        Command::TransformBuild(a) => (a, cmd_transform_build),
        Command::Observe(a) => (a, cmd_observe),
        Command::Diagnose(a) => (a, cmd_diagnose),
    };
    let config = load_config(&args.config)?;
    let resolved = resolve(config, args.seed)?;
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&resolved.config.out_dir));
    action(&resolved, &out_dir, args.quiet)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("setkkl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
