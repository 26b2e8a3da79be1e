use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavecip::{commands, CliError, RunConfig, RunContext};

/// Permittivity and conductivity reconstruction from boundary traces of a
/// damped 2D wave.
#[derive(Debug, Parser)]
#[command(name = "wavecip", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (INI).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the noise and grad-check seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward solve with the true coefficients; writes trace.csv.
    Forward,
    /// Noisy observations of the true coefficients; writes obs.csv.
    Synthesize,
    /// Conjugate-gradient reconstruction.
    Invert,
    /// Reconstruction with global refinement between CG runs.
    InvertAdaptive,
    /// Adjoint gradient against finite differences.
    GradCheck,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let Some(path) = &cli.config else {
        return Err(CliError::input("--config", "a run configuration is required"));
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
        cfg.gradcheck.seed = seed;
    }
    let ctx = RunContext {
        out: cli.out.clone(),
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Forward => commands::forward(&cfg, &ctx),
        Command::Synthesize => commands::synthesize(&cfg, &ctx),
        Command::Invert => commands::invert(&cfg, &ctx).map(drop),
        Command::InvertAdaptive => commands::invert_adaptive(&cfg, &ctx).map(drop),
        Command::GradCheck => commands::grad_check(&cfg, &ctx).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
