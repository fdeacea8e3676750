use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use switchsde_cli::{list_models, run, CliError, Command, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "switchsde",
    version,
    about = "Truncated Euler-Maruyama experiments for Markov-switching SDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the published sample sizes and step ranges.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Simulate one path and write it as CSV.
    Simulate(RunArgs),
    /// Strong error against a fine-step reference.
    Convergence(RunArgs),
    /// RMS error against the closed-form Ginzburg-Landau solution.
    ConvergenceExact(RunArgs),
    /// Compare long-run samples at two step sizes.
    Invariant(RunArgs),
    /// Lyapunov exponent and moment trace.
    Stability(RunArgs),
    /// Estimate the constants of the monotonicity conditions.
    CheckAssumptions(RunArgs),
    /// List the built-in models.
    ListModels,
}

fn load(command: Command, args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read '{}': {e}", path.display())))?;
            ExperimentConfig::parse(&text, Some(command), args.paper_scale)?
        }
        None => ExperimentConfig::parse("", Some(command), args.paper_scale)?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::ListModels => {
            print!("{}", list_models());
            return ExitCode::SUCCESS;
        }
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Convergence(a) => (Command::Convergence, a),
        Sub::ConvergenceExact(a) => (Command::ConvergenceExact, a),
        Sub::Invariant(a) => (Command::Invariant, a),
        Sub::Stability(a) => (Command::Stability, a),
        Sub::CheckAssumptions(a) => (Command::CheckAssumptions, a),
    };
    match load(command, &args).and_then(|cfg| run(&cfg)) {
        Ok(report) => {
            for r in &report.records {
                println!("{r}");
            }
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("switchsde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
