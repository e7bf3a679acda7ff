use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedx_cli::commands::{cmd_ledger, cmd_ledger_analytic, cmd_run, cmd_sweep, RunOptions};

#[derive(Parser)]
#[command(name = "fedx", version, about = "Federated training with explanation-guided pruning")]
struct Cli {
    /// Suppress progress output; only errors are printed.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parent directory for run output (overrides output_dir in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            out: self.out.clone(),
            seed_override: self.seed_override,
            jobs: self.jobs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one federation and write its artifacts.
    Run(RunArgs),
    /// Run every (method, q) pair of the config's sweep section.
    Sweep(RunArgs),
    /// Print the communication-cost table for completed runs or a
    /// hypothetical fully prunable model.
    Ledger {
        manifests: Vec<PathBuf>,
        #[arg(long, conflicts_with = "manifests")]
        model_mb: Option<f64>,
        #[arg(long, default_value_t = 8)]
        clients: usize,
        #[arg(long, default_value_t = 20)]
        rounds: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        /// Pruning rates for the hypothetical model.
        #[arg(long = "q", value_delimiter = ',')]
        rates: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(&a.config, &a.options()).map(|d| d.display().to_string()),
        Command::Sweep(a) => cmd_sweep(&a.config, &a.options()).map(|d| d.display().to_string()),
        Command::Ledger {
            manifests,
            model_mb,
            clients,
            rounds,
            warmup,
            rates,
        } => match model_mb {
            Some(mb) => cmd_ledger_analytic(*mb, *clients, *rounds, *warmup, rates),
            None if manifests.is_empty() => Err(fedx_cli::CliError::config("ledger", "no manifest given")),
            None => cmd_ledger(manifests),
        }
        .map(|s| s.trim_end().to_string()),
    };
    match result {
        Ok(text) => {
            let is_report = matches!(cli.command, Command::Ledger { .. });
            if is_report || !cli.quiet {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
