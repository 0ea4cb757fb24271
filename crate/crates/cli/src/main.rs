use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cwsbie_cli::config::{self, RunConfig};
use cwsbie_cli::error::{CliError, CliResult};
use cwsbie_cli::run::{self, RunOptions};
use cwsbie_cli::validate;

/// Surface-current reconstruction on toroidal winding surfaces.
#[derive(Parser)]
#[command(name = "cwsbie", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fits a target field with a surface current and writes the artifacts.
    Reconstruct(Common),
    /// Computes the kernel current by every route and its leakage study.
    Kernel(Common),
    /// Runs the oracle checks and exits non-zero if any fails.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Flips the sign of the double-layer diagonal to show that the
        /// checks catch a broken operator.
        #[arg(long)]
        force_bug: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Surface grid as NTHETAxNPHI, overriding the config.
    #[arg(long, value_parser = config::parse_grid)]
    grid: Option<(usize, usize)>,
    /// Seed of every randomized estimate.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Common {
    fn options(&self, default_output: Option<PathBuf>) -> CliResult<RunOptions> {
        set_threads(self.threads)?;
        let config = match &self.config {
            Some(path) => config::load(path)?,
            None => RunConfig::default(),
        };
        let output = self.output.clone().or_else(|| config.output.clone()).or(default_output);
        Ok(RunOptions::new(config, output, self.grid, self.seed))
    }
}

fn set_threads(threads: usize) -> CliResult<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(Some("--threads".to_string()), e.to_string()))?;
    }
    let par = match threads {
        1 => faer::Par::Seq,
        0 => faer::Par::rayon(0),
        n => faer::Par::rayon(n),
    };
    faer::set_global_parallelism(par);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Reconstruct(c) => c.options(None).and_then(|o| run::reconstruct(&o)),
        Command::Kernel(c) => c.options(None).and_then(|o| run::kernel(&o)),
        Command::Validate { common, force_bug } => {
            common.options(Some(validate::default_output())).and_then(|o| validate::validate(&o, *force_bug))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
