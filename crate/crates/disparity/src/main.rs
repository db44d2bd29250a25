use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use disparity::error::exit;
use disparity::{report, CliError, Mode, Overrides, RayonRunner, RunConfig};

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  2   config (bad or missing config, missing data file, missing seed)
  3   data_model (CSV contents, spec structure)
  4   emulation (eligibility, standard population)
  5   numerics (model fitting)
  6   estimators (positivity, empty groups)
  7   sampling_design
  8   oracle_sim
  9   inference (bootstrap)
  10  io

On failure a JSON error block naming the module is printed on stderr.";

/// Group disparity estimation by target trial emulation.
#[derive(Debug, Parser)]
#[command(version, after_help = EXIT_CODES)]
struct Args {
    /// Run config (JSON). Flags below override its fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Input CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap replicates; 0 disables the bootstrap.
    #[arg(long, value_name = "B")]
    bootstrap: Option<usize>,
    /// Worker threads for the bootstrap; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
}

fn main_inner(args: Args) -> Result<(), CliError> {
    let cfg = RunConfig::from_path(&args.config)?;
    let cfg = Overrides { mode: args.mode, data: args.data, out: args.out, seed: args.seed, bootstrap: args.bootstrap }
        .apply(cfg);
    let runner = RayonRunner::new(args.workers).map_err(|e| CliError::Config(e.to_string()))?;
    let text = report::render(&disparity::run(&cfg, &runner)?)?;
    match &cfg.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
