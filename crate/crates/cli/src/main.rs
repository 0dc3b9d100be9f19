use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hpush_cli::{cmd_run, cmd_sweep, cmd_verify, Options};

#[derive(Parser)]
#[command(name = "hpush", version, about = "Heterogeneous push-sum subgradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv, bounds.csv and summary.json.
    Run(Common),
    /// Run the experiment and the full invariant suite; exit 4 on any failure.
    Verify(Common),
    /// Rerun over several horizons with alpha = 1/sqrt(T) and fit the rate.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated horizons, overriding `sweep_horizons` in the config.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<u64>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides HPUSH_OUT_DIR and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the top-level seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Record every N-th step.
    #[arg(long)]
    stride: Option<u64>,
    /// Run even if validation fails; outputs are marked uncertified.
    #[arg(long)]
    allow_uncertified: bool,
}

impl Common {
    fn options(self, horizons: Option<Vec<u64>>) -> Options {
        Options {
            config: self.config,
            out: self.out,
            seed: self.seed,
            stride: self.stride,
            allow_uncertified: self.allow_uncertified,
            horizons,
        }
    }
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(c) => cmd_run(&c.options(None)),
        Command::Verify(c) => cmd_verify(&c.options(None)),
        Command::Sweep { common, horizons } => cmd_sweep(&common.options(horizons)).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
