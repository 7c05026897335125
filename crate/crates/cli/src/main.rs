use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Backflash simulator and leakage analysis.
#[derive(Parser)]
#[command(name = "backflash", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate APD-on and APD-off runs and write their time tags.
    Simulate(Common),
    /// Fold monitor tags, subtract the baseline and estimate the leakage.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Directory written by `simulate`.
        #[arg(long, conflicts_with_all = ["on", "off", "apd"])]
        input: Option<PathBuf>,
        /// Monitor tags with the APD active (.bin or .csv).
        #[arg(long, requires_all = ["off", "apd"])]
        on: Option<PathBuf>,
        /// Monitor tags with the APD off.
        #[arg(long)]
        off: Option<PathBuf>,
        /// APD click tags of the active run.
        #[arg(long)]
        apd: Option<PathBuf>,
    },
    /// Secure key rate against distance for each configured leakage.
    Keyrate(Common),
    /// Monitor count rate against APD dark current, with a linear fit.
    Darksweep(Common),
    /// Leakage estimate against APD detection efficiency.
    SweepEfficiency(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML config file, or a `run.toml` written by `simulate`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the run duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Histogram bins per laser period.
    #[arg(long)]
    bins: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use backflash::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) | E::InvalidParameter { .. } | E::BinningMismatch(_) => 2,
                E::Statistics(_) => 4,
                E::Io(_) | E::Format(_) | E::Unsorted(_) | E::OutOfRun { .. } => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
