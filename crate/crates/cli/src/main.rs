mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcc_core::SystemConfig;

/// Three-user mode-pairing conferencing simulator.
///
/// Any config key can be overridden with `--key=value`, e.g.
/// `--dark_count_prob=1e-8`. Precedence: flag > config file > defaults.
#[derive(Debug, Parser)]
#[command(name = "qcc", version)]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Sets the per-arm transmittance from a total three-arm loss in dB.
    #[arg(long, global = true)]
    pub loss_db: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo run: sifted events, phase log, accounting and key length.
    Simulate(SimArgs),
    /// Recompute the security analysis from a stored run directory.
    Analyze {
        /// Directory holding `sifted_events.csv` and `summary.csv`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Analytic key rate against total loss.
    Sweep {
        #[arg(long, default_value_t = 40.0)]
        from: f64,
        #[arg(long, default_value_t = 70.0)]
        to: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        /// Quantum pulses; defaults to ten hours at the configured rate.
        #[arg(long)]
        pulses: Option<f64>,
    },
    /// X error of every sign-convention vertex.
    CalibrateSigns(SimArgs),
    /// Paired triples against same-slot coincidences per pairing window.
    PairingDemo {
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3])]
        p_click: Vec<f64>,
        #[arg(long, default_value_t = 10_000_000)]
        slots: u64,
        #[arg(long, value_delimiter = ',',
              default_values_t = [100, 300, 1000, 3000, 10000, 30000, 100000])]
        windows: Vec<u64>,
    },
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 10_000_000)]
    pub slots: u64,
    /// `fast` or `slot`.
    #[arg(long, default_value = "fast")]
    pub engine: String,
    /// Sign flips applied to the estimator, as three bits per port.
    #[arg(long, default_value = "000")]
    pub inject: String,
    #[arg(long)]
    pub no_compensate: bool,
    /// Write the raw click stream as `clicks.bin`.
    #[arg(long)]
    pub dump_clicks: bool,
    /// Write sent pulses as `pulses.bin`.
    #[arg(long)]
    pub dump_pulses: bool,
}

/// Splits `--key=value` config overrides from the rest of the arguments.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut ov = Vec::new();
    for a in args {
        if let Some((k, v)) = a.strip_prefix("--").and_then(|s| s.split_once('=')) {
            let key = k.replace('-', "_");
            if SystemConfig::keys().contains(&key.as_str()) {
                ov.push((key, v.to_string()));
                continue;
            }
        }
        rest.push(a);
    }
    (rest, ov)
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    match run::run(&cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
