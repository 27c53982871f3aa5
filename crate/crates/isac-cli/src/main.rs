//! `isac`: experiment driver for the RIS-assisted ISAC simulator.
//!
//! Reads a plain-text scenario file, sweeps one variable over a list of
//! values, runs the requested schemes over seeded Monte-Carlo trials, and
//! writes aggregated CSV.

use clap::{Parser, Subcommand};
use isac_core::baselines::{Mode, Scheme};
use isac_core::config::SystemConfig;
use isac_core::experiment::{run_experiment, ExperimentSpec, SweepVar};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "isac",
    version,
    about = "RIS-assisted ISAC beamforming simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep experiment and write CSV results.
    Run {
        /// Scenario file (`key = value` lines; see configs/ for examples).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sensing constraint: `snr` (target detection) or `crb` (DoA
        /// estimation).
        #[arg(long, default_value = "snr")]
        mode: String,
        /// Sweep variable: Pt | N | Gamma_t | eps_crb | iterations |
        /// beampattern.
        #[arg(long, default_value = "Pt")]
        sweep: String,
        /// Comma-separated sweep values (Pt in dBm, Gamma_t in dB, eps_crb
        /// linear, N as element counts). Ignored by iterations/beampattern.
        #[arg(long, default_value = "")]
        values: String,
        /// Monte-Carlo trials per sweep point (trial t uses seed base+t).
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Comma-separated subset of proposed,comm_only,bf_only,separate.
        #[arg(long, default_value = "proposed")]
        schemes: String,
        /// Base RNG seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path.
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Also write per-trial rows next to the aggregate file.
        #[arg(long, default_value_t = false)]
        raw: bool,
    },
}

fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid sweep value `{p}`"))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            mode,
            sweep,
            values,
            trials,
            schemes,
            seed,
            out,
            raw,
        } => {
            let base = match config {
                Some(path) => match SystemConfig::from_file(&path) {
                    Ok(c) => c,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::FAILURE;
                    }
                },
                None => SystemConfig::default(),
            };
            let mode = match mode.as_str() {
                "snr" => Mode::Snr,
                "crb" => Mode::Crb,
                other => {
                    eprintln!("error: unknown mode `{other}` (use snr or crb)");
                    return ExitCode::FAILURE;
                }
            };
            let sweep = match SweepVar::parse(&sweep) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let values = match parse_values(&values) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let schemes: Result<Vec<Scheme>, _> = schemes
                .split(',')
                .map(|s| Scheme::parse(s.trim()))
                .collect();
            let schemes = match schemes {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let spec = ExperimentSpec {
                base,
                mode,
                sweep,
                values,
                trials,
                schemes,
                seed_base: seed,
                out: out.clone(),
                raw,
            };
            match run_experiment(&spec) {
                Ok(csv) => {
                    eprintln!(
                        "wrote {} ({} data rows)",
                        out.display(),
                        csv.lines().count().saturating_sub(1)
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
