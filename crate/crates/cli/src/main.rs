//! `eesm` command-line front end.

mod commands;
mod manifest;
mod parse;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::parse::{parse_db, parse_grid, parse_pair};

/// Exit codes shared by all commands.
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INSUFFICIENT: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "eesm",
    version,
    about = "EESM effective-SINR mapping, beta calibration and CQI reporting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Map a per-tone SINR vector to its effective SINR.
    Map(MapArgs),
    /// Estimate beta for one format from channel realizations.
    Calibrate(CalibrateArgs),
    /// Emit EESM as a function of beta, optionally with a local linear fit.
    Curve(CurveArgs),
    /// Run a closed-loop MSS/BS reporting session from a scenario file.
    ProtocolDemo(DemoArgs),
}

/// Where the per-tone SINRs come from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct GammaSource {
    /// Flat channel at this SINR (dB, optional `dB` suffix).
    #[arg(long, value_parser = parse_db, allow_hyphen_values = true)]
    pub flat: Option<f64>,
    /// CSV with header `gamma_linear`, one linear SINR per line.
    #[arg(long, value_name = "FILE")]
    pub gamma_file: Option<std::path::PathBuf>,
    /// Independent Rayleigh-faded tones (exponential SINRs); value is the tone count.
    #[arg(long, value_name = "TONES")]
    pub rayleigh: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GammaOptions {
    #[command(flatten)]
    pub source: GammaSource,
    /// Tone count for --flat.
    #[arg(long, default_value_t = 24)]
    pub n: usize,
    /// Mean SINR for --rayleigh (dB).
    #[arg(long, default_value = "0", value_parser = parse_db, allow_hyphen_values = true)]
    pub mean_snr: f64,
    /// Seed for --rayleigh.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Also write outputs and a run manifest into this directory.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct BetaSource {
    /// Beta in dB.
    #[arg(long, value_parser = parse_db, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Format id whose beta is looked up in --table.
    #[arg(long)]
    pub format: Option<u32>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub gamma: GammaOptions,
    #[command(flatten)]
    pub beta: BetaSource,
    /// Beta table: CSV path, file name under $EESM_TABLE_DIR, or built-in
    /// name (betas_pb_3kmh.csv, betas_va_60kmh.csv).
    #[arg(long, default_value = "betas_pb_3kmh.csv")]
    pub table: String,
    /// Reference curves (`mcs_id,snr_db,bler`); adds the predicted BLER.
    #[arg(long, value_name = "FILE")]
    pub curve: Option<std::path::PathBuf>,
    /// Curve to read BLER from; defaults to --format.
    #[arg(long)]
    pub mcs: Option<u32>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct BlerSource {
    /// Synthesize BLERs as the reference curve at EESM(gamma, planted beta dB).
    #[arg(long, value_parser = parse_db, allow_hyphen_values = true)]
    pub planted: Option<f64>,
    /// Measured BLERs, CSV with header `bler`, one row per realization.
    #[arg(long, value_name = "FILE")]
    pub bler_file: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct CurveSource {
    /// Reference curves (`mcs_id,snr_db,bler`); used with --format.
    #[arg(long, value_name = "FILE")]
    pub curve: Option<std::path::PathBuf>,
    /// Logistic AWGN curve `MID,SLOPE` in dB.
    #[arg(long, value_parser = parse_pair, value_name = "MID,SLOPE", allow_hyphen_values = true)]
    pub synthetic: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Number of channel realizations.
    #[arg(short = 'n', long, default_value_t = 100)]
    pub realizations: usize,
    /// Channel profile: pedb-like, veha-like, single-tap or a JSON path.
    #[arg(long, default_value = "pedb-like")]
    pub profile: String,
    /// OFDMA layout JSON; defaults to the shipped 10 MHz downlink PUSC.
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub curve: CurveSource,
    /// Format (curve id) being calibrated.
    #[arg(long, default_value_t = 1)]
    pub format: u32,
    #[command(flatten)]
    pub bler: BlerSource,
    /// Use the weighted cost.
    #[arg(long)]
    pub weighted: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mean SNR range `LO:HI` (dB) for the realizations.
    #[arg(long, value_parser = parse_pair, default_value = "0:25", allow_hyphen_values = true)]
    pub snr_range: (f64, f64),
    /// BLER window `LO:HI` of usable samples.
    #[arg(long, value_parser = parse_pair, default_value = "0.001:0.9")]
    pub window: (f64, f64),
    /// Initial beta search bracket `LO:HI` (dB).
    #[arg(long, value_parser = parse_pair, default_value = "-5:20", allow_hyphen_values = true)]
    pub bracket: (f64, f64),
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub gamma: GammaOptions,
    /// Beta grid `LO:HI:STEP` in dB.
    #[arg(long, value_parser = parse_grid, default_value = "-10:40:0.5", allow_hyphen_values = true)]
    pub grid: (f64, f64, f64),
    /// Fit a local line over the beta window `LO:HI` (dB).
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub fit: Option<(f64, f64)>,
    /// Write the fit as JSON here instead of standard error.
    #[arg(long, value_name = "FILE", requires = "fit")]
    pub fit_output: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Scenario JSON (see scenarios/README.md).
    #[arg(long, value_name = "FILE")]
    pub scenario: std::path::PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let argv: Vec<String> = std::env::args().collect();
    let result = match &cli.command {
        Command::Map(a) => commands::map(a, &argv),
        Command::Calibrate(a) => commands::calibrate(a, &argv),
        Command::Curve(a) => commands::curve(a, &argv),
        Command::ProtocolDemo(a) => commands::protocol_demo(a, &argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<eesm_core::Error>() {
        Some(eesm_core::Error::InsufficientData { .. }) => EXIT_INSUFFICIENT,
        Some(eesm_core::Error::Numeric(_)) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}
