use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use semcom_core::dp::AccountingMode;
use semcom_sim::tools::{self, CalibrationRequest};
use semcom_sim::{emit_report, load_config, SimError};

#[derive(Parser)]
#[command(
    name = "semcom",
    version,
    about = "Secure distributed semantic-communication simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Composition,
    Aggregate,
}

#[derive(Subcommand)]
enum Command {
    /// Run update, sync and communication, then write the CSV and JSON reports.
    Run {
        config: PathBuf,
        /// Override `output.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Override `output.json`.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Least DP noise meeting a target given existing model and channel noise.
    DpCalibrate {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_model: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_channel: f64,
        /// Weakest fading gain; omit for AWGN.
        #[arg(long)]
        min_gain: Option<f64>,
        /// L2 sensitivity; defaults to 2 sqrt(symbols).
        #[arg(long)]
        sensitivity: Option<f64>,
        #[arg(long, default_value_t = 1)]
        symbols: usize,
        #[arg(long, value_enum, default_value_t = Mode::Composition)]
        mode: Mode,
    },
    /// Detection probability against index-set size: closed form and Monte-Carlo.
    DetectCurve {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        x: usize,
        /// Index-set sizes as `MIN..MAX` (inclusive) or a single value.
        #[arg(long, value_parser = parse_range)]
        i: RangeInclusive<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// BLEU of the trained, synchronized model over the configured sweep.
    BleuSweep { config: PathBuf },
}

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let bad = |_| format!("`{s}` is not MIN..MAX");
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (
            a.parse().map_err(bad)?,
            b.trim_start_matches('=').parse().map_err(bad)?,
        ),
        None => {
            let v = s.parse().map_err(bad)?;
            (v, v)
        }
    };
    if lo == 0 || lo > hi {
        return Err(format!("`{s}` must satisfy 1 <= MIN <= MAX"));
    }
    Ok(lo..=hi)
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<(), SimError> {
    match command {
        Command::Run { config, csv, json } => {
            let cfg = load_config(&config)?;
            let csv = csv.unwrap_or_else(|| cfg.output.csv.clone());
            let json = json.unwrap_or_else(|| cfg.output.json.clone());
            let state = semcom_sim::run(cfg)?;
            emit_report(&state.report, &csv, &json)?;
            println!(
                "{} rows, config {} -> {} , {}",
                state.report.rows.len(),
                state.report.config_hash,
                csv.display(),
                json.display()
            );
        }
        Command::DpCalibrate {
            epsilon,
            delta,
            sigma_model,
            sigma_channel,
            min_gain,
            sensitivity,
            symbols,
            mode,
        } => {
            let req = CalibrationRequest {
                epsilon,
                delta,
                sigma_model,
                sigma_channel,
                min_gain,
                sensitivity,
                symbols,
                mode: match mode {
                    Mode::Composition => AccountingMode::Composition,
                    Mode::Aggregate => AccountingMode::Aggregate,
                },
            };
            print!("{}", tools::calibration_csv(&tools::run_calibration(&req)?));
        }
        Command::DetectCurve {
            n,
            x,
            i,
            trials,
            seed,
        } => {
            print!(
                "{}",
                tools::curve_csv(&tools::detect_curve(n, x, i, trials, seed)?)
            );
        }
        Command::BleuSweep { config } => {
            let state = semcom_sim::prepare(load_config(&config)?)?;
            print!(
                "{}",
                tools::sweep_csv(&semcom_sim::phases::bleu_sweep(&state)?)
            );
        }
    }
    Ok(())
}
