//! Batch command-line front end for the needle Paul trap toolkit.
//!
//! One subcommand per pipeline; inputs come from a TOML config plus
//! unit-suffixed flag overrides, outputs are CSV/plain-text files plus a
//! `manifest.toml` that pins everything needed to reproduce the run.

mod commands;
mod config;
mod manifest;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "needletrap", version, about = "Needle Paul trap simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Noise seed for stochastic runs
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Interpret the RF voltage as peak-to-peak and halve it
    #[arg(long)]
    vpp: bool,
    /// Override the needle separation (μm)
    #[arg(long = "d-um")]
    d_um: Option<f64>,
    /// Override the RF drive frequency Ω/2π (kHz)
    #[arg(long = "freq-khz")]
    freq_khz: Option<f64>,
    /// Override the RF amplitude (V, zero-to-peak unless --vpp)
    #[arg(long = "v0-volts")]
    v0_volts: Option<f64>,
    /// Override the DC offset (V)
    #[arg(long = "u0-volts")]
    u0_volts: Option<f64>,
}

impl Common {
    fn overrides(&self) -> config::Overrides {
        config::Overrides {
            d_um: self.d_um,
            freq_khz: self.freq_khz,
            v0_volts: self.v0_volts,
            u0_volts: self.u0_volts,
            vpp: self.vpp,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Mathieu stability map and boundary over an (a, q) window
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = -0.2)]
        a_min: f64,
        #[arg(long, default_value_t = 0.2)]
        a_max: f64,
        #[arg(long, default_value_t = 0.0)]
        q_min: f64,
        #[arg(long, default_value_t = 1.2)]
        q_max: f64,
        /// Grid points along a
        #[arg(long, default_value_t = 41)]
        na: usize,
        /// Grid points along q
        #[arg(long, default_value_t = 61)]
        nq: usize,
    },
    /// Integrate the driven/damped/thermal equations of motion
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Welch power spectral density (and optional peak fit) of a time series
    Psd {
        #[command(flatten)]
        common: Common,
        /// Trajectory or (t_s, signal) CSV
        #[arg(long, conflicts_with = "raw")]
        input: Option<PathBuf>,
        /// Column to analyze (defaults to the first signal column)
        #[arg(long)]
        column: Option<String>,
        /// Raw little-endian f64 stream (requires --sample-rate-hz)
        #[arg(long, requires = "sample_rate_hz")]
        raw: Option<PathBuf>,
        #[arg(long)]
        sample_rate_hz: Option<f64>,
        /// Lorentzian peak-fit window (kHz); both bounds or none
        #[arg(long, requires = "peak_max_khz")]
        peak_min_khz: Option<f64>,
        #[arg(long, requires = "peak_min_khz")]
        peak_max_khz: Option<f64>,
    },
    /// Frequency-vs-distance curve at fixed charge and DC offset
    Scan {
        #[command(flatten)]
        common: Common,
        /// Use the monodromy exponent instead of the β² series
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        d_min_um: Option<f64>,
        #[arg(long)]
        d_max_um: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Fit particle charge and DC offset to a measured frequency scan
    Fit {
        #[command(flatten)]
        common: Common,
        /// Scan CSV with columns d_um, f_khz[, sigma_f_khz]
        #[arg(long)]
        scan: PathBuf,
        /// Use the monodromy exponent instead of the β² series
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        guess_charge_e: Option<f64>,
        #[arg(long)]
        guess_u0_volts: Option<f64>,
    },
    /// Libration mode of a charge/mass distribution in the configured trap
    Libration {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Stability {
            common,
            a_min,
            a_max,
            q_min,
            q_max,
            na,
            nq,
        } => commands::stability(&common, (a_min, a_max), na, (q_min, q_max), nq),
        Command::Simulate { common } => commands::simulate(&common),
        Command::Psd {
            common,
            input,
            column,
            raw,
            sample_rate_hz,
            peak_min_khz,
            peak_max_khz,
        } => commands::psd(
            &common,
            input.as_deref(),
            column.as_deref(),
            raw.as_deref(),
            sample_rate_hz,
            peak_min_khz.zip(peak_max_khz),
        ),
        Command::Scan {
            common,
            exact,
            d_min_um,
            d_max_um,
            points,
        } => commands::scan(&common, exact, d_min_um, d_max_um, points),
        Command::Fit {
            common,
            scan,
            exact,
            guess_charge_e,
            guess_u0_volts,
        } => commands::fit(&common, &scan, exact, guess_charge_e, guess_u0_volts),
        Command::Libration { common } => commands::libration(&common),
    }
}
