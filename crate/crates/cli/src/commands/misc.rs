use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;
use tbell::analytic::{pattern_probs_fixed_phase, OperatingPoint};
use tbell::fitting::{calibrate_retarder, estimate_params, RateInputs, RetarderCalibration};
use tbell::fock::{oracle_pattern_probs, FockTruncation};
use tbell::model::Settings;

use crate::context::{usage, Context};
use crate::io::{read_numeric_csv, write_csv, write_json};
use crate::Format;

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Stokes singles rate (Hz).
    #[arg(long)]
    pub stokes: f64,
    /// Anti-Stokes rate at negative delay (Hz).
    #[arg(long)]
    pub antistokes: f64,
    /// Coincidence rate (Hz).
    #[arg(long)]
    pub coinc: f64,
    /// Repetition rate (Hz).
    #[arg(long, default_value_t = 80e6)]
    pub rep_rate: f64,
    /// Stokes detection efficiency.
    #[arg(long, default_value_t = 0.1)]
    pub eta_a: f64,
}

pub fn estimate(ctx: &mut Context, args: &EstimateArgs) -> Result<()> {
    let est = estimate_params(&RateInputs {
        stokes_rate_hz: args.stokes,
        antistokes_neg_delay_rate_hz: args.antistokes,
        coinc_rate_hz: args.coinc,
        rep_rate_hz: args.rep_rate,
        eta_a: args.eta_a,
    })?;
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
    println!("g = {:.5}, p_dc = {:.3e}, eta_b0 = {:.4e}", est.g, est.p_dc, est.eta_b0);
    let path = ctx.output("estimate.json");
    write_json(&path, &est)
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// CSV with columns `voltage, transmission`.
    pub input: PathBuf,
    /// Retardances (rad) to look up.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub target: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct Lookup {
    delta: f64,
    voltages: Vec<f64>,
}

#[derive(Serialize)]
struct CalibrationReport {
    calibration: RetarderCalibration,
    lookups: Vec<Lookup>,
}

pub fn calibrate(ctx: &mut Context, args: &CalibrateArgs) -> Result<()> {
    ctx.input(&args.input);
    let samples: Vec<(f64, f64)> = read_numeric_csv(&args.input, 2)?
        .into_iter()
        .map(|r| (r[0], r[1]))
        .collect();
    let calibration = calibrate_retarder(&samples)?;
    for w in &calibration.warnings {
        eprintln!("warning: {w}");
    }
    let lookups = args
        .target
        .iter()
        .flatten()
        .map(|&delta| Lookup {
            delta,
            voltages: calibration.voltages_for(delta),
        })
        .collect();
    let report = CalibrationReport { calibration, lookups };
    let path = ctx.output("calibration.json");
    write_json(&path, &report)?;
    if ctx.format == Format::Csv {
        let rows: Vec<_> = report
            .calibration
            .points
            .iter()
            .map(|p| vec![Some(p.voltage), Some(p.transmission), Some(p.delta)])
            .collect();
        let path = ctx.output("calibration.csv");
        write_csv(&path, &["voltage", "transmission", "delta_rad"], &rows)?;
    }
    println!(
        "{} points, {} monotone segments",
        report.calibration.points.len(),
        report.calibration.segments.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta: f64,
    /// Run phase (rad).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    /// Write-read delay (ps); the plan's first delay when omitted.
    #[arg(long)]
    pub delta_t: Option<f64>,
    /// Initial photon-number cutoff per pair mode.
    #[arg(long, default_value_t = 6)]
    pub n_max: usize,
    /// Largest acceptable truncated probability.
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
}

#[derive(Serialize)]
struct OracleReport {
    settings: Settings,
    delta_t: f64,
    phi: f64,
    closed_form: [f64; 16],
    fock: [f64; 16],
    max_abs_diff: f64,
}

pub fn oracle(ctx: &mut Context, args: &OracleArgs) -> Result<()> {
    if args.n_max == 0 || !(args.tolerance > 0.0) {
        return Err(usage("--n-max and --tolerance must be positive"));
    }
    let dt = args
        .delta_t
        .unwrap_or_else(|| ctx.plan().effective_delays()[0]);
    let op = OperatingPoint::at_delay(&ctx.physics(), dt)?;
    let settings = Settings::new(args.alpha, args.beta);
    let eta = op.efficiencies();
    let closed = pattern_probs_fixed_phase(&settings, op.g, eta, op.p_dc, args.phi)?;
    let trunc = FockTruncation {
        n_max: args.n_max,
        tolerance: args.tolerance,
    };
    let fock = oracle_pattern_probs(&settings, op.g, eta, op.p_dc, args.phi, trunc)?;
    let max_abs_diff = closed
        .as_array()
        .iter()
        .zip(fock.as_array())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max |closed form - Fock| = {max_abs_diff:.3e}");
    let report = OracleReport {
        settings,
        delta_t: dt,
        phi: args.phi,
        closed_form: *closed.as_array(),
        fock: *fock.as_array(),
        max_abs_diff,
    };
    let path = ctx.output("oracle.json");
    write_json(&path, &report)
}
