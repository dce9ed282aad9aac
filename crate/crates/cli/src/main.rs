use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod context;
mod io;
mod manifest;

use context::Context;

#[derive(Parser, Debug)]
#[command(name = "tbell", version, about = "Photon-phonon Bell test modelling and analysis")]
struct Cli {
    /// JSON configuration; the reference setup is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides `plan.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic predictions: g², visibilities, correlators and S(Δt).
    Predict(commands::predict::PredictArgs),
    /// Monte-Carlo counts and, optionally, tag streams.
    Simulate(commands::simulate::SimulateArgs),
    /// Reduce PTAG or CSV tag streams to a counts file.
    Count(commands::count::CountArgs),
    /// Correlators, S, bootstrap errors and confidence bounds from counts.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Fit a g² decay or a dephasing rate to (Δt, value, sigma) samples.
    Fit(commands::fit::FitArgs),
    /// Source and detector parameters from measured rates.
    Estimate(commands::misc::EstimateArgs),
    /// Retardance curve from variable-retarder transmission data.
    #[command(name = "calibrate-vr")]
    CalibrateVr(commands::misc::CalibrateArgs),
    /// Compare the photon-number expansion with the closed form.
    Oracle(commands::misc::OracleArgs),
}

#[derive(Debug, Clone)]
pub struct GlobalArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let globals = GlobalArgs {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        format: cli.format,
    };
    let result = Context::new(globals, argv).and_then(|mut ctx| {
        match &cli.command {
            Command::Predict(a) => commands::predict::run(&mut ctx, a),
            Command::Simulate(a) => commands::simulate::run(&mut ctx, a),
            Command::Count(a) => commands::count::run(&mut ctx, a),
            Command::Analyze(a) => commands::analyze::run(&mut ctx, a),
            Command::Fit(a) => commands::fit::run(&mut ctx, a),
            Command::Estimate(a) => commands::misc::estimate(&mut ctx, a),
            Command::CalibrateVr(a) => commands::misc::calibrate(&mut ctx, a),
            Command::Oracle(a) => commands::misc::oracle(&mut ctx, a),
        }?;
        ctx.finish()
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(context::exit_code(&e))
        }
    }
}
