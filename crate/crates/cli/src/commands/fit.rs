use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;
use tbell::analytic::chsh_analytic;
use tbell::fitting::{extract_dephasing, fit_g2_decay, DecayFit, DephasingFit, Sample};

use crate::context::{usage, Context};
use crate::io::{read_numeric_csv, write_csv, write_json};
use crate::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    /// `1 + A·(exp decay ⊛ Gaussian IRF)` fitted to g²(Δt).
    G2,
    /// Pure-dephasing rate from S(Δt) against the γ = 0 prediction of the config.
    Dephasing,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// CSV with columns `delta_t_ps, value[, sigma]`.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Model::G2)]
    pub model: Model,
    /// FWHM of the Gaussian instrument response (ps).
    #[arg(long, default_value_t = 0.2)]
    pub irf_fwhm: f64,
    /// Dephasing rates (1/ps) at which to report χ².
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub gamma_grid: Option<Vec<f64>>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum FitReport {
    G2 { model: &'static str, fit: DecayFit, samples: Vec<Sample>, fitted: Vec<f64> },
    Dephasing { model: &'static str, fit: DephasingFit, samples: Vec<Sample>, s0: Vec<f64> },
}

pub fn run(ctx: &mut Context, args: &FitArgs) -> Result<()> {
    ctx.input(&args.input);
    let samples: Vec<Sample> = read_numeric_csv(&args.input, 2)?
        .into_iter()
        .map(|r| Sample {
            x: r[0],
            y: r[1],
            sigma: r.get(2).copied().unwrap_or(1.0),
        })
        .collect();
    if samples.is_empty() {
        return Err(usage(format!("{}: no samples", args.input.display())));
    }

    let report = match args.model {
        Model::G2 => {
            let fit = fit_g2_decay(&samples, args.irf_fwhm)?;
            println!("tau = {:.4} ps, A = {:.4}", fit.tau, fit.amplitude);
            let fitted = samples.iter().map(|s| fit.predict(s.x)).collect();
            FitReport::G2 {
                model: "g2",
                fit,
                samples,
                fitted,
            }
        }
        Model::Dephasing => {
            let mut params = ctx.physics();
            params.vibration.gamma_deph = 0.0;
            let sigma = params.source.sigma_tech;
            let s0 = samples
                .iter()
                .map(|s| chsh_analytic(&params, s.x, sigma))
                .collect::<tbell::Result<Vec<_>>>()?;
            let grid = args
                .gamma_grid
                .clone()
                .unwrap_or_else(|| (0..=50).map(|i| i as f64 * 0.01).collect());
            let fit = extract_dephasing(&samples, &s0, &grid)?;
            println!(
                "gamma = {:.5} /ps, 95% upper limit {}",
                fit.gamma,
                fit.gamma_upper.map_or("none".into(), |g| format!("{g:.5} /ps"))
            );
            FitReport::Dephasing {
                model: "dephasing",
                fit,
                samples,
                s0,
            }
        }
    };
    let path = ctx.output("fit.json");
    write_json(&path, &report)?;
    if ctx.format == Format::Csv {
        let (header, rows): (&[&str], Vec<Vec<Option<f64>>>) = match &report {
            FitReport::G2 { samples, fitted, .. } => (
                &["delta_t_ps", "value", "sigma", "fitted"],
                samples
                    .iter()
                    .zip(fitted)
                    .map(|(s, f)| vec![Some(s.x), Some(s.y), Some(s.sigma), Some(*f)])
                    .collect(),
            ),
            FitReport::Dephasing { samples, fit, s0, .. } => (
                &["delta_t_ps", "value", "sigma", "s0", "residual"],
                samples
                    .iter()
                    .zip(s0)
                    .zip(&fit.residuals)
                    .map(|((s, z), r)| vec![Some(s.x), Some(s.y), Some(s.sigma), Some(*z), Some(*r)])
                    .collect(),
            ),
        };
        let path = ctx.output("fit.csv");
        write_csv(&path, header, &rows)?;
    }
    Ok(())
}
