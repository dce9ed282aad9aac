use std::path::PathBuf;

use anyhow::{Context as _, Result};
use clap::Args;
use serde::Serialize;
use tbell::model::{CountsFile, Settings};
use tbell::stats::{
    bell_confidence, e_from_counts, poisson_bootstrap, s_from_counts, BellRunData, ConfidenceResult, SettingMap,
};
use tbell::tagproc::g2_from_table;

use super::soft;
use crate::context::{usage, Context};
use crate::io::{write_csv, write_json};
use crate::Format;

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Counts JSON file.
    pub input: PathBuf,
    /// Significance levels of the lower bound on S.
    #[arg(long, value_delimiter = ',', default_value = "0.01,5.733e-7")]
    pub alpha: Vec<f64>,
    /// Relative convergence tolerance of the bootstrap.
    #[arg(long, default_value_t = 1e-3)]
    pub bootstrap_tol: f64,
}

#[derive(Serialize)]
struct EntryResult {
    settings: Settings,
    coincidences: u64,
    e: Option<f64>,
    e_std: Option<f64>,
    g2: Option<f64>,
}

#[derive(Serialize)]
struct Chsh {
    s: f64,
    s_std: f64,
    bootstrap_resamples: u64,
    bootstrap_discarded: u64,
    bootstrap_converged: bool,
    confidence: Vec<ConfidenceResult>,
}

#[derive(Serialize)]
struct DelayResult {
    delta_t: f64,
    entries: Vec<EntryResult>,
    /// Present when the four CHSH settings were all measured.
    chsh: Option<Chsh>,
}

pub fn run(ctx: &mut Context, args: &AnalyzeArgs) -> Result<()> {
    if args.alpha.iter().any(|a| !(*a > 0.0 && *a <= 0.5)) {
        return Err(usage("--alpha values must lie in (0, 0.5]"));
    }
    if !(args.bootstrap_tol > 0.0) {
        return Err(usage("--bootstrap-tol must be positive"));
    }
    ctx.input(&args.input);
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let file = CountsFile::from_json(&text).with_context(|| format!("parsing {}", args.input.display()))?;

    let map = SettingMap::default();
    let mut results = Vec::new();
    for dt in file.delays() {
        let block: Vec<_> = file.entries.iter().filter(|e| e.delta_t == dt).collect();
        let mut entries = Vec::new();
        for e in &block {
            let value = soft(e_from_counts(&e.counts))?;
            let e_std = match value {
                Some(_) => {
                    let b = poisson_bootstrap(&e.counts, e_from_counts, args.bootstrap_tol, ctx.seed);
                    Some(b.std)
                }
                None => None,
            };
            entries.push(EntryResult {
                settings: e.settings,
                coincidences: e.counts.coincidences(),
                e: value,
                e_std,
                g2: soft(g2_from_table(&e.counts))?,
            });
        }
        let chsh = match BellRunData::from_entries(block.iter().map(|e| (&e.settings, &e.counts)), map) {
            Ok(data) => match soft(s_from_counts(&data))? {
                Some(s) => {
                    let b = poisson_bootstrap(&data, s_from_counts, args.bootstrap_tol, ctx.seed);
                    let confidence = args
                        .alpha
                        .iter()
                        .map(|&a| bell_confidence(&data, a))
                        .collect::<tbell::Result<_>>()?;
                    Some(Chsh {
                        s,
                        s_std: b.std,
                        bootstrap_resamples: b.resamples,
                        bootstrap_discarded: b.discarded,
                        bootstrap_converged: b.converged,
                        confidence,
                    })
                }
                None => None,
            },
            Err(tbell::Error::InvalidParam { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        results.push(DelayResult {
            delta_t: dt,
            entries,
            chsh,
        });
    }

    let path = ctx.output("analysis.json");
    write_json(&path, &results)?;
    if ctx.format == Format::Csv {
        let rows: Vec<_> = results
            .iter()
            .flat_map(|d| {
                d.entries.iter().map(move |e| {
                    vec![
                        Some(d.delta_t),
                        Some(e.settings.alpha),
                        Some(e.settings.beta),
                        Some(e.coincidences as f64),
                        e.e,
                        e.e_std,
                        e.g2,
                    ]
                })
            })
            .collect();
        let path = ctx.output("analysis.csv");
        write_csv(&path, &["delta_t_ps", "alpha", "beta", "coincidences", "e", "e_std", "g2"], &rows)?;
    }
    for d in &results {
        if let Some(c) = &d.chsh {
            let bounds: Vec<String> = c
                .confidence
                .iter()
                .map(|r| format!("S_min({:.3e}) = {:.4}", r.alpha, r.s_min))
                .collect();
            println!("dt = {} ps: S = {:.4} ± {:.4}; {}", d.delta_t, c.s, c.s_std, bounds.join(", "));
        }
    }
    Ok(())
}
