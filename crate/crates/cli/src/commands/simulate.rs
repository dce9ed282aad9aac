use std::fs::File;
use std::io::BufWriter;

use anyhow::{Context as _, Result};
use clap::Args;
use tbell::model::{CountsEntry, CountsFile};
use tbell::sim::{simulate_counts, simulate_tags};

use crate::context::{usage, Context};
use crate::io::{write_csv, write_json};
use crate::Format;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Repetitions per (setting, delay) block; overrides the plan.
    #[arg(long)]
    pub reps: Option<u64>,
    /// Also write one PTAG stream per block.
    #[arg(long)]
    pub tags: bool,
    /// Gaussian timing jitter of emitted clicks (ps, standard deviation).
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
}

pub const COUNTS_HEADER: [&str; 17] = [
    "alpha", "beta", "delta_t_ps", "n_pp", "n_pm", "n_mp", "n_mm", "n_both_a_p", "n_both_a_m", "n_both_b_p",
    "n_both_b_m", "n_both_ab", "singles_ap", "singles_am", "singles_bp", "singles_bm", "reps",
];

pub fn counts_rows(entries: &[CountsEntry]) -> Vec<Vec<Option<f64>>> {
    entries
        .iter()
        .map(|e| {
            let c = &e.counts;
            let mut row = vec![e.settings.alpha, e.settings.beta, e.delta_t];
            row.extend(
                [
                    c.n_pp, c.n_pm, c.n_mp, c.n_mm, c.n_both_a_p, c.n_both_a_m, c.n_both_b_p, c.n_both_b_m,
                    c.n_both_ab, c.singles_ap, c.singles_am, c.singles_bp, c.singles_bm, c.reps,
                ]
                .map(|v| v as f64),
            );
            row.into_iter().map(Some).collect()
        })
        .collect()
}

/// File name of the tag stream of block (setting `si`, delay `di`).
pub fn tag_file_name(si: usize, di: usize) -> String {
    format!("tags_s{si}_d{di}.ptag")
}

pub fn run(ctx: &mut Context, args: &SimulateArgs) -> Result<()> {
    if !(args.jitter >= 0.0 && args.jitter.is_finite()) {
        return Err(usage("--jitter must be non-negative"));
    }
    let mut plan = ctx.plan().clone();
    if let Some(r) = args.reps {
        plan.reps_per_setting = r;
    }
    let params = ctx.physics();
    let outcome = simulate_counts(&plan, &params, ctx.seed)?;
    let file = CountsFile::from(&outcome);
    let path = ctx.output("counts.json");
    write_json(&path, &file)?;
    if ctx.format == Format::Csv {
        let path = ctx.output("counts.csv");
        write_csv(&path, &COUNTS_HEADER, &counts_rows(&file.entries))?;
    }
    if args.tags {
        for e in &outcome.entries {
            let path = ctx.output(&tag_file_name(e.setting_index, e.delay_index));
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            simulate_tags(
                &plan,
                &params,
                ctx.seed,
                args.jitter,
                e.setting_index,
                e.delay_index,
                BufWriter::with_capacity(1 << 20, f),
            )?;
        }
    }
    println!(
        "simulated {} blocks x {} repetitions (seed {})",
        outcome.entries.len(),
        plan.reps_per_setting,
        ctx.seed
    );
    Ok(())
}
