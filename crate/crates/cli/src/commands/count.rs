use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use tbell::model::{CountsEntry, CountsFile, CountsTable};
use tbell::tagproc::{window_reduce, SyncMode, TagSource, WindowSpec};

use super::simulate::{counts_rows, COUNTS_HEADER};
use crate::context::{usage, Context};
use crate::io::{write_csv, write_json};
use crate::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sync {
    /// Repetitions are marked by sync records.
    Channel,
    /// Repetitions follow the nominal period from time zero.
    Period,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    /// PTAG or CSV (`.csv`) tag streams.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Plan setting index of the inputs; inferred from `tags_s<i>_d<j>` names otherwise.
    #[arg(long)]
    pub setting_index: Option<usize>,
    /// Plan delay index of the inputs; inferred from `tags_s<i>_d<j>` names otherwise.
    #[arg(long)]
    pub delay_index: Option<usize>,
    #[arg(long, value_enum, default_value_t = Sync::Channel)]
    pub sync: Sync,
}

#[derive(Serialize)]
struct FileReport {
    path: String,
    setting_index: usize,
    delay_index: usize,
    records: u64,
    orphans: u64,
    dropped: u64,
}

fn indices_from_name(p: &Path) -> Option<(usize, usize)> {
    let stem = p.file_stem()?.to_str()?;
    let rest = stem.strip_prefix("tags_s")?;
    let (s, d) = rest.split_once("_d")?;
    Some((s.parse().ok()?, d.parse().ok()?))
}

pub fn run(ctx: &mut Context, args: &CountArgs) -> Result<()> {
    let plan = ctx.plan().clone();
    let settings = plan.effective_settings();
    let delays = plan.effective_delays();
    let window = WindowSpec::from_plan(&plan)?;

    let mut entries: Vec<(usize, usize, CountsEntry)> = Vec::new();
    let mut reports = Vec::new();
    for path in &args.inputs {
        ctx.input(path);
        let named = indices_from_name(path);
        let si = args.setting_index.or(named.map(|n| n.0)).unwrap_or(0);
        let di = args.delay_index.or(named.map(|n| n.1)).unwrap_or(0);
        let s = *settings
            .get(si)
            .ok_or_else(|| usage(format!("{}: setting index {si} not in plan", path.display())))?;
        let dt = *delays
            .get(di)
            .ok_or_else(|| usage(format!("{}: delay index {di} not in plan", path.display())))?;

        let len = std::fs::metadata(path)
            .with_context(|| format!("opening {}", path.display()))?
            .len();
        let (counts, orphans, dropped, records) = if len == 0 {
            (CountsTable::default(), 0, 0, 0)
        } else {
            let src = TagSource::open(path).with_context(|| format!("opening {}", path.display()))?;
            let period = src.rep_period_fs().unwrap_or_else(|| plan.rep_period_fs());
            let mode = match args.sync {
                Sync::Channel => SyncMode::Channel,
                Sync::Period => SyncMode::Period { rep_period_fs: period },
            };
            let mut records = 0u64;
            let tags = src.inspect(|_| records += 1);
            let rep = window_reduce(tags, window, mode, period).with_context(|| format!("reading {}", path.display()))?;
            (rep.counts, rep.orphans, rep.dropped, records)
        };
        reports.push(FileReport {
            path: path.display().to_string(),
            setting_index: si,
            delay_index: di,
            records,
            orphans,
            dropped,
        });
        match entries.iter_mut().find(|(a, b, _)| (*a, *b) == (si, di)) {
            Some((_, _, e)) => e.counts += counts,
            None => entries.push((
                si,
                di,
                CountsEntry {
                    settings: s,
                    delta_t: dt,
                    counts,
                },
            )),
        }
    }
    entries.sort_by_key(|(si, di, _)| (*di, *si));
    let file = CountsFile {
        seed: None,
        entries: entries.into_iter().map(|(_, _, e)| e).collect(),
    };
    let path = ctx.output("counts.json");
    write_json(&path, &file)?;
    let path = ctx.output("count_report.json");
    write_json(&path, &reports)?;
    if ctx.format == Format::Csv {
        let path = ctx.output("counts.csv");
        write_csv(&path, &COUNTS_HEADER, &counts_rows(&file.entries))?;
    }
    for r in &reports {
        println!(
            "{}: {} records, {} orphans, {} dropped",
            r.path, r.records, r.orphans, r.dropped
        );
    }
    Ok(())
}
