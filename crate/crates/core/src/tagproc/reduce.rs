use crate::error::{Error, Result};
use crate::model::{Channel, CountsTable, ExperimentPlan, LabeledClicks, TagRecord};

/// Detection window relative to the repetition's sync time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    /// Window centre after the sync (ps).
    pub offset_ps: f64,
    pub halfwidth_ps: f64,
}

impl WindowSpec {
    pub fn new(offset_ps: f64, halfwidth_ps: f64) -> Result<Self> {
        if !(halfwidth_ps > 0.0) || !offset_ps.is_finite() || !halfwidth_ps.is_finite() {
            return Err(Error::param("window", "halfwidth must be positive and finite"));
        }
        Ok(WindowSpec {
            offset_ps,
            halfwidth_ps,
        })
    }

    /// The plan's window, which must be narrower than half the bin separation.
    pub fn from_plan(plan: &ExperimentPlan) -> Result<Self> {
        if plan.window_halfwidth >= plan.bin_separation / 2.0 {
            return Err(Error::param(
                "window_halfwidth",
                "must be below half the bin separation",
            ));
        }
        WindowSpec::new(plan.window_offset, plan.window_halfwidth)
    }

    #[inline]
    fn contains(&self, dt: f64) -> bool {
        (dt - self.offset_ps).abs() <= self.halfwidth_ps
    }

    fn reaches_before_sync(&self) -> bool {
        self.offset_ps - self.halfwidth_ps < 0.0
    }
}

/// How click records are assigned to repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncMode {
    /// Sync records on channel 0 mark each repetition.
    Channel,
    /// No sync records: repetition k starts at ⌊k·period⌋ ps.
    Period { rep_period_fs: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReduceReport {
    pub counts: CountsTable,
    /// Clicks before the first sync.
    pub orphans: u64,
    /// Clicks outside every window.
    pub dropped: u64,
}

fn set(c: &mut LabeledClicks, ch: Channel) {
    match ch {
        Channel::AlicePlus => c.alice_plus = true,
        Channel::AliceMinus => c.alice_minus = true,
        Channel::BobPlus => c.bob_plus = true,
        Channel::BobMinus => c.bob_minus = true,
        Channel::Sync => {}
    }
}

/// Single-pass reducer from time tags to counts. Memory is bounded by one
/// repetition's clicks.
#[derive(Debug, Clone)]
pub struct WindowReducer {
    window: WindowSpec,
    mode: SyncMode,
    /// Nominal period (ps) for windows that start before their sync.
    period_ps: f64,
    current: Option<(u64, LabeledClicks)>,
    /// Repetition index of `current` (period mode).
    rep: u64,
    pending: Vec<TagRecord>,
    report: ReduceReport,
}

impl WindowReducer {
    pub fn new(window: WindowSpec, mode: SyncMode, rep_period_fs: u64) -> Self {
        WindowReducer {
            window,
            mode,
            period_ps: rep_period_fs as f64 / 1000.0,
            current: None,
            rep: 0,
            pending: Vec::new(),
            report: ReduceReport::default(),
        }
    }

    fn sync_time(rep_period_fs: u64, k: u64) -> u64 {
        ((k as u128 * rep_period_fs as u128) / 1000) as u64
    }

    fn close_current(&mut self) {
        if let Some((_, clicks)) = self.current.take() {
            self.report.counts.record(clicks);
        }
    }

    fn open(&mut self, sync: u64) {
        let mut clicks = LabeledClicks::default();
        for r in self.pending.drain(..) {
            let dt = r.time_ps as f64 - sync as f64;
            if self.window.contains(dt) {
                set(&mut clicks, r.channel);
            } else {
                self.report.dropped += 1;
            }
        }
        self.current = Some((sync, clicks));
    }

    fn click(&mut self, r: TagRecord) {
        let Some((sync, clicks)) = self.current.as_mut() else {
            self.report.orphans += 1;
            return;
        };
        let dt = r.time_ps as f64 - *sync as f64;
        if self.window.contains(dt) {
            set(clicks, r.channel);
        } else if self.window.reaches_before_sync()
            && self.window.contains(dt - self.period_ps)
        {
            self.pending.push(r);
        } else {
            self.report.dropped += 1;
        }
    }

    pub fn push(&mut self, r: TagRecord) {
        match self.mode {
            SyncMode::Channel => {
                if r.channel == Channel::Sync {
                    self.close_current();
                    self.open(r.time_ps);
                } else {
                    self.click(r);
                }
            }
            SyncMode::Period { rep_period_fs } => {
                if r.channel == Channel::Sync {
                    return;
                }
                let k = ((r.time_ps as u128 * 1000) / rep_period_fs as u128) as u64;
                match self.current {
                    None => {
                        self.report.counts.reps += k;
                        self.rep = k;
                        self.open(Self::sync_time(rep_period_fs, k));
                    }
                    Some(_) if k > self.rep => {
                        self.close_current();
                        self.report.counts.reps += k - self.rep - 1;
                        self.rep = k;
                        self.open(Self::sync_time(rep_period_fs, k));
                    }
                    Some(_) => {}
                }
                self.click(r);
            }
        }
    }

    pub fn finish(mut self) -> ReduceReport {
        self.close_current();
        self.report.dropped += self.pending.len() as u64;
        self.report
    }
}

/// Reduces a tag stream to counts in one pass.
pub fn window_reduce<I>(tags: I, window: WindowSpec, mode: SyncMode, rep_period_fs: u64) -> Result<ReduceReport>
where
    I: IntoIterator<Item = Result<TagRecord>>,
{
    let mut red = WindowReducer::new(window, mode, rep_period_fs);
    for r in tags {
        red.push(r?);
    }
    Ok(red.finish())
}

/// `g² = n_coinc·R / (n_s·n_a)`.
pub fn g2_from_counts(n_s: u64, n_a: u64, n_coinc: u64, reps: u64) -> Result<f64> {
    if reps == 0 {
        return Err(Error::ZeroDenominator("g2: zero repetitions"));
    }
    if n_s == 0 || n_a == 0 {
        return Err(Error::ZeroDenominator("g2: zero singles"));
    }
    Ok(n_coinc as f64 * reps as f64 / (n_s as f64 * n_a as f64))
}

/// g² between Alice's "+" and Bob's "+" detector from a counts table
/// measured at α = β = 0.
pub fn g2_from_table(t: &CountsTable) -> Result<f64> {
    let coinc = t.n_pp + t.n_both_a_p + t.n_both_b_p + t.n_both_ab;
    g2_from_counts(t.singles_ap, t.singles_bp, coinc, t.reps)
}
