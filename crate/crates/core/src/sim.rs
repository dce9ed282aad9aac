//! Monte-Carlo experiment generator.
//!
//! Each repetition draws a run phase φ ~ N(0, σ_tot²) and one click pattern
//! from the distribution at that phase. Random numbers come from ChaCha
//! streams keyed on (seed, setting index, delay index) with one stream per
//! fixed block of repetitions, so outcomes do not depend on how the work is
//! split across threads.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{pattern_probs_fixed_phase, OperatingPoint};
use crate::error::{Error, Result};
use crate::model::{
    Channel, ClickPattern, CountsEntry, CountsFile, CountsTable, ExperimentPlan, Mode, OutcomeMap, PhysicsParams, Settings,
    TagRecord,
};
use crate::tagproc::{TagFileHeader, TagWriter};

const GRID_POINTS: usize = 4096;
const GRID_MAX_POINTS: usize = 1 << 20;
const GRID_TOL: f64 = 1e-9;
const CHUNK: u64 = 1 << 20;

/// 32-bit words reserved per repetition on the jitter stream.
const JITTER_WORDS: u128 = 64;

/// Counts for one (setting, delay) block.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEntry {
    pub setting_index: usize,
    pub delay_index: usize,
    pub settings: Settings,
    pub delta_t: f64,
    /// Repetitions per click pattern, indexed by pattern index.
    pub tallies: [u64; 16],
    pub counts: CountsTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub seed: u64,
    pub entries: Vec<SimEntry>,
}

impl From<&SimOutcome> for CountsFile {
    fn from(o: &SimOutcome) -> Self {
        CountsFile {
            seed: Some(o.seed),
            entries: o
                .entries
                .iter()
                .map(|e| CountsEntry {
                    settings: e.settings,
                    delta_t: e.delta_t,
                    counts: e.counts,
                })
                .collect(),
        }
    }
}

impl SimOutcome {
    pub fn entry(&self, setting_index: usize, delay_index: usize) -> Option<&SimEntry> {
        self.entries
            .iter()
            .find(|e| e.setting_index == setting_index && e.delay_index == delay_index)
    }
}

/// Pattern distributions tabulated on a φ grid, sampled by linear
/// interpolation.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    sigma: f64,
    lo: f64,
    step: f64,
    /// Wrap φ into one π period instead of clamping to the grid.
    periodic: bool,
    nodes: Vec<[f64; 16]>,
}

impl PhaseGrid {
    /// Tabulates the pattern distribution over ±6σ (one full period when
    /// that is wider), refining until the interpolation error bound
    /// `h²/8 · max|f''|` is below 1e-9.
    pub fn new(settings: &Settings, op: &OperatingPoint) -> Result<Self> {
        let eval = |phi: f64| -> Result<[f64; 16]> {
            Ok(*pattern_probs_fixed_phase(settings, op.g, op.efficiencies(), op.p_dc, phi)?.as_array())
        };
        if op.sigma == 0.0 {
            return Ok(PhaseGrid {
                sigma: 0.0,
                lo: 0.0,
                step: 1.0,
                periodic: false,
                nodes: vec![eval(0.0)?],
            });
        }
        let periodic = 6.0 * op.sigma > FRAC_PI_2;
        let (lo, hi) = if periodic {
            (-FRAC_PI_2, FRAC_PI_2)
        } else {
            (-6.0 * op.sigma, 6.0 * op.sigma)
        };
        let mut n = GRID_POINTS;
        loop {
            let step = (hi - lo) / (n - 1) as f64;
            let nodes = (0..n)
                .into_par_iter()
                .map(|i| eval(lo + i as f64 * step))
                .collect::<Result<Vec<_>>>()?;
            let grid = PhaseGrid {
                sigma: op.sigma,
                lo,
                step,
                periodic,
                nodes,
            };
            if grid.error_bound() < GRID_TOL || n >= GRID_MAX_POINTS {
                return Ok(grid);
            }
            n = 2 * n - 1;
        }
    }

    /// `h²/8 · max|f''|` from second differences of the tabulated values.
    pub fn error_bound(&self) -> f64 {
        self.nodes
            .windows(3)
            .flat_map(|w| (0..16).map(move |k| (w[0][k] - 2.0 * w[1][k] + w[2][k]).abs()))
            .fold(0.0, f64::max)
            / 8.0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Interpolated, renormalized distribution at `phi`.
    pub fn distribution(&self, phi: f64) -> [f64; 16] {
        if self.nodes.len() == 1 {
            return self.nodes[0];
        }
        let phi = if self.periodic {
            (phi + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2
        } else {
            phi
        };
        let x = ((phi - self.lo) / self.step).clamp(0.0, (self.nodes.len() - 1) as f64);
        let i = (x as usize).min(self.nodes.len() - 2);
        let f = x - i as f64;
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let mut p: [f64; 16] = std::array::from_fn(|k| a[k] + f * (b[k] - a[k]));
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Non-vacuum pattern for `u` uniform on `[0, 1 − p[0])`.
fn sample_clicked(p: &[f64; 16], u: f64) -> ClickPattern {
    let mut acc = 0.0;
    for (k, v) in p.iter().enumerate().skip(1) {
        acc += v;
        if u < acc {
            return ClickPattern::from_index(k);
        }
    }
    // Round-off left u above the last partial sum.
    let last = p.iter().rposition(|&v| v > 0.0).filter(|&k| k > 0).unwrap_or(15);
    ClickPattern::from_index(last)
}

fn block_key(seed: u64, setting_index: usize, delay_index: usize) -> [u8; 32] {
    let mut k = [0u8; 32];
    k[0..8].copy_from_slice(&seed.to_le_bytes());
    k[8..16].copy_from_slice(&(setting_index as u64).to_le_bytes());
    k[16..24].copy_from_slice(&(delay_index as u64).to_le_bytes());
    k
}

fn unit_open(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Outcome source for one (setting, delay) block.
///
/// Repetitions are grouped in blocks of `CHUNK`, each with its own stream.
/// Within a block, candidate repetitions are reached by geometric skips with
/// the largest click probability `p_max` over the phase grid; a candidate
/// draws φ and is kept as a click event with probability
/// `(1 − P₀(φ)) / p_max`, then draws its pattern from the click-conditional
/// distribution. This thinning yields the same per-repetition law as drawing
/// φ and a pattern for every repetition, at a cost proportional to the click
/// rate.
#[derive(Debug, Clone)]
pub struct RepSampler {
    grid: PhaseGrid,
    key: [u8; 32],
    p_max: f64,
    log_miss: f64,
}

impl RepSampler {
    pub fn new(grid: PhaseGrid, seed: u64, setting_index: usize, delay_index: usize) -> Self {
        let p_max = grid
            .nodes
            .iter()
            .map(|p| {
                let s: f64 = p.iter().sum();
                (s - p[0]) / s
            })
            .fold(0.0, f64::max);
        // Headroom for the interpolation renormalization.
        let p_max = (p_max * (1.0 + 1e-9)).min(1.0);
        RepSampler {
            grid,
            key: block_key(seed, setting_index, delay_index),
            p_max,
            log_miss: (-p_max).ln_1p(),
        }
    }

    fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng
    }

    /// Largest per-repetition click probability over the grid.
    pub fn click_bound(&self) -> f64 {
        self.p_max
    }

    /// Click events `(repetition, pattern)` of block `b`, in order.
    fn block_events(&self, b: u64, reps: u64, out: &mut Vec<(u64, ClickPattern)>) {
        if self.p_max == 0.0 {
            return;
        }
        let end = ((b + 1) * CHUNK).min(reps);
        let mut rng = self.stream(2 + b);
        let mut pos = b * CHUNK;
        loop {
            if self.p_max < 1.0 {
                let skip = (unit_open(rng.next_u64()).ln() / self.log_miss).floor();
                if skip >= (end - pos) as f64 {
                    return;
                }
                pos += skip as u64;
            }
            if pos >= end {
                return;
            }
            let u1 = unit_open(rng.next_u64());
            let u2 = unit(rng.next_u64());
            let phi = self.grid.sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
            let p = self.grid.distribution(phi);
            let click = 1.0 - p[0];
            let u = unit(rng.next_u64()) * self.p_max;
            if u < click {
                // u / click is uniform on [0, 1) given acceptance.
                out.push((pos, sample_clicked(&p, u)));
            }
            pos += 1;
        }
    }

    /// Click events in repetitions `start..end`; vacuum repetitions are
    /// omitted.
    pub fn events(&self, start: u64, end: u64) -> Vec<(u64, ClickPattern)> {
        let mut out = Vec::new();
        if start >= end {
            return out;
        }
        for b in start / CHUNK..end.div_ceil(CHUNK) {
            self.block_events(b, end, &mut out);
        }
        out.retain(|&(r, _)| r >= start);
        out
    }

    /// Patterns of repetitions `start..end`, in order.
    pub fn patterns(&self, start: u64, end: u64) -> impl Iterator<Item = ClickPattern> {
        let mut events = self.events(start, end).into_iter().peekable();
        (start..end).map(move |r| match events.peek() {
            Some(&(at, p)) if at == r => {
                events.next();
                p
            }
            _ => ClickPattern::from_index(0),
        })
    }

    /// Per-pattern tallies over repetitions `0..reps`, computed in parallel.
    pub fn tallies(&self, reps: u64) -> [u64; 16] {
        let mut t = (0..reps.div_ceil(CHUNK))
            .into_par_iter()
            .map_init(Vec::new, |buf, b| {
                buf.clear();
                self.block_events(b, reps, buf);
                let mut t = [0u64; 16];
                buf.iter().for_each(|(_, p)| t[p.index()] += 1);
                t
            })
            .reduce(
                || [0u64; 16],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        t[0] = reps - t.iter().sum::<u64>();
        t
    }

    /// Gaussian timing offsets for repetition `rep`, truncated to `±bound`.
    fn jitter(&self, rep: u64, std_ps: f64, bound: f64, out: &mut [f64; 4]) {
        if std_ps == 0.0 {
            *out = [0.0; 4];
            return;
        }
        let mut rng = self.stream(1);
        rng.set_word_pos(rep as u128 * JITTER_WORDS);
        let mut k = 0;
        while k < 4 {
            let r = (-2.0 * unit_open(rng.next_u64()).ln()).sqrt();
            let t = 2.0 * PI * unit(rng.next_u64());
            for z in [r * t.cos(), r * t.sin()] {
                let x = std_ps * z;
                if k < 4 && x.abs() <= bound {
                    out[k] = x;
                    k += 1;
                }
            }
        }
    }
}

/// Runs every (setting, delay) block of the plan.
pub fn simulate_counts(plan: &ExperimentPlan, params: &PhysicsParams, seed: u64) -> Result<SimOutcome> {
    let plan = plan.clone().validate()?;
    let params = params.validate()?;
    let map = OutcomeMap::default();
    let mut entries = Vec::new();
    for (di, &dt) in plan.effective_delays().iter().enumerate() {
        let op = OperatingPoint::at_delay(&params, dt)?;
        for (si, s) in plan.effective_settings().iter().enumerate() {
            let sampler = RepSampler::new(PhaseGrid::new(s, &op)?, seed, si, di);
            let tallies = sampler.tallies(plan.reps_per_setting);
            entries.push(SimEntry {
                setting_index: si,
                delay_index: di,
                settings: *s,
                delta_t: dt,
                tallies,
                counts: CountsTable::from_pattern_tallies(&tallies, &map),
            });
        }
    }
    Ok(SimOutcome { seed, entries })
}

/// Tag channel of each detected mode under `map`.
fn channels(map: &OutcomeMap) -> [(Mode, Channel); 4] {
    [
        (map.alice_plus, Channel::AlicePlus),
        (map.alice_minus(), Channel::AliceMinus),
        (map.bob_plus, Channel::BobPlus),
        (map.bob_minus(), Channel::BobMinus),
    ]
}

/// Timing of emitted streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagTiming {
    pub rep_period_fs: u64,
    /// Click time after its sync, before jitter (ps).
    pub window_offset: f64,
    pub jitter_std_ps: f64,
}

impl TagTiming {
    pub fn from_plan(plan: &ExperimentPlan, jitter_std_ps: f64) -> Result<Self> {
        if !(jitter_std_ps >= 0.0 && jitter_std_ps.is_finite()) {
            return Err(Error::param("jitter_std_ps", "must be non-negative"));
        }
        Ok(TagTiming {
            rep_period_fs: plan.rep_period_fs(),
            window_offset: plan.window_offset,
            jitter_std_ps,
        })
    }

    /// Jitter is truncated so that a click never leaves its repetition.
    fn jitter_bound(&self) -> f64 {
        let period = self.rep_period_fs as f64 / 1000.0;
        self.window_offset.min(period - self.window_offset - 1.0)
    }
}

/// Writes sync and click records for a sequence of per-repetition patterns.
/// Jitter, when enabled, is drawn from `jitter_source`'s dedicated stream.
pub fn emit_tags<W: Write>(
    out: &mut TagWriter<W>,
    timing: &TagTiming,
    map: &OutcomeMap,
    patterns: impl IntoIterator<Item = ClickPattern>,
    jitter_source: Option<&RepSampler>,
) -> Result<u64> {
    let chans = channels(map);
    let bound = timing.jitter_bound();
    let mut jit = [0.0; 4];
    let mut clicks: Vec<TagRecord> = Vec::with_capacity(4);
    let mut written = 0;
    for (k, pat) in patterns.into_iter().enumerate() {
        let k = k as u64;
        let sync = ((k as u128 * timing.rep_period_fs as u128) / 1000) as u64;
        out.write(TagRecord {
            time_ps: sync,
            channel: Channel::Sync,
        })?;
        written += 1;
        if pat.bits() == 0 {
            continue;
        }
        match jitter_source {
            Some(s) => s.jitter(k, timing.jitter_std_ps, bound, &mut jit),
            None => jit = [0.0; 4],
        }
        clicks.clear();
        for (i, (mode, ch)) in chans.iter().enumerate() {
            if pat.fired(*mode) {
                let t = (sync as f64 + timing.window_offset + jit[i]).round() as u64;
                clicks.push(TagRecord {
                    time_ps: t,
                    channel: *ch,
                });
            }
        }
        clicks.sort_by_key(|r| r.time_ps);
        for r in &clicks {
            out.write(*r)?;
        }
        written += clicks.len() as u64;
    }
    Ok(written)
}

/// Simulates one (setting, delay) block of the plan as a tag stream and
/// returns the number of records written.
///
/// With zero jitter, reducing the stream with the plan's window reproduces
/// the corresponding [`simulate_counts`] entry exactly.
pub fn simulate_tags<W: Write>(
    plan: &ExperimentPlan,
    params: &PhysicsParams,
    seed: u64,
    jitter_std_ps: f64,
    setting_index: usize,
    delay_index: usize,
    sink: W,
) -> Result<u64> {
    let plan = plan.clone().validate()?;
    let params = params.validate()?;
    let settings = plan.effective_settings();
    let delays = plan.effective_delays();
    let s = settings
        .get(setting_index)
        .ok_or_else(|| Error::param("setting_index", "out of range"))?;
    let dt = *delays
        .get(delay_index)
        .ok_or_else(|| Error::param("delay_index", "out of range"))?;
    let op = OperatingPoint::at_delay(&params, dt)?;
    let sampler = RepSampler::new(PhaseGrid::new(s, &op)?, seed, setting_index, delay_index);
    let timing = TagTiming::from_plan(&plan, jitter_std_ps)?;
    let mut w = TagWriter::new(sink, &TagFileHeader::new(timing.rep_period_fs))?;
    let n = emit_tags(
        &mut w,
        &timing,
        &OutcomeMap::default(),
        sampler.patterns(0, plan.reps_per_setting),
        Some(&sampler),
    )?;
    w.finish()?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagproc::{window_reduce, SyncMode, TagReader, WindowSpec};

    fn small_plan(reps: u64) -> ExperimentPlan {
        ExperimentPlan {
            reps_per_setting: reps,
            delays: vec![0.66],
            settings_list: vec![Settings::new(0.0, 0.0)],
            ..Default::default()
        }
    }

    fn bright() -> PhysicsParams {
        let mut p = PhysicsParams::reference_setup();
        p.source.g = 0.3;
        p.detectors.eta_b0 = 0.3;
        p.detectors.p_dc = 1e-3;
        p
    }

    #[test]
    fn vacuum_without_dark_counts_is_silent() {
        let mut p = PhysicsParams::reference_setup();
        p.source.g = 0.0;
        p.detectors.p_dc = 0.0;
        let out = simulate_counts(&small_plan(10_000), &p, 1).unwrap();
        let c = out.entries[0].counts;
        assert_eq!(c.reps, 10_000);
        assert_eq!(c.map_counts(|_| 0), c.map_counts(|v| v));
        assert_eq!(out.entries[0].tallies[0], 10_000);
    }

    #[test]
    fn deterministic_for_seed() {
        let p = bright();
        let a = simulate_counts(&small_plan(200_000), &p, 7).unwrap();
        let b = simulate_counts(&small_plan(200_000), &p, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_counts(&small_plan(200_000), &p, 8).unwrap();
        assert_ne!(a.entries[0].tallies, c.entries[0].tallies);
    }

    #[test]
    fn chunking_does_not_change_patterns() {
        let s = Settings::new(0.3, 0.2);
        let op = OperatingPoint::at_delay(&bright(), 0.0).unwrap();
        let sampler = RepSampler::new(PhaseGrid::new(&s, &op).unwrap(), 3, 0, 0);
        let whole: Vec<_> = sampler.patterns(0, 1000).collect();
        let mut parts: Vec<_> = sampler.patterns(0, 337).collect();
        parts.extend(sampler.patterns(337, 1000));
        assert_eq!(whole, parts);
        let mut t = [0u64; 16];
        whole.iter().for_each(|p| t[p.index()] += 1);
        assert_eq!(sampler.tallies(1000), t);
    }

    #[test]
    fn thinned_tallies_follow_averaged_distribution() {
        let s = Settings::new(std::f64::consts::FRAC_PI_4, -std::f64::consts::FRAC_PI_8);
        let op = OperatingPoint::at_delay(&bright(), 0.66).unwrap();
        let sampler = RepSampler::new(PhaseGrid::new(&s, &op).unwrap(), 9, 0, 0);
        let reps = 3_000_000;
        let t = sampler.tallies(reps);
        let p = crate::analytic::pattern_probs_avg(&s, &op).unwrap();
        for (k, (&n, &q)) in t.iter().zip(p.as_array()).enumerate() {
            let mean = q * reps as f64;
            let sd = (mean * (1.0 - q)).sqrt().max(1.0);
            assert!((n as f64 - mean).abs() < 5.0 * sd, "pattern {k}: {n} vs {mean:.1}");
        }
    }

    #[test]
    fn grid_interpolation_is_accurate() {
        let s = Settings::new(std::f64::consts::FRAC_PI_4, 0.4);
        let op = OperatingPoint::at_delay(&bright(), 0.0).unwrap();
        let grid = PhaseGrid::new(&s, &op).unwrap();
        assert!(grid.error_bound() < 1e-9);
        for phi in [-1.1, -0.3, 0.0123, 0.77, 1.5] {
            let exact =
                pattern_probs_fixed_phase(&s, op.g, op.efficiencies(), op.p_dc, phi).unwrap();
            let approx = grid.distribution(phi);
            for (a, b) in exact.as_array().iter().zip(approx) {
                assert!((a - b).abs() < 1e-9, "phi {phi}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn wide_phase_spread_uses_one_period() {
        let s = Settings::new(std::f64::consts::FRAC_PI_4, 0.4);
        let op = OperatingPoint::at_delay(&bright(), 0.0).unwrap().with_sigma(2.0);
        let grid = PhaseGrid::new(&s, &op).unwrap();
        let a = grid.distribution(0.4);
        let b = grid.distribution(0.4 + 3.0 * PI);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_pattern_stream() {
        let plan = ExperimentPlan::default();
        let timing = TagTiming::from_plan(&plan, 0.0).unwrap();
        let mut w = TagWriter::new(Vec::new(), &TagFileHeader::new(timing.rep_period_fs)).unwrap();
        let a_only = ClickPattern::new(true, false, false, false);
        let n = emit_tags(&mut w, &timing, &OutcomeMap::default(), [a_only; 3], None).unwrap();
        assert_eq!(n, 6);
        let recs: Vec<_> = TagReader::new(w.finish().unwrap().as_slice())
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        let syncs = recs.iter().filter(|r| r.channel == Channel::Sync).count();
        let ones = recs.iter().filter(|r| r.channel == Channel::AlicePlus).count();
        assert_eq!((syncs, ones), (3, 3));
        assert_eq!(recs[2].time_ps, 12391);
        assert_eq!(recs[3].time_ps, 15391);
    }

    #[test]
    fn zero_jitter_tags_reproduce_counts() {
        let plan = small_plan(50_000);
        let p = bright();
        let counts = simulate_counts(&plan, &p, 11).unwrap().entries[0].counts;
        let mut buf = Vec::new();
        simulate_tags(&plan, &p, 11, 0.0, 0, 0, &mut buf).unwrap();
        let reader = TagReader::new(buf.as_slice()).unwrap();
        let period = reader.header().rep_period_fs;
        let r = window_reduce(
            reader,
            WindowSpec::from_plan(&plan).unwrap(),
            SyncMode::Channel,
            period,
        )
        .unwrap();
        assert_eq!(r.counts, counts);
        assert_eq!(r.dropped, 0);
    }

    #[test]
    fn jitter_tails_fall_outside_windows() {
        let plan = small_plan(200_000);
        let p = bright();
        let tallies = simulate_counts(&plan, &p, 12).unwrap().entries[0].tallies;
        let clicks: u64 = tallies
            .iter()
            .enumerate()
            .map(|(k, n)| n * (k as u32).count_ones() as u64)
            .sum();
        let mut buf = Vec::new();
        simulate_tags(&plan, &p, 12, 500.0, 0, 0, &mut buf).unwrap();
        let reader = TagReader::new(buf.as_slice()).unwrap();
        let period = reader.header().rep_period_fs;
        let r = window_reduce(reader, WindowSpec::from_plan(&plan).unwrap(), SyncMode::Channel, period).unwrap();
        let q = libm::erfc(2.0 / std::f64::consts::SQRT_2);
        let mean = clicks as f64 * q;
        let sd = (mean * (1.0 - q)).sqrt();
        assert!((r.dropped as f64 - mean).abs() < 4.0 * sd, "{} dropped of {clicks}, expected {mean:.0}", r.dropped);
    }
}
