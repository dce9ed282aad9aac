//! Acceptance report: one line per criterion. A failing gated criterion
//! makes the process exit nonzero when `TBELL_ACCEPTANCE_STRICT` is set, so
//! a plain `cargo test` still runs the remaining targets.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbell::analytic::{
    chsh_analytic, g2_analytic, g2_closed_form, g2_for_visibility, optimal_squeezing, pattern_probs_avg,
    pattern_probs_fixed_phase, v_from_g2, violation_window, visibility_alpha0, visibility_alpha_pi4, OperatingPoint,
    VisibilityMode, DEFAULT_HORIZON,
};
use tbell::fitting::{
    emg, estimate_params, extract_dephasing, fit_g2_decay, RateInputs, Sample, FWHM_PER_SIGMA,
};
use tbell::fock::{oracle_pattern_probs, FockTruncation};
use tbell::model::{
    chsh_settings, Channel, CountsFile, CountsTable, ExperimentPlan, PhysicsParams, Settings, TagRecord,
};
use tbell::sim::{simulate_counts, simulate_tags};
use tbell::stats::{bell_confidence, e_from_counts, poisson_bootstrap, s_from_counts, BellRunData, SettingMap};
use tbell::tagproc::{
    create_ptag, g2_from_table, window_reduce, SyncMode, TagFileHeader, TagReader, TagSource, WindowSpec,
};

const ALPHAS: [f64; 2] = [0.01, 5.733e-7];

struct Report {
    failed: Vec<u8>,
}

impl Report {
    fn line(&mut self, id: u8, name: &str, pass: bool, detail: String) {
        println!("[{}] {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }

    fn soft(&mut self, id: u8, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "SOFT" };
        println!("[{tag}] {id:>2} {name} (report only): {detail}");
    }

    fn run(&mut self, id: u8, name: &str, f: impl FnOnce() -> tbell::Result<(bool, String)>) {
        let t = Instant::now();
        match f() {
            Ok((pass, detail)) => self.line(id, name, pass, format!("{detail} [{:.1} s]", t.elapsed().as_secs_f64())),
            Err(e) => self.line(id, name, false, format!("error: {e}")),
        }
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn reference() -> PhysicsParams {
    PhysicsParams::reference_setup()
}

fn reference_op() -> OperatingPoint {
    let p = reference();
    OperatingPoint {
        g: p.source.g,
        eta_a: p.detectors.eta_a,
        eta_b: p.detectors.eta_b0,
        p_dc: p.detectors.p_dc,
        sigma: p.source.sigma_tech,
    }
}

fn reference_counts() -> tbell::Result<CountsFile> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/bell_counts_0p66ps.json");
    CountsFile::from_json(&std::fs::read_to_string(path)?)
}

fn crit1() -> tbell::Result<(bool, String)> {
    let g2 = g2_closed_form(&reference_op().with_sigma(0.0))?;
    Ok((within(g2, 26.5, 0.2), format!("g2 = {g2:.3} (target 26.5 ± 0.2)")))
}

fn crit2() -> tbell::Result<(bool, String)> {
    let op = reference_op();
    let v0 = visibility_alpha0(&op)?;
    let v4 = visibility_alpha_pi4(&op, VisibilityMode::Quadrature)?;
    Ok((
        within(v0, 0.92, 0.01) && within(v4, 0.76, 0.01),
        format!("V0 = {v0:.4} (0.92 ± 0.01), V_pi/4 = {v4:.4} at sigma 0.31 (0.76 ± 0.01)"),
    ))
}

fn crit3() -> tbell::Result<(bool, String)> {
    let s = chsh_analytic(&reference(), 0.66, 0.31)?;
    Ok((within(s, 2.36, 0.02), format!("S(0.66 ps) = {s:.4} (2.36 ± 0.02)")))
}

fn crit4() -> tbell::Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < 1000 {
        let op = OperatingPoint {
            g: rng.random_range(1e-3..0.6),
            eta_a: rng.random_range(1e-3..=1.0),
            eta_b: rng.random_range(1e-3..=1.0),
            p_dc: rng.random_range(0.0..0.05),
            sigma: rng.random_range(0.0..1.5),
        };
        let v = visibility_alpha0(&op)?;
        worst = worst.max((v - v_from_g2(g2_closed_form(&op)?)).abs());
        n += 1;
    }
    Ok((worst <= 1e-12, format!("max |V0 - (g2-1)/(g2+1)| = {worst:.2e} over {n} draws")))
}

fn crit5() -> tbell::Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = Settings {
            alpha: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            phi_s: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            beta: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            phi_a: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
        };
        let g = rng.random_range(0.0..=0.3);
        let eta: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
        let p_dc = rng.random_range(0.0..0.01);
        let phi = rng.random_range(-3.2..3.2);
        let a = pattern_probs_fixed_phase(&s, g, eta, p_dc, phi)?;
        let b = oracle_pattern_probs(&s, g, eta, p_dc, phi, FockTruncation::default())?;
        for (x, y) in a.as_array().iter().zip(b.as_array()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok((worst <= 1e-10, format!("max |closed form - Fock| = {worst:.2e} over 100 draws")))
}

fn crit6() -> tbell::Result<(bool, String)> {
    let file = reference_counts()?;
    let data = BellRunData::from_entries(file.entries.iter().map(|e| (&e.settings, &e.counts)), SettingMap::default())?;
    let lo = bell_confidence(&data, ALPHAS[0])?;
    let hi = bell_confidence(&data, ALPHAS[1])?;
    let pass = within(lo.q_min, 0.788, 0.001)
        && within(lo.s_min, 2.30, 0.005)
        && within(hi.q_min, 0.779, 0.001)
        && within(hi.s_min, 2.23, 0.005)
        && within(lo.t_bar, 0.7951, 0.0005);
    Ok((
        pass,
        format!(
            "T = {:.5}, q_min(0.01) = {:.4} -> S_min {:.3}, q_min(5.733e-7) = {:.4} -> S_min {:.3}",
            lo.t_bar, lo.q_min, lo.s_min, hi.q_min, hi.s_min
        ),
    ))
}

fn crit7() -> tbell::Result<(bool, String)> {
    let ideal = PhysicsParams::ideal_setup();
    let w = violation_window(&ideal, DEFAULT_HORIZON)?;
    let (g_opt, w_opt) = optimal_squeezing(&ideal, 0.05, 0.4, DEFAULT_HORIZON)?;
    let pass = within(w.duration, 18.4, 0.3) && (0.16..=0.19).contains(&g_opt);
    Ok((
        pass,
        format!(
            "window at g = 0.172: {:.2} ps (18.4 ± 0.3); optimum g = {g_opt:.4} in [0.16, 0.19], window {:.2} ps",
            w.duration, w_opt.duration
        ),
    ))
}

fn crit8() -> tbell::Result<(bool, String)> {
    let g2 = g2_for_visibility(1.0 / SQRT_2);
    let exact = 3.0 + 2.0 * SQRT_2;
    let pass = (g2 - exact).abs() < 1e-12 && within(g2, 5.85, 0.025);
    Ok((pass, format!("g2 threshold = {g2:.4} (3 + 2 sqrt 2; quoted ~5.85)")))
}

/// Correlators, S with its bootstrap spread and the confidence bounds of a
/// CHSH block; `None` where undefined.
fn analysis(tables: &[CountsTable]) -> Vec<Option<f64>> {
    let mut out: Vec<Option<f64>> = tables.iter().map(|t| e_from_counts(t).ok()).collect();
    let settings = chsh_settings();
    let Ok(data) = BellRunData::from_entries(settings.iter().zip(tables), SettingMap::default()) else {
        return out;
    };
    match s_from_counts(&data) {
        Ok(s) => {
            let b = poisson_bootstrap(&data, s_from_counts, 1e-3, 1);
            out.extend([Some(s), Some(b.mean), Some(b.std)]);
        }
        Err(_) => out.extend([None, None, None]),
    }
    for a in ALPHAS {
        let c = bell_confidence(&data, a).ok();
        out.extend([c.map(|c| c.t_bar), c.map(|c| c.q_min), c.map(|c| c.s_min)]);
    }
    out
}

struct McCheck {
    s: Option<(f64, f64)>,
    g2: Option<(f64, f64)>,
    coincidences: u64,
}

fn mc_run(reps: u64, seed: u64) -> tbell::Result<McCheck> {
    let mut settings = chsh_settings().to_vec();
    settings.push(Settings::new(0.0, 0.0));
    let plan = ExperimentPlan {
        delays: vec![0.66],
        settings_list: settings,
        reps_per_setting: reps,
        ..Default::default()
    };
    let out = simulate_counts(&plan, &reference(), seed)?;
    let chsh: Vec<CountsTable> = out.entries[..4].iter().map(|e| e.counts).collect();
    let coincidences = chsh.iter().map(|c| c.coincidences()).sum();
    let data = BellRunData::from_entries(chsh_settings().iter().zip(&chsh), SettingMap::default())?;
    let s = s_from_counts(&data)
        .ok()
        .map(|s| (s, poisson_bootstrap(&data, s_from_counts, 1e-3, seed).std));
    let zero = out.entries[4].counts;
    let g2 = g2_from_table(&zero)
        .ok()
        .map(|g| (g, poisson_bootstrap(&zero, g2_from_table, 1e-3, seed).std));
    Ok(McCheck { s, g2, coincidences })
}

fn crit9() -> tbell::Result<(bool, String)> {
    let params = reference();
    let s_ref = chsh_analytic(&params, 0.66, params.source.sigma_tech)?;
    let g2_ref = g2_analytic(&params, 0.66)?;

    let short = mc_run(10_000_000, 2024)?;
    let short_msg = match short.s {
        Some((s, sd)) => format!("R=1e7: {} coincidences, S = {s:.3} ± {sd:.3}", short.coincidences),
        None => format!("R=1e7: {} coincidences, S undefined", short.coincidences),
    };

    // Repetitions giving the reference data's mean coincidence count per setting.
    let file = reference_counts()?;
    let target = file.entries.iter().map(|e| e.counts.coincidences()).sum::<u64>() as f64 / 4.0;
    let op = OperatingPoint::at_delay(&params, 0.66)?;
    let mut p_coinc = 0.0;
    for s in chsh_settings() {
        let d = pattern_probs_avg(&s, &op)?;
        p_coinc += d.prob_where(|c| (c.bits() & 0b1100) != 0 && (c.bits() & 0b0011) != 0) / 4.0;
    }
    let reps = ((target / p_coinc / 1e9).ceil() * 1e9) as u64;
    let full = mc_run(reps, 2024)?;
    let (s, s_sd) = full.s.ok_or(tbell::Error::ZeroPostSelection)?;
    let (g2, g2_sd) = full.g2.ok_or(tbell::Error::NoClicks)?;
    let pass = (s - s_ref).abs() <= 3.0 * s_sd && (g2 - g2_ref).abs() <= 3.0 * g2_sd && (0.015..=0.05).contains(&s_sd);
    Ok((
        pass,
        format!(
            "R={reps:.1e} ({} coincidences, {target:.0} per setting as in the reference data): S = {s:.4} ± {s_sd:.4} \
             vs {s_ref:.4}, g2 = {g2:.2} ± {g2_sd:.2} vs {g2_ref:.2}; {short_msg}",
            full.coincidences
        ),
    ))
}

fn crit10(dir: &Path) -> tbell::Result<(bool, String)> {
    let mut bright = reference();
    bright.source.g = 0.2;
    bright.detectors.eta_b0 = 0.05;
    let mut identical = true;
    let mut defined = 0;
    for (params, seed) in [(reference(), 10u64), (bright, 11)] {
        let plan = ExperimentPlan {
            delays: vec![0.66],
            settings_list: chsh_settings().to_vec(),
            reps_per_setting: 1_000_000,
            ..Default::default()
        };
        let direct = simulate_counts(&plan, &params, seed)?;
        let mut reduced = Vec::new();
        for si in 0..4 {
            let path = dir.join(format!("s{si}.ptag"));
            let f = std::fs::File::create(&path)?;
            simulate_tags(&plan, &params, seed, 0.0, si, 0, std::io::BufWriter::new(f))?;
            let src = TagSource::open(&path)?;
            let period = src.rep_period_fs().unwrap_or(plan.rep_period_fs());
            let r = window_reduce(src, WindowSpec::from_plan(&plan)?, SyncMode::Channel, period)?;
            reduced.push(r.counts);
        }
        let tables: Vec<CountsTable> = direct.entries.iter().map(|e| e.counts).collect();
        let a = analysis(&tables);
        let b = analysis(&reduced);
        identical &= tables == reduced
            && a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| x.map(f64::to_bits) == y.map(f64::to_bits));
        defined += a.iter().filter(|v| v.is_some()).count();
    }
    Ok((
        identical,
        format!("tables and {defined} analysis values bit-identical at R=1e6 (reference and bright source)"),
    ))
}

fn crit11() -> tbell::Result<(bool, String)> {
    let irf = 0.2;
    let tau = 3.78;
    let samples: Vec<Sample> = (0..160)
        .map(|i| {
            let t = -2.0 + 0.1 * i as f64;
            Sample::new(t, 1.0 + 25.5 * emg(t, tau, irf / FWHM_PER_SIGMA))
        })
        .collect();
    let fit = fit_g2_decay(&samples, irf)?;
    let tau_err = (fit.tau / tau - 1.0).abs();

    let params = reference();
    let delays: Vec<f64> = (0..25).map(|i| 0.3 + 0.3 * i as f64).collect();
    let s0 = delays
        .iter()
        .map(|&dt| chsh_analytic(&params, dt, params.source.sigma_tech))
        .collect::<tbell::Result<Vec<_>>>()?;
    let grid: Vec<f64> = std::iter::once(0.0).chain((0..30).map(|k| 1e-3 * 1.3f64.powi(k))).collect();
    let mut worst: f64 = 0.0;
    let mut got = Vec::new();
    for gamma in [0.0, 0.05, 0.2] {
        let samples: Vec<Sample> = delays
            .iter()
            .zip(&s0)
            .map(|(&dt, &s)| Sample::new(dt, s / 2.0 * (1.0 + (-2.0 * gamma * dt).exp())))
            .collect();
        let f = extract_dephasing(&samples, &s0, &grid)?;
        let err = if gamma == 0.0 { f.gamma / 0.05 } else { (f.gamma / gamma - 1.0).abs() };
        worst = worst.max(err);
        got.push(format!("{:.4}", f.gamma));
    }
    Ok((
        tau_err <= 0.01 && worst <= 0.05,
        format!(
            "tau = {:.4} ps (rel. error {tau_err:.1e}); gamma for (0, 0.05, 0.2) = ({}), worst rel. error {worst:.1e}",
            fit.tau,
            got.join(", ")
        ),
    ))
}

fn crit12() -> tbell::Result<(bool, String)> {
    let est = estimate_params(&RateInputs {
        stokes_rate_hz: 18000.0,
        antistokes_neg_delay_rate_hz: 720.0,
        coinc_rate_hz: 4.58,
        rep_rate_hz: 80e6,
        eta_a: 0.1,
    })?;
    let pass = within(est.g, 0.047, 0.001)
        && within(est.p_dc / 9e-6, 1.0, 0.01)
        && within(est.eta_b0 / 2.54e-4, 1.0, 0.01);
    Ok((
        pass,
        format!("g = {:.4}, p_dc = {:.3e}, eta_B = {:.3e}", est.g, est.p_dc, est.eta_b0),
    ))
}

fn crit13(dir: &Path) -> tbell::Result<(bool, String)> {
    let period_fs = ExperimentPlan::default().rep_period_fs();
    let path = dir.join("bench.ptag");
    let mut w = create_ptag(&path, &TagFileHeader::new(period_fs))?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let reps = 5_000_000u64;
    let mut records = 0u64;
    for k in 0..reps {
        let sync = (k as u128 * period_fs as u128 / 1000) as u64;
        w.write(TagRecord {
            time_ps: sync,
            channel: Channel::Sync,
        })?;
        records += 1;
        if rng.random_bool(0.5) {
            let ch = Channel::ALL[rng.random_range(1..5)];
            w.write(TagRecord {
                time_ps: sync + 3000,
                channel: ch,
            })?;
            records += 1;
        }
    }
    w.finish()?;
    let bytes = std::fs::read(&path)?;
    let t = Instant::now();
    let r = window_reduce(
        TagReader::new(bytes.as_slice())?,
        WindowSpec::new(3000.0, 1000.0)?,
        SyncMode::Channel,
        period_fs,
    )?;
    let rate = records as f64 / t.elapsed().as_secs_f64();
    Ok((
        rate >= 1e7 && r.counts.reps == reps,
        format!("{records} records reduced at {:.2e} records/s (target 1e7)", rate),
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut report = Report { failed: Vec::new() };
    report.run(1, "g2 closed form", crit1);
    report.run(2, "visibilities", crit2);
    report.run(3, "CHSH prediction", crit3);
    report.run(4, "visibility identity", crit4);
    report.run(5, "oracle equivalence", crit5);
    report.run(6, "finite statistics", crit6);
    report.run(7, "ideal-conditions window", crit7);
    report.run(8, "g2 threshold", crit8);
    report.run(9, "Monte Carlo consistency", crit9);
    report.run(10, "pipeline identity", || crit10(dir.path()));
    report.run(11, "fit recovery", crit11);
    report.run(12, "parameter estimation", crit12);
    let t = Instant::now();
    match crit13(dir.path()) {
        Ok((pass, detail)) => report.soft(13, "tag throughput", pass, format!("{detail} [{:.1} s]", t.elapsed().as_secs_f64())),
        Err(e) => report.soft(13, "tag throughput", false, format!("error: {e}")),
    }
    if report.failed.is_empty() {
        println!("acceptance: all gated criteria pass");
    } else {
        println!("acceptance: failing criteria {:?}", report.failed);
        if std::env::var_os("TBELL_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
