//! Domain types shared by every module: physical parameters, measurement
//! settings, acquisition plans, count tables and click patterns.
//!
//! Units: times in picoseconds, rates in 1/ps, angles in radians.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-mode squeezed source with technical phase noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// Squeezing parameter.
    pub g: f64,
    /// Standard deviation of the run-to-run technical phase (rad).
    #[serde(default)]
    pub sigma_tech: f64,
}

impl SourceParams {
    pub fn tanh_g(&self) -> f64 {
        self.g.tanh()
    }

    /// Pair-number ratio `tanh²(g)` of the geometric pair distribution.
    pub fn lambda(&self) -> f64 {
        let t = self.g.tanh();
        t * t
    }

    /// Mean photon number per Stokes mode, `sinh²(g)`.
    pub fn mean_photon_number(&self) -> f64 {
        let s = self.g.sinh();
        s * s
    }
}

/// Click-detector model. Both detectors of an arm share one efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    pub eta_a: f64,
    /// Bob-side efficiency at zero delay, including vibration to anti-Stokes conversion.
    pub eta_b0: f64,
    /// Dark-count probability per detection window and detector.
    pub p_dc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationParams {
    /// Phonon lifetime (ps).
    pub tau_phonon: f64,
    /// Pure-dephasing rate (1/ps).
    #[serde(default)]
    pub gamma_deph: f64,
    /// Thermal occupancy of the vibrational mode (metadata for noise presets).
    #[serde(default)]
    pub n_th: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsParams {
    pub source: SourceParams,
    pub detectors: DetectorParams,
    pub vibration: VibrationParams,
}

fn check_probability(field: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(field, format!("efficiency out of [0,1]: {v}")));
    }
    Ok(())
}

fn check_nonneg(field: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::param(field, format!("must be finite and >= 0, got {v}")));
    }
    Ok(())
}

impl PhysicsParams {
    /// Operating point reconstructed from the measured rates of the
    /// diamond experiment: g = 0.047, η_A = 0.1, η_B0 = 2.54e-4,
    /// p_dc = 9e-6, σ = 0.31 rad, τ = 3.78 ps.
    pub fn reference_setup() -> Self {
        PhysicsParams {
            source: SourceParams {
                g: 0.047,
                sigma_tech: 0.31,
            },
            detectors: DetectorParams {
                eta_a: 0.1,
                eta_b0: 2.54e-4,
                p_dc: 9e-6,
            },
            vibration: VibrationParams {
                tau_phonon: 3.78,
                gamma_deph: 0.0,
                n_th: 1.5e-3,
            },
        }
    }

    /// Unit efficiencies, thermal anti-Stokes noise only (p_dc = n_th = 1.7e-3),
    /// optimal squeezing g = 0.172, no phase noise.
    pub fn ideal_setup() -> Self {
        PhysicsParams {
            source: SourceParams {
                g: 0.172,
                sigma_tech: 0.0,
            },
            detectors: DetectorParams {
                eta_a: 1.0,
                eta_b0: 1.0,
                p_dc: 1.7e-3,
            },
            vibration: VibrationParams {
                tau_phonon: 3.78,
                gamma_deph: 0.0,
                n_th: 1.7e-3,
            },
        }
    }

    /// Checks every range constraint, returning the bundle unchanged on success.
    pub fn validate(self) -> Result<Self> {
        check_nonneg("source.g", self.source.g)?;
        check_nonneg("source.sigma_tech", self.source.sigma_tech)?;
        check_probability("detectors.eta_a", self.detectors.eta_a)?;
        check_probability("detectors.eta_b0", self.detectors.eta_b0)?;
        let p = self.detectors.p_dc;
        if !(0.0..1.0).contains(&p) {
            return Err(Error::param(
                "detectors.p_dc",
                format!("dark-count probability out of [0,1): {p}"),
            ));
        }
        let tau = self.vibration.tau_phonon;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param(
                "vibration.tau_phonon",
                format!("nonpositive lifetime: {tau}"),
            ));
        }
        check_nonneg("vibration.gamma_deph", self.vibration.gamma_deph)?;
        check_nonneg("vibration.n_th", self.vibration.n_th)?;
        if self.source.lambda() >= 1.0 {
            return Err(Error::param("source.g", "tanh²(g) rounds to 1"));
        }
        Ok(self)
    }

    /// Total phase variance after a storage time `delta_t`: σ_tech² + γ·Δt.
    pub fn sigma_total(&self, delta_t: f64) -> f64 {
        let s = self.source.sigma_tech;
        (s * s + self.vibration.gamma_deph * delta_t.max(0.0)).sqrt()
    }
}

/// Local measurement settings. Alice rotates by `alpha` with azimuth `phi_s`,
/// Bob by `beta` with azimuth `phi_a`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub alpha: f64,
    #[serde(default)]
    pub phi_s: f64,
    pub beta: f64,
    #[serde(default)]
    pub phi_a: f64,
}

impl Settings {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Settings {
            alpha,
            beta,
            ..Default::default()
        }
    }

    /// Settings from the variable-retarder phases: θ = 2α, φ = 2β.
    pub fn from_retarders(theta: f64, phi: f64) -> Self {
        Settings::new(theta / 2.0, phi / 2.0)
    }

    pub fn theta(&self) -> f64 {
        2.0 * self.alpha
    }

    pub fn phi_retarder(&self) -> f64 {
        2.0 * self.beta
    }
}

fn default_rep_period() -> f64 {
    // 1 / 80.7 MHz, rounded to 0.1 ps
    12391.6
}
fn default_bin_separation() -> f64 {
    3000.0
}
fn default_window_halfwidth() -> f64 {
    1000.0
}
fn default_window_offset() -> f64 {
    3000.0
}
fn default_reps() -> u64 {
    1_000_000
}

/// Acquisition plan: which settings and delays are measured, and how often.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default = "default_rep_period")]
    pub rep_period: f64,
    #[serde(default = "default_bin_separation")]
    pub bin_separation: f64,
    #[serde(default = "default_window_halfwidth")]
    pub window_halfwidth: f64,
    /// Detection-window centre relative to the sync pulse (ps).
    #[serde(default = "default_window_offset")]
    pub window_offset: f64,
    #[serde(default)]
    pub delays: Vec<f64>,
    #[serde(default)]
    pub settings_list: Vec<Settings>,
    #[serde(default = "default_reps")]
    pub reps_per_setting: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            rep_period: default_rep_period(),
            bin_separation: default_bin_separation(),
            window_halfwidth: default_window_halfwidth(),
            window_offset: default_window_offset(),
            delays: vec![0.66],
            settings_list: chsh_settings().to_vec(),
            reps_per_setting: default_reps(),
            seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(self) -> Result<Self> {
        if !(self.rep_period > 0.0 && self.rep_period.is_finite()) {
            return Err(Error::param("plan.rep_period", "must be positive"));
        }
        if self.rep_period <= self.bin_separation {
            return Err(Error::param(
                "plan.rep_period",
                "repetition period must exceed the time-bin separation",
            ));
        }
        if !(self.window_halfwidth > 0.0) || self.window_halfwidth >= self.bin_separation / 2.0 {
            return Err(Error::param(
                "plan.window_halfwidth",
                "windows overlap: halfwidth must be in (0, bin_separation/2)",
            ));
        }
        if self.window_offset < self.window_halfwidth
            || self.window_offset + self.window_halfwidth >= self.rep_period
        {
            return Err(Error::param(
                "plan.window_offset",
                "window must lie between consecutive sync pulses",
            ));
        }
        if let Some(d) = self.delays.iter().find(|d| !d.is_finite()) {
            return Err(Error::param("plan.delays", format!("non-finite delay {d}")));
        }
        Ok(self)
    }

    /// The settings to measure; the four CHSH settings when none are listed.
    pub fn effective_settings(&self) -> Vec<Settings> {
        if self.settings_list.is_empty() {
            chsh_settings().to_vec()
        } else {
            self.settings_list.clone()
        }
    }

    /// The delays to measure; zero delay when none are listed.
    pub fn effective_delays(&self) -> Vec<f64> {
        if self.delays.is_empty() {
            vec![0.0]
        } else {
            self.delays.clone()
        }
    }

    /// Repetition period in femtoseconds, the integer unit used by tag streams.
    pub fn rep_period_fs(&self) -> u64 {
        (self.rep_period * 1000.0).round() as u64
    }
}

/// The four CHSH settings in the order (α, β) = (0, π/8), (0, −π/8),
/// (π/4, π/8), (π/4, −π/8).
pub fn chsh_settings() -> [Settings; 4] {
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};
    [
        Settings::new(0.0, FRAC_PI_8),
        Settings::new(0.0, -FRAC_PI_8),
        Settings::new(FRAC_PI_4, FRAC_PI_8),
        Settings::new(FRAC_PI_4, -FRAC_PI_8),
    ]
}

/// Top-level JSON configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub source: SourceParams,
    pub detectors: DetectorParams,
    pub vibration: VibrationParams,
    #[serde(default)]
    pub plan: ExperimentPlan,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.physics().validate()?;
        let plan = cfg.plan.clone().validate()?;
        Ok(Config { plan, ..cfg })
    }

    pub fn physics(&self) -> PhysicsParams {
        PhysicsParams {
            source: self.source,
            detectors: self.detectors,
            vibration: self.vibration,
        }
    }

    pub fn from_physics(p: PhysicsParams, plan: ExperimentPlan) -> Self {
        Config {
            source: p.source,
            detectors: p.detectors,
            vibration: p.vibration,
            plan,
        }
    }
}

/// Detected optical modes, in pattern-bit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    A = 0,
    APerp = 1,
    B = 2,
    BPerp = 3,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::A, Mode::APerp, Mode::B, Mode::BPerp];

    pub fn bit(self) -> u8 {
        1 << (3 - self as u8)
    }

    fn partner(self) -> Mode {
        match self {
            Mode::A => Mode::APerp,
            Mode::APerp => Mode::A,
            Mode::B => Mode::BPerp,
            Mode::BPerp => Mode::B,
        }
    }
}

/// Which detected mode feeds each side's "+" detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeMap {
    pub alice_plus: Mode,
    pub bob_plus: Mode,
}

impl Default for OutcomeMap {
    /// Alice "+" is detector A, Bob "+" is detector B⊥; at α = β = 0 these
    /// two modes hold the correlated pair.
    fn default() -> Self {
        OutcomeMap {
            alice_plus: Mode::A,
            bob_plus: Mode::BPerp,
        }
    }
}

impl OutcomeMap {
    pub fn validate(self) -> Result<Self> {
        if !matches!(self.alice_plus, Mode::A | Mode::APerp) {
            return Err(Error::param("outcome_map.alice_plus", "must be an Alice mode"));
        }
        if !matches!(self.bob_plus, Mode::B | Mode::BPerp) {
            return Err(Error::param("outcome_map.bob_plus", "must be a Bob mode"));
        }
        Ok(self)
    }

    pub fn alice_minus(&self) -> Mode {
        self.alice_plus.partner()
    }

    pub fn bob_minus(&self) -> Mode {
        self.bob_plus.partner()
    }

    /// Translates a model click pattern to labelled detector firings.
    pub fn label(&self, p: ClickPattern) -> LabeledClicks {
        LabeledClicks {
            alice_plus: p.fired(self.alice_plus),
            alice_minus: p.fired(self.alice_minus()),
            bob_plus: p.fired(self.bob_plus),
            bob_minus: p.fired(self.bob_minus()),
        }
    }

    /// Inverse of [`OutcomeMap::label`].
    pub fn pattern(&self, c: LabeledClicks) -> ClickPattern {
        let mut bits = 0u8;
        for (fired, mode) in [
            (c.alice_plus, self.alice_plus),
            (c.alice_minus, self.alice_minus()),
            (c.bob_plus, self.bob_plus),
            (c.bob_minus, self.bob_minus()),
        ] {
            if fired {
                bits |= mode.bit();
            }
        }
        ClickPattern(bits)
    }
}

/// Detector firings in one repetition, by outcome label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabeledClicks {
    pub alice_plus: bool,
    pub alice_minus: bool,
    pub bob_plus: bool,
    pub bob_minus: bool,
}

/// Click pattern over (A, A⊥, B, B⊥); index = 8·A + 4·A⊥ + 2·B + B⊥.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClickPattern(u8);

impl ClickPattern {
    pub const COUNT: usize = 16;

    pub fn new(a: bool, a_perp: bool, b: bool, b_perp: bool) -> Self {
        ClickPattern((a as u8) << 3 | (a_perp as u8) << 2 | (b as u8) << 1 | b_perp as u8)
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < 16, "pattern index {i} out of range");
        ClickPattern(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn fired(self, m: Mode) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn all() -> impl Iterator<Item = ClickPattern> {
        (0..16u8).map(ClickPattern)
    }
}

/// Probabilities of the 16 click patterns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternDistribution {
    p: [f64; 16],
}

impl PatternDistribution {
    const SUM_TOL: f64 = 1e-12;

    /// Validates and wraps a probability vector. Round-off negatives down to
    /// −1e-15 are clamped to zero.
    pub fn new(mut p: [f64; 16]) -> Result<Self> {
        for v in p.iter_mut() {
            if !v.is_finite() || *v < -1e-15 {
                return Err(Error::Domain(format!("negative pattern probability {v:e}")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::Domain(format!("pattern probabilities sum to {s}")));
        }
        Ok(PatternDistribution { p })
    }

    pub(crate) fn from_raw(p: [f64; 16]) -> Self {
        PatternDistribution { p }
    }

    pub fn as_array(&self) -> &[f64; 16] {
        &self.p
    }

    pub fn prob(&self, c: ClickPattern) -> f64 {
        self.p[c.index()]
    }

    /// Total probability of patterns satisfying `pred`.
    pub fn prob_where(&self, pred: impl Fn(ClickPattern) -> bool) -> f64 {
        ClickPattern::all()
            .filter(|&c| pred(c))
            .map(|c| self.p[c.index()])
            .sum()
    }

    /// Pattern distribution of four independent detectors each firing with probability `q`.
    pub fn independent(q: [f64; 4]) -> Self {
        let mut p = [0.0; 16];
        for c in ClickPattern::all() {
            p[c.index()] = Mode::ALL
                .iter()
                .map(|&m| if c.fired(m) { q[m as usize] } else { 1.0 - q[m as usize] })
                .product();
        }
        PatternDistribution { p }
    }
}

/// Coincidence and singles counts for one (setting, delay).
///
/// `n_xy` counts repetitions with exactly one click per side, Alice's
/// outcome first. Repetitions where both detectors of one side fired are kept
/// apart so that any binning rule can be applied downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsTable {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    /// Both Alice detectors fired, Bob "+".
    #[serde(default)]
    pub n_both_a_p: u64,
    #[serde(default)]
    pub n_both_a_m: u64,
    /// Both Bob detectors fired, Alice "+".
    #[serde(default)]
    pub n_both_b_p: u64,
    #[serde(default)]
    pub n_both_b_m: u64,
    #[serde(default)]
    pub n_both_ab: u64,
    #[serde(default)]
    pub singles_ap: u64,
    #[serde(default)]
    pub singles_am: u64,
    #[serde(default)]
    pub singles_bp: u64,
    #[serde(default)]
    pub singles_bm: u64,
    #[serde(default)]
    pub reps: u64,
}

/// Coincidences after resolving multi-click events to ±1 outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FoldedCounts {
    pub pp: u64,
    pub pm: u64,
    pub mp: u64,
    pub mm: u64,
}

impl FoldedCounts {
    pub fn total(&self) -> u64 {
        self.pp + self.pm + self.mp + self.mm
    }
}

impl CountsTable {
    /// Tallies one repetition.
    pub fn record(&mut self, c: LabeledClicks) {
        self.reps += 1;
        self.singles_ap += c.alice_plus as u64;
        self.singles_am += c.alice_minus as u64;
        self.singles_bp += c.bob_plus as u64;
        self.singles_bm += c.bob_minus as u64;
        let alice = (c.alice_plus, c.alice_minus);
        let bob = (c.bob_plus, c.bob_minus);
        match (alice, bob) {
            ((false, false), _) | (_, (false, false)) => {}
            ((true, true), (true, true)) => self.n_both_ab += 1,
            ((true, true), (bp, _)) => {
                if bp {
                    self.n_both_a_p += 1
                } else {
                    self.n_both_a_m += 1
                }
            }
            ((ap, _), (true, true)) => {
                if ap {
                    self.n_both_b_p += 1
                } else {
                    self.n_both_b_m += 1
                }
            }
            ((ap, _), (bp, _)) => match (ap, bp) {
                (true, true) => self.n_pp += 1,
                (true, false) => self.n_pm += 1,
                (false, true) => self.n_mp += 1,
                (false, false) => self.n_mm += 1,
            },
        }
    }

    /// Builds the table from per-pattern tallies over `reps` repetitions
    /// (tallies must sum to `reps`).
    pub fn from_pattern_tallies(tallies: &[u64; 16], map: &OutcomeMap) -> Self {
        let mut t = CountsTable::default();
        for c in ClickPattern::all() {
            let n = tallies[c.index()];
            if n == 0 {
                continue;
            }
            let mut one = CountsTable::default();
            one.record(map.label(c));
            t += one.scaled(n);
        }
        t
    }

    fn scaled(mut self, n: u64) -> Self {
        for f in self.fields_mut() {
            *f *= n;
        }
        self
    }

    fn fields_mut(&mut self) -> [&mut u64; 14] {
        [
            &mut self.n_pp,
            &mut self.n_pm,
            &mut self.n_mp,
            &mut self.n_mm,
            &mut self.n_both_a_p,
            &mut self.n_both_a_m,
            &mut self.n_both_b_p,
            &mut self.n_both_b_m,
            &mut self.n_both_ab,
            &mut self.singles_ap,
            &mut self.singles_am,
            &mut self.singles_bp,
            &mut self.singles_bm,
            &mut self.reps,
        ]
    }

    /// Applies the "+" precedence rule: a side where both detectors fired
    /// reports "+".
    pub fn folded(&self) -> FoldedCounts {
        FoldedCounts {
            pp: self.n_pp + self.n_both_a_p + self.n_both_b_p + self.n_both_ab,
            pm: self.n_pm + self.n_both_a_m,
            mp: self.n_mp + self.n_both_b_m,
            mm: self.n_mm,
        }
    }

    /// Repetitions with at least one click on each side.
    pub fn coincidences(&self) -> u64 {
        self.folded().total()
    }

    /// Checks that no coincidence category exceeds the repetition count.
    pub fn validate(&self) -> Result<()> {
        if self.reps > 0 && self.coincidences() > self.reps {
            return Err(Error::param("counts.reps", "more coincidences than repetitions"));
        }
        Ok(())
    }

    /// Returns the table with every count replaced by `f(count)`; `reps` is kept.
    pub fn map_counts(&self, mut f: impl FnMut(u64) -> u64) -> Self {
        let mut t = *self;
        let reps = t.reps;
        for v in t.fields_mut() {
            *v = f(*v);
        }
        t.reps = reps;
        t
    }
}

impl AddAssign for CountsTable {
    fn add_assign(&mut self, rhs: Self) {
        let mut rhs = rhs;
        for (a, b) in self.fields_mut().into_iter().zip(rhs.fields_mut()) {
            *a += *b;
        }
    }
}

/// Counts of one (setting, delay) block, as stored in counts files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsEntry {
    pub settings: Settings,
    pub delta_t: f64,
    pub counts: CountsTable,
}

/// Counts JSON document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub entries: Vec<CountsEntry>,
}

impl CountsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: CountsFile = serde_json::from_str(text)?;
        for e in &f.entries {
            e.counts.validate()?;
        }
        Ok(f)
    }

    /// Distinct delays in order of first appearance.
    pub fn delays(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.delta_t) {
                out.push(e.delta_t);
            }
        }
        out
    }
}

/// Tag-stream channel roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Sync = 0,
    AlicePlus = 1,
    AliceMinus = 2,
    BobPlus = 3,
    BobMinus = 4,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Sync,
        Channel::AlicePlus,
        Channel::AliceMinus,
        Channel::BobPlus,
        Channel::BobMinus,
    ];
}

impl TryFrom<u8> for Channel {
    type Error = u8;

    fn try_from(v: u8) -> std::result::Result<Self, u8> {
        Channel::ALL.get(v as usize).copied().ok_or(v)
    }
}

/// One detector or sync event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagRecord {
    pub time_ps: u64,
    pub channel: Channel,
}
