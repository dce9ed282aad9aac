//! Closed-form click statistics: the effective measured state, click-pattern
//! probabilities, g², interference visibilities, correlators and CHSH values
//! and their evolution with write–read delay.

mod kernel;
mod phase;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

pub use kernel::{
    noclick_generating, pattern_probs_fixed_phase, schmidt_matrix, AttenuationVector, ClickModel,
    SchmidtMatrix,
};
pub use phase::{gauss_hermite, gaussian_phase_average};

use crate::error::{Error, Result};
use crate::model::{chsh_settings, OutcomeMap, PatternDistribution, PhysicsParams, Settings};

/// Tsirelson bound plus round-off slack.
const CHSH_GUARD: f64 = 2.0 * SQRT_2 + 1e-9;

/// Effective parameters at one write–read delay: Bob's efficiency already
/// decayed and the phase spread already combined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub g: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub p_dc: f64,
    /// Total phase standard deviation (rad).
    pub sigma: f64,
}

impl OperatingPoint {
    /// Operating point after delay `delta_t`, with `σ² = σ_tech² + γΔt`.
    pub fn at_delay(params: &PhysicsParams, delta_t: f64) -> Result<Self> {
        Ok(OperatingPoint {
            g: params.source.g,
            eta_a: params.detectors.eta_a,
            eta_b: eta_b_decay(
                params.detectors.eta_b0,
                delta_t,
                params.vibration.tau_phonon,
            )?,
            p_dc: params.detectors.p_dc,
            sigma: params.sigma_total(delta_t),
        })
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        OperatingPoint { sigma, ..self }
    }

    pub fn lambda(&self) -> f64 {
        self.g.tanh().powi(2)
    }

    /// Efficiencies of (A, A⊥, B, B⊥); each arm's two detectors are equal.
    pub fn efficiencies(&self) -> [f64; 4] {
        [self.eta_a, self.eta_a, self.eta_b, self.eta_b]
    }

    fn click_model(&self, settings: &Settings, phi: f64) -> Result<ClickModel> {
        ClickModel::new(
            &schmidt_matrix(settings, phi, self.g),
            self.efficiencies(),
            self.p_dc,
        )
    }
}

/// Bob's efficiency after storing the phonon for `delta_t`: `η_B0·e^{−Δt/τ}`.
pub fn eta_b_decay(eta_b0: f64, delta_t: f64, tau: f64) -> Result<f64> {
    if delta_t < 0.0 {
        return Err(Error::AcausalDelay(delta_t));
    }
    Ok(eta_b0 * (-delta_t / tau).exp())
}

/// Pattern distribution averaged over the run phase `φ ~ N(0, σ²)`.
pub fn pattern_probs_avg(settings: &Settings, op: &OperatingPoint) -> Result<PatternDistribution> {
    let p = gaussian_phase_average(op.sigma, |phi| Ok(op.click_model(settings, phi)?.patterns()))?;
    PatternDistribution::new(p)
}

/// Pattern distribution at `params` after delay `delta_t`.
pub fn pattern_probs_at_delay(
    settings: &Settings,
    params: &PhysicsParams,
    delta_t: f64,
) -> Result<PatternDistribution> {
    pattern_probs_avg(settings, &OperatingPoint::at_delay(params, delta_t)?)
}

/// Cross-correlation g² between Alice's "+" and Bob's "+" detector at
/// α = β = 0, in closed form.
///
/// The expression is the usual
/// `[1 − a − b + c] / [(1 − a)(1 − b)]` with `a = (1−p)G_A`, `b = (1−p)G_B`,
/// `c = (1−p)²G_AB`, rearranged as
/// `1 + (1−p)²(G_AB − G_A G_B) / [(1 − a)(1 − b)]` where
/// `G_AB − G_A G_B = (1−λ)λη_Aη_B / [(1−λx_A)(1−λx_B)(1−λx_A x_B)]`,
/// which keeps full relative precision when every click probability is tiny.
pub fn g2_closed_form(op: &OperatingPoint) -> Result<f64> {
    let lam = op.lambda();
    let p = op.p_dc;
    let (xa, xb) = (1.0 - op.eta_a, 1.0 - op.eta_b);
    let click_a = p + (1.0 - p) * lam * op.eta_a / (1.0 - lam * xa);
    let click_b = p + (1.0 - p) * lam * op.eta_b / (1.0 - lam * xb);
    if click_a == 0.0 || click_b == 0.0 {
        return Err(Error::NoClicks);
    }
    let cov = (1.0 - p).powi(2) * (1.0 - lam) * lam * op.eta_a * op.eta_b
        / ((1.0 - lam * xa) * (1.0 - lam * xb) * (1.0 - lam * xa * xb));
    Ok(1.0 + cov / (click_a * click_b))
}

/// g² from the four-detector pattern probabilities: `P(A⁺∩B⁺) / (P(A⁺)P(B⁺))`
/// at α = β = 0.
pub fn g2_from_patterns(op: &OperatingPoint) -> Result<f64> {
    let map = OutcomeMap::default();
    let cm = op.click_model(&Settings::default(), 0.0)?;
    let (a, b) = (map.alice_plus.bit(), map.bob_plus.bit());
    let pa = cm.event(a, 0);
    let pb = cm.event(b, 0);
    if pa == 0.0 || pb == 0.0 {
        return Err(Error::NoClicks);
    }
    Ok(cm.event(a | b, 0) / (pa * pb))
}

/// g² at delay `delta_t`.
pub fn g2_analytic(params: &PhysicsParams, delta_t: f64) -> Result<f64> {
    g2_closed_form(&OperatingPoint::at_delay(params, delta_t)?)
}

/// `V = (g² − 1)/(g² + 1)`.
pub fn v_from_g2(g2: f64) -> f64 {
    (g2 - 1.0) / (g2 + 1.0)
}

/// Inverse of [`v_from_g2`]: the g² needed for visibility `v`.
pub fn g2_for_visibility(v: f64) -> f64 {
    (1.0 + v) / (1.0 - v)
}

/// Probability that Alice's and Bob's "+" detectors both fire.
fn plus_plus_coincidence(settings: &Settings, op: &OperatingPoint) -> Result<f64> {
    let map = OutcomeMap::default();
    let mask = map.alice_plus.bit() | map.bob_plus.bit();
    let [p] = gaussian_phase_average(op.sigma, |phi| Ok([op.click_model(settings, phi)?.event(mask, 0)]))?;
    Ok(p)
}

fn contrast(hi: f64, lo: f64) -> Result<f64> {
    let (hi, lo) = (hi.max(lo), hi.min(lo));
    if hi + lo == 0.0 {
        return Err(Error::NoClicks);
    }
    Ok((hi - lo) / (hi + lo))
}

/// Visibility of the α = 0 coincidence fringe over β (extremes at β = 0 and π/2).
///
/// At α = 0 the fringe does not depend on the run phase.
pub fn visibility_alpha0(op: &OperatingPoint) -> Result<f64> {
    let op0 = op.with_sigma(0.0);
    let hi = plus_plus_coincidence(&Settings::new(0.0, 0.0), &op0)?;
    let lo = plus_plus_coincidence(&Settings::new(0.0, FRAC_PI_2), &op0)?;
    contrast(hi, lo)
}

/// Evaluation mode of the α = π/4 visibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibilityMode {
    /// Full phase average by quadrature.
    Quadrature,
    /// Second-order expansion of the phase average in σ.
    Taylor,
}

/// Second-order-in-σ coincidence probability at α = π/4 (unnormalized).
///
/// The phase-sensitive term is `(1−p)²·(2/cosh⁴g) / (ζ − ξ(cos 2φ − 1))` with
/// `ζ = 2 − (2−η_A)(2−η_B)λ − η_Aη_B sin(2β)λ + 2(1−η_A)(1−η_B)λ²` and
/// `ξ = η_Aη_B sin(2β)λ`; its Gaussian average is `1/ζ − 2ξσ²/ζ²`.
pub fn taylor_coincidence_pi4(op: &OperatingPoint, beta: f64) -> f64 {
    let lam = op.lambda();
    let (ea, eb, p) = (op.eta_a, op.eta_b, op.p_dc);
    let s2b = (2.0 * beta).sin();
    let zeta = 2.0 - (2.0 - ea) * (2.0 - eb) * lam - ea * eb * s2b * lam
        + 2.0 * (1.0 - ea) * (1.0 - eb) * lam * lam;
    let xi = ea * eb * s2b * lam;
    let ch4 = op.g.cosh().powi(4);
    let ga = (1.0 - lam) / (1.0 - lam * (1.0 - ea));
    let gb = (1.0 - lam) / (1.0 - lam * (1.0 - eb));
    let sigma2 = op.sigma * op.sigma;
    1.0 - (1.0 - p) * ga - (1.0 - p) * gb
        + (1.0 - p).powi(2) * 2.0 / ch4 * (1.0 / zeta - 2.0 * xi * sigma2 / (zeta * zeta))
}

/// Visibility of the α = π/4 coincidence fringe over β (extremes at β = π/4
/// and 3π/4) under phase spread `op.sigma`.
pub fn visibility_alpha_pi4(op: &OperatingPoint, mode: VisibilityMode) -> Result<f64> {
    let (b_hi, b_lo) = (FRAC_PI_4, 3.0 * FRAC_PI_4);
    match mode {
        VisibilityMode::Quadrature => {
            let hi = plus_plus_coincidence(&Settings::new(FRAC_PI_4, b_hi), op)?;
            let lo = plus_plus_coincidence(&Settings::new(FRAC_PI_4, b_lo), op)?;
            contrast(hi, lo)
        }
        VisibilityMode::Taylor => contrast(
            taylor_coincidence_pi4(op, b_hi),
            taylor_coincidence_pi4(op, b_lo),
        ),
    }
}

/// Correlator from a pattern distribution, post-selected on at least one
/// click per side. Alice reports +1 whenever her "+" detector fired, Bob
/// likewise; only single clicks on the "−" detector give −1.
pub fn correlation_from_patterns(dist: &PatternDistribution, map: &OutcomeMap) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for c in crate::model::ClickPattern::all() {
        let l = map.label(c);
        let alice = l.alice_plus || l.alice_minus;
        let bob = l.bob_plus || l.bob_minus;
        if !(alice && bob) {
            continue;
        }
        let a = if l.alice_plus { 1.0 } else { -1.0 };
        let b = if l.bob_plus { 1.0 } else { -1.0 };
        let p = dist.prob(c);
        num += a * b * p;
        den += p;
    }
    if den <= 0.0 {
        return Err(Error::ZeroPostSelection);
    }
    Ok(num / den)
}

/// Post-selected correlator E for `settings` at operating point `op`.
pub fn correlation_e(settings: &Settings, op: &OperatingPoint) -> Result<f64> {
    correlation_from_patterns(&pattern_probs_avg(settings, op)?, &OutcomeMap::default())
}

/// CHSH combination `E(0,π/8) + E(0,−π/8) + E(π/4,π/8) − E(π/4,−π/8)`.
pub fn chsh_at(op: &OperatingPoint) -> Result<f64> {
    let [s1, s2, s3, s4] = chsh_settings();
    let s = correlation_e(&s1, op)? + correlation_e(&s2, op)? + correlation_e(&s3, op)?
        - correlation_e(&s4, op)?;
    if s.abs() > CHSH_GUARD {
        return Err(Error::Domain(format!("CHSH value {s} beyond the Tsirelson bound")));
    }
    Ok(s)
}

/// CHSH value after delay `delta_t` with technical phase noise `sigma_tech`
/// and the pure dephasing rate of `params`.
pub fn chsh_analytic(params: &PhysicsParams, delta_t: f64, sigma_tech: f64) -> Result<f64> {
    let mut p = *params;
    p.source.sigma_tech = sigma_tech;
    chsh_at(&OperatingPoint::at_delay(&p, delta_t)?)
}

/// Pure-dephasing law `S(Δt) = (S₀/2)(1 + e^{−2γΔt})`; `s0` is the γ = 0
/// prediction at the same delay.
pub fn chsh_dephasing_curve(s0: f64, gamma: f64, delta_t: f64) -> f64 {
    s0 / 2.0 * (1.0 + (-2.0 * gamma * delta_t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowStatus {
    /// S drops below 2 within the horizon.
    Bounded,
    /// S ≤ 2 already at zero delay.
    NoViolation,
    /// S stays above 2 up to the horizon; the reported window is the horizon.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationWindow {
    pub duration: f64,
    pub status: WindowStatus,
}

/// Default delay horizon for [`violation_window`] (ps).
pub const DEFAULT_HORIZON: f64 = 500.0;

/// Largest delay for which the CHSH value exceeds 2, to 0.01 ps.
pub fn violation_window(params: &PhysicsParams, horizon: f64) -> Result<ViolationWindow> {
    let sigma = params.source.sigma_tech;
    let excess = |dt: f64| chsh_analytic(params, dt, sigma).map(|s| s - 2.0);
    if excess(0.0)? <= 0.0 {
        return Ok(ViolationWindow {
            duration: 0.0,
            status: WindowStatus::NoViolation,
        });
    }
    // Scan backwards from the horizon for the last sign change.
    let step = (params.vibration.tau_phonon / 4.0).min(horizon);
    let n = (horizon / step).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(horizon)).collect();
    if excess(horizon)? > 0.0 {
        return Ok(ViolationWindow {
            duration: horizon,
            status: WindowStatus::Capped,
        });
    }
    let mut hi = horizon;
    let mut lo = 0.0;
    for w in grid.windows(2).rev() {
        if excess(w[0])? > 0.0 {
            lo = w[0];
            hi = w[1];
            break;
        }
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ViolationWindow {
        duration: 0.5 * (lo + hi),
        status: WindowStatus::Bounded,
    })
}

/// Squeezing parameter in `[g_lo, g_hi]` that maximizes the violation window
/// (golden-section search). Returns `(g, window)`.
pub fn optimal_squeezing(
    params: &PhysicsParams,
    g_lo: f64,
    g_hi: f64,
    horizon: f64,
) -> Result<(f64, ViolationWindow)> {
    let window = |g: f64| {
        let mut p = *params;
        p.source.g = g;
        violation_window(&p, horizon)
    };
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (g_lo, g_hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = window(c)?.duration;
    let mut fd = window(d)?.duration;
    while b - a > 1e-3 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = window(c)?.duration;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = window(d)?.duration;
        }
    }
    let g = 0.5 * (a + b);
    Ok((g, window(g)?))
}
