use serde::{Deserialize, Serialize};

use super::simplex::{multistart, SimplexOptions};
use crate::error::{Error, Result};

/// FWHM of a Gaussian in units of its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// One measured point with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl Sample {
    /// Unweighted sample.
    pub fn new(x: f64, y: f64) -> Self {
        Sample { x, y, sigma: 1.0 }
    }

    fn weight(&self) -> f64 {
        1.0 / (self.sigma * self.sigma)
    }
}

fn check_samples(samples: &[Sample]) -> Result<()> {
    if let Some(s) = samples
        .iter()
        .find(|s| !(s.x.is_finite() && s.y.is_finite() && s.sigma > 0.0 && s.sigma.is_finite()))
    {
        return Err(Error::Degenerate(format!("invalid sample {s:?}")));
    }
    Ok(())
}

/// `exp(a)·erfc(z)` without overflow for large `z`.
fn exp_erfc(a: f64, z: f64) -> f64 {
    let e = libm::erfc(z);
    if e > 1e-290 {
        return (a + e.ln()).exp();
    }
    // erfc(z) ≈ e^{−z²}/(z√π)·(1 − 1/(2z²) + 3/(4z⁴) − 15/(8z⁶))
    let z2 = z * z;
    let series = 1.0 - 0.5 / z2 + 0.75 / (z2 * z2) - 1.875 / (z2 * z2 * z2);
    (a - z2).exp() * series / (z * std::f64::consts::PI.sqrt())
}

/// One-sided exponential `Θ(t)e^{−t/τ}` convolved with a unit-area Gaussian
/// of standard deviation `sigma`:
/// `½·exp(σ²/2τ² − t/τ)·erfc((σ/τ − t/σ)/√2)`.
pub fn emg(t: f64, tau: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return if t > 0.0 {
            (-t / tau).exp()
        } else if t == 0.0 {
            0.5
        } else {
            0.0
        };
    }
    let a = sigma * sigma / (2.0 * tau * tau) - t / tau;
    let z = (sigma / tau - t / sigma) / std::f64::consts::SQRT_2;
    0.5 * exp_erfc(a, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub amplitude: f64,
    /// Decay constant (ps).
    pub tau: f64,
    /// Gaussian IRF standard deviation (ps), held fixed.
    pub irf_sigma: f64,
    /// Baseline, fixed at 1.
    pub baseline: f64,
    /// `sqrt(Σ wᵢ rᵢ²)`.
    pub residual_norm: f64,
}

impl DecayFit {
    pub fn predict(&self, dt: f64) -> f64 {
        self.baseline + self.amplitude * emg(dt, self.tau, self.irf_sigma)
    }
}

/// Least-squares fit of `g²(Δt) = 1 + A·emg(Δt; τ, σ_irf)` with the IRF width
/// fixed from its FWHM. Three simplex runs over (ln A, ln τ) start from the
/// 1/e-crossing estimate of τ and from a third and three times that.
pub fn fit_g2_decay(samples: &[Sample], irf_fwhm_ps: f64) -> Result<DecayFit> {
    check_samples(samples)?;
    if samples.len() < 4 {
        return Err(Error::Degenerate("decay fit needs at least 4 samples".into()));
    }
    if !(irf_fwhm_ps >= 0.0) {
        return Err(Error::param("irf_fwhm_ps", "must be non-negative"));
    }
    let sigma = irf_fwhm_ps / FWHM_PER_SIGMA;
    let peak = samples
        .iter()
        .max_by(|a, b| a.y.total_cmp(&b.y))
        .copied()
        .unwrap();
    let excess = peak.y - 1.0;
    let spread = samples.iter().map(|s| (s.y - 1.0).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 || excess <= 0.0 {
        return Err(Error::Degenerate("no decay signal".into()));
    }
    let t_max = samples.iter().map(|s| s.x).fold(f64::MIN, f64::max);
    if t_max <= peak.x {
        return Err(Error::Degenerate("samples do not span the decay".into()));
    }
    let tau0 = samples
        .iter()
        .filter(|s| s.x > peak.x && s.y - 1.0 <= excess / std::f64::consts::E)
        .map(|s| s.x - peak.x)
        .fold(f64::NAN, f64::min);
    let tau0 = if tau0.is_finite() && tau0 > 0.0 {
        tau0
    } else {
        t_max - peak.x
    };

    let chi2 = |p: &[f64]| {
        let (a, tau) = (p[0].exp(), p[1].exp());
        samples
            .iter()
            .map(|s| {
                let r = s.y - 1.0 - a * emg(s.x, tau, sigma);
                s.weight() * r * r
            })
            .sum::<f64>()
    };
    let start = |tau: f64| {
        let amp = excess / emg(peak.x, tau, sigma).max(1e-300);
        vec![amp.ln(), tau.ln()]
    };
    let starts = [start(tau0), start(tau0 / 3.0), start(tau0 * 3.0)];
    let opts = SimplexOptions {
        f_tol: 1e-16,
        x_tol: 1e-11,
        ..Default::default()
    };
    let best = multistart(chi2, &starts, opts)?;
    Ok(DecayFit {
        amplitude: best.x[0].exp(),
        tau: best.x[1].exp(),
        irf_sigma: sigma,
        baseline: 1.0,
        residual_norm: best.value.sqrt(),
    })
}

/// Pure-dephasing model `(s₀/2)(1 + e^{−2γΔt})`.
fn dephased(s0: f64, gamma: f64, dt: f64) -> f64 {
    s0 / 2.0 * (1.0 + (-2.0 * gamma * dt).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingFit {
    /// Best-fit rate (1/ps), constrained to γ ≥ 0.
    pub gamma: f64,
    /// Weighted χ² at the best fit.
    pub chi2: f64,
    /// One-sided 95 % upper limit on γ (Δχ² = 2.706); `None` if the data
    /// never exclude large rates.
    pub gamma_upper: Option<f64>,
    /// Residuals `S − model` at the best fit.
    pub residuals: Vec<f64>,
    /// χ² at each caller-supplied grid rate.
    pub chi2_curve: Vec<(f64, f64)>,
}

const DELTA_CHI2_95: f64 = 2.706;

/// Least-squares pure-dephasing rate for measured `S(Δt)` samples given the
/// zero-dephasing prediction `s0[i]` at each sample's delay.
pub fn extract_dephasing(samples: &[Sample], s0: &[f64], gamma_grid: &[f64]) -> Result<DephasingFit> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no samples".into()));
    }
    check_samples(samples)?;
    if s0.len() != samples.len() {
        return Err(Error::param("s0", "one prediction per sample required"));
    }
    if samples.iter().any(|s| s.x < 0.0) {
        return Err(Error::AcausalDelay(
            samples.iter().map(|s| s.x).fold(f64::MAX, f64::min),
        ));
    }
    let chi2 = |gamma: f64| {
        samples
            .iter()
            .zip(s0)
            .map(|(s, &s0)| {
                let r = s.y - dephased(s0, gamma, s.x);
                s.weight() * r * r
            })
            .sum::<f64>()
    };
    let t_min = samples
        .iter()
        .map(|s| s.x)
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !t_min.is_finite() {
        return Err(Error::Degenerate("all samples at zero delay".into()));
    }
    let t_max = samples.iter().map(|s| s.x).fold(0.0, f64::max);

    // Coarse log scan over rates from far below to far above 1/t.
    let lo = 1e-6 / t_max;
    let hi = 50.0 / t_min;
    let n = 400;
    let mut grid = vec![0.0];
    grid.extend((0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)));
    let vals: Vec<f64> = grid.iter().map(|&g| chi2(g)).collect();
    let k = (0..grid.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(grid.len() - 1)]);

    // Golden-section refinement inside the bracketing cell pair.
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (chi2(c), chi2(d));
    for _ in 0..200 {
        if b - a <= 1e-14 * b.max(1e-300) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = chi2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = chi2(d);
        }
    }
    let mut gamma = 0.5 * (a + b);
    if chi2(0.0) <= chi2(gamma) {
        gamma = 0.0;
    }
    let best = chi2(gamma);

    let target = best + DELTA_CHI2_95;
    let gamma_upper = if chi2(hi) < target {
        None
    } else {
        let (mut l, mut h) = (gamma, hi);
        while h - l > 1e-12 * h {
            let m = 0.5 * (l + h);
            if chi2(m) < target {
                l = m;
            } else {
                h = m;
            }
        }
        Some(0.5 * (l + h))
    };

    Ok(DephasingFit {
        gamma,
        chi2: best,
        gamma_upper,
        residuals: samples
            .iter()
            .zip(s0)
            .map(|(s, &s0)| s.y - dephased(s0, gamma, s.x))
            .collect(),
        chi2_curve: gamma_grid.iter().map(|&g| (g, chi2(g))).collect(),
    })
}
