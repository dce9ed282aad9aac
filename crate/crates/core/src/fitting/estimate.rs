use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measured count rates from which source and detector parameters follow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    /// Stokes (Alice) singles rate, Hz.
    pub stokes_rate_hz: f64,
    /// Anti-Stokes rate at negative delay, Hz.
    pub antistokes_neg_delay_rate_hz: f64,
    /// Stokes/anti-Stokes coincidence rate, Hz.
    pub coinc_rate_hz: f64,
    pub rep_rate_hz: f64,
    pub eta_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub g: f64,
    pub mean_photon_number: f64,
    pub p_dc: f64,
    pub eta_b0: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Infers `(g, p_dc, η_B)` from singles, background and coincidence rates.
pub fn estimate_params(r: &RateInputs) -> Result<ParamEstimate> {
    if !(r.rep_rate_hz > 0.0 && r.rep_rate_hz.is_finite()) {
        return Err(Error::param("rep_rate_hz", "must be positive"));
    }
    if !(r.eta_a > 0.0 && r.eta_a <= 1.0) {
        return Err(Error::param("eta_a", "must lie in (0, 1]"));
    }
    let rates = [
        ("stokes_rate_hz", r.stokes_rate_hz),
        ("antistokes_neg_delay_rate_hz", r.antistokes_neg_delay_rate_hz),
        ("coinc_rate_hz", r.coinc_rate_hz),
    ];
    for (field, v) in rates {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::param(field, "must be finite and non-negative"));
        }
        if v > r.rep_rate_hz {
            return Err(Error::param(field, "exceeds the repetition rate"));
        }
    }
    if r.stokes_rate_hz == 0.0 {
        return Err(Error::param("stokes_rate_hz", "must be positive"));
    }
    if r.coinc_rate_hz > r.stokes_rate_hz {
        return Err(Error::param("coinc_rate_hz", "exceeds the Stokes rate"));
    }

    let mut warnings = Vec::new();
    let n = r.stokes_rate_hz / (r.rep_rate_hz * r.eta_a);
    let p_dc = r.antistokes_neg_delay_rate_hz / r.rep_rate_hz;
    let eta_b0 = r.coinc_rate_hz / r.stokes_rate_hz;
    if eta_b0 == 0.0 {
        warnings.push("zero coincidence rate: eta_b0 set to 0".to_string());
    }
    if p_dc == 0.0 {
        warnings.push("zero background rate: p_dc set to 0".to_string());
    }
    Ok(ParamEstimate {
        g: n.sqrt().asinh(),
        mean_photon_number: n,
        p_dc,
        eta_b0,
        warnings,
    })
}

/// Rates implied by a parameter set; the inverse of [`estimate_params`].
pub fn predicted_rates(g: f64, p_dc: f64, eta_b0: f64, rep_rate_hz: f64, eta_a: f64) -> RateInputs {
    let stokes = rep_rate_hz * eta_a * g.sinh().powi(2);
    RateInputs {
        stokes_rate_hz: stokes,
        antistokes_neg_delay_rate_hz: p_dc * rep_rate_hz,
        coinc_rate_hz: stokes * eta_b0,
        rep_rate_hz,
        eta_a,
    }
}

const CLAMP_TOL: f64 = 1e-9;
const REJECT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetarderPoint {
    pub voltage: f64,
    pub transmission: f64,
    /// Retardance `arccos(2T − 1)` (rad).
    pub delta: f64,
}

/// Calibration curve split into runs over which δ is strictly monotone in
/// voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetarderCalibration {
    pub points: Vec<RetarderPoint>,
    /// Inclusive index ranges `[start, end]` of monotone runs.
    pub segments: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Retardance from the normalized vertical transmission.
pub fn retardance(t: f64) -> f64 {
    (2.0 * t - 1.0).clamp(-1.0, 1.0).acos()
}

/// Converts `(voltage, T)` samples to a retardance curve. Samples are sorted
/// by voltage. `T` slightly outside `[0, 1]` is clamped with a warning.
pub fn calibrate_retarder(samples: &[(f64, f64)]) -> Result<RetarderCalibration> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no calibration samples".into()));
    }
    let mut warnings = Vec::new();
    let mut points = Vec::with_capacity(samples.len());
    for &(voltage, t) in samples {
        if !voltage.is_finite() || !t.is_finite() {
            return Err(Error::Degenerate(format!("non-finite sample ({voltage}, {t})")));
        }
        let excess = (-t).max(t - 1.0);
        if excess > REJECT_TOL {
            return Err(Error::Domain(format!("transmission {t} at {voltage} V outside [0, 1]")));
        }
        if excess > CLAMP_TOL {
            warnings.push(format!("transmission {t} at {voltage} V clamped to [0, 1]"));
        }
        let transmission = t.clamp(0.0, 1.0);
        points.push(RetarderPoint {
            voltage,
            transmission,
            delta: retardance(transmission),
        });
    }
    points.sort_by(|a, b| a.voltage.total_cmp(&b.voltage));
    if points.windows(2).any(|w| w[0].voltage == w[1].voltage) {
        return Err(Error::Degenerate("duplicate calibration voltage".into()));
    }

    let mut segments = Vec::new();
    let mut start = 0;
    let mut dir = 0.0f64;
    for i in 1..points.len() {
        let d = (points[i].delta - points[i - 1].delta).signum();
        let d = if points[i].delta == points[i - 1].delta { 0.0 } else { d };
        if dir == 0.0 {
            dir = d;
            if d == 0.0 {
                start = i;
            }
        } else if d != dir {
            segments.push((start, i - 1));
            start = i - 1;
            dir = d;
            if d == 0.0 {
                start = i;
            }
        }
    }
    if points.len() == 1 || start < points.len() - 1 {
        segments.push((start, points.len() - 1));
    }
    Ok(RetarderCalibration {
        points,
        segments,
        warnings,
    })
}

impl RetarderCalibration {
    /// Voltages at which the curve reaches `delta`, one per monotone segment
    /// that brackets it, by linear interpolation.
    pub fn voltages_for(&self, delta: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for &(s, e) in &self.segments {
            for i in s..e {
                let (p, q) = (self.points[i], self.points[i + 1]);
                let (lo, hi) = (p.delta.min(q.delta), p.delta.max(q.delta));
                if delta < lo || delta > hi || lo == hi {
                    continue;
                }
                let f = (delta - p.delta) / (q.delta - p.delta);
                let v = p.voltage + f * (q.voltage - p.voltage);
                if out.last().is_none_or(|&l: &f64| (l - v).abs() > 1e-12) {
                    out.push(v);
                }
                break;
            }
        }
        out
    }

    /// Lowest voltage reaching `delta`.
    pub fn voltage_for(&self, delta: f64) -> Result<f64> {
        self.voltages_for(delta)
            .into_iter()
            .min_by(f64::total_cmp)
            .ok_or_else(|| Error::Domain(format!("retardance {delta} outside the calibrated range")))
    }
}
