//! Correlators, CHSH value and the finite-statistics lower bound.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use super::beta::inverse_reg_inc_beta;
use super::bootstrap::Resample;
use crate::error::{Error, Result};
use crate::model::{CountsTable, Settings};

/// `E = (n₊₊ + n₋₋ − n₊₋ − n₋₊) / total`, after resolving multi-click
/// events with "+" precedence.
pub fn e_from_counts(counts: &CountsTable) -> Result<f64> {
    let f = counts.folded();
    let total = f.total();
    if total == 0 {
        return Err(Error::ZeroDenominator("correlator: no coincidences"));
    }
    Ok(((f.pp + f.mm) as f64 - (f.pm + f.mp) as f64) / total as f64)
}

/// Retarder phases assigned to the input bits: Alice's bit x selects
/// `theta[x]`, Bob's bit y selects `phi[y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingMap {
    pub theta: [f64; 2],
    pub phi: [f64; 2],
}

impl Default for SettingMap {
    fn default() -> Self {
        SettingMap {
            theta: [0.0, FRAC_PI_2],
            phi: [FRAC_PI_4, -FRAC_PI_4],
        }
    }
}

impl SettingMap {
    pub fn settings(&self, x: usize, y: usize) -> Settings {
        Settings::from_retarders(self.theta[x], self.phi[y])
    }

    /// Input bits of `s`, if it is one of the four mapped settings.
    pub fn bits(&self, s: &Settings) -> Option<(usize, usize)> {
        const TOL: f64 = 1e-9;
        let x = self.theta.iter().position(|t| (t - s.theta()).abs() < TOL)?;
        let y = self.phi.iter().position(|p| (p - s.phi_retarder()).abs() < TOL)?;
        Some((x, y))
    }

    fn validate(&self) -> Result<()> {
        if self.theta[0] == self.theta[1] || self.phi[0] == self.phi[1] {
            return Err(Error::param("setting_map", "mapping must be bijective"));
        }
        Ok(())
    }
}

/// Counts of a CHSH run, indexed by Alice's and Bob's input bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellRunData {
    pub counts: [[CountsTable; 2]; 2],
    pub map: SettingMap,
}

impl BellRunData {
    pub fn new(counts: [[CountsTable; 2]; 2], map: SettingMap) -> Result<Self> {
        map.validate()?;
        Ok(BellRunData { counts, map })
    }

    /// Assembles the four tables from (settings, counts) pairs; every mapped
    /// setting must appear exactly once.
    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (&'a Settings, &'a CountsTable)>,
        map: SettingMap,
    ) -> Result<Self> {
        map.validate()?;
        let mut slots: [[Option<CountsTable>; 2]; 2] = Default::default();
        for (s, c) in entries {
            if let Some((x, y)) = map.bits(s) {
                if slots[x][y].replace(*c).is_some() {
                    return Err(Error::param("counts", format!("setting (x={x}, y={y}) appears twice")));
                }
            }
        }
        let mut counts = [[CountsTable::default(); 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                counts[x][y] = slots[x][y].ok_or_else(|| {
                    Error::param("counts", format!("setting (x={x}, y={y}) missing"))
                })?;
            }
        }
        Ok(BellRunData { counts, map })
    }

    pub fn correlator(&self, x: usize, y: usize) -> Result<f64> {
        e_from_counts(&self.counts[x][y])
    }
}

impl Resample for BellRunData {
    fn resample(&self, draw: &mut dyn FnMut(u64) -> u64) -> Self {
        BellRunData {
            counts: self.counts.resample(draw),
            map: self.map,
        }
    }
}

/// `S = E(x₀,y₁) + E(x₁,y₀) + E(x₀,y₀) − E(x₁,y₁)`.
pub fn s_from_counts(data: &BellRunData) -> Result<f64> {
    Ok(data.correlator(0, 1)? + data.correlator(1, 0)? + data.correlator(0, 0)?
        - data.correlator(1, 1)?)
}

/// CHSH game score: 1 when `a ⊕ b = x·y`.
pub fn game_score(a: bool, b: bool, x: bool, y: bool) -> u8 {
    ((a ^ b) == (x & y)) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceResult {
    /// Mean game score over post-selected rounds.
    pub t_bar: f64,
    /// Lower confidence bound on the winning probability.
    pub q_min: f64,
    /// Lower confidence bound on S.
    pub s_min: f64,
    /// Point estimate `8·T̄ − 4`.
    pub s_point: f64,
    pub alpha: f64,
    pub n: u64,
}

/// Rounds and wins over the post-selected rounds of all four settings.
/// Outcome bit 0 is "+".
pub fn game_tally(data: &BellRunData) -> (u64, u64) {
    let mut n = 0;
    let mut wins = 0;
    for (x, row) in data.counts.iter().enumerate() {
        for (y, c) in row.iter().enumerate() {
            let f = c.folded();
            for (a, b, k) in [
                (false, false, f.pp),
                (false, true, f.pm),
                (true, false, f.mp),
                (true, true, f.mm),
            ] {
                n += k;
                wins += k * game_score(a, b, x == 1, y == 1) as u64;
            }
        }
    }
    (n, wins)
}

/// Lower bound `q_min = I⁻¹_α(n·T̄, n(1−T̄) + 1)` on the mean winning
/// probability and `S_min = 8·q_min − 4`.
pub fn bell_confidence(data: &BellRunData, alpha: f64) -> Result<ConfidenceResult> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::param("alpha", "must lie in (0, 1/2]"));
    }
    let (n, wins) = game_tally(data);
    if n == 0 {
        return Err(Error::ZeroDenominator("confidence bound: no post-selected rounds"));
    }
    let t_bar = wins as f64 / n as f64;
    let losses = (n - wins) as f64;
    let q_min = if wins == 0 {
        0.0
    } else {
        inverse_reg_inc_beta(alpha, wins as f64, losses + 1.0)?
    };
    Ok(ConfidenceResult {
        t_bar,
        q_min,
        s_min: 8.0 * q_min - 4.0,
        s_point: 8.0 * t_bar - 4.0,
        alpha,
        n,
    })
}
